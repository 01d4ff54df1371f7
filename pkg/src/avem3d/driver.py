"""The adaptive loop: data sampling, solve, estimate, Dörfler marking, refinement."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from . import estimator, system, vem
from .mesh import MeshForest
from .quadrature import h1_error

log = logging.getLogger(__name__)


@dataclass
class ProblemSpec:
    """Dirichlet diffusion-reaction problem on a union of unit cubes.

    ``K`` is ``None`` (identity), a constant 3x3 matrix or a callable
    returning (n, 3, 3); ``c`` and ``f`` are constants or callables on
    (n, 3) point arrays; ``g`` gives the Dirichlet data.
    """

    cubes: list
    f: object
    g: Callable
    K: object = None
    c: object = 0.0
    u_exact: Optional[Callable] = None
    grad_exact: Optional[Callable] = None
    name: str = "custom"
    singular_point: Optional[tuple] = None
    grad_norm_sq: Optional[Callable[[], float]] = None


@dataclass
class GalerkinConfig:
    lambda_max: int = 10  # 0 runs the conforming (finite element) loop
    theta: float = 0.5
    gamma: float = 1.0
    tol: float = 0.0
    max_ndofs: int = 38000
    cg_tol: float = 1e-10
    cg_max_iter: Optional[int] = None
    f_sampling: str = "centroid"
    check_orthogonality: bool = False
    max_iterations: Optional[int] = None

    def validate(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if int(self.lambda_max) != self.lambda_max or self.lambda_max < 0:
            raise ValueError("lambda_max must be a nonnegative integer")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")
        if self.tol < 0.0 or not self.cg_tol > 0.0:
            raise ValueError("tolerances must be nonnegative (cg_tol positive)")
        if self.max_ndofs < 1:
            raise ValueError("max_ndofs must be positive")
        if self.f_sampling not in ("centroid", "mean4"):
            raise ValueError("f_sampling must be 'centroid' or 'mean4'")

    @property
    def mode(self):
        return "conforming" if self.lambda_max == 0 else "admissible"


@dataclass
class IterationRecord:
    iter: int
    ndofs: int
    ncells: int
    h1err: float
    eta: float
    stab: float
    lambda_max: int
    n_marked: int
    n_refined: int
    cg_iters: int
    qo_residual: float = field(default=math.nan, compare=False)

    @property
    def eta2(self):
        return self.eta * self.eta

    @classmethod
    def csv_fields(cls):
        return [f.name for f in fields(cls) if f.compare]


@dataclass
class IterationState:
    """Everything computed on one mesh, handed to loop callbacks."""

    mesh: MeshForest
    snap: object
    u: np.ndarray
    data: system.ElementData
    report: estimator.EstimatorReport


class GalerkinError(RuntimeError):
    pass


# points of the 4-point degree-2 rule
_Q4A, _Q4B = 0.5854101966249685, 0.1381966011250105
_Q4 = np.full((4, 4), _Q4B) + np.eye(4) * (_Q4A - _Q4B)


def _eval_field(fun, pts, shape):
    if fun is None:
        return None
    if callable(fun):
        return np.asarray(fun(pts), dtype=float).reshape((len(pts),) + shape)
    return np.broadcast_to(np.asarray(fun, dtype=float), (len(pts),) + shape).copy()


def approximate_data(problem, snap, f_sampling="centroid"):
    """Element-wise constant data: values at the centroid (``f`` optionally a 4-point mean)."""
    P = snap.coords[snap.verts]
    cen = P.mean(axis=1)
    K = _eval_field(problem.K, cen, (3, 3))
    if K is None:
        K = np.broadcast_to(np.eye(3), (len(cen), 3, 3)).copy()
    c = _eval_field(problem.c, cen, ())
    if f_sampling == "mean4" and callable(problem.f):
        pts = np.einsum("qk,nka->nqa", _Q4, P).reshape(-1, 3)
        f = _eval_field(problem.f, pts, ()).reshape(len(cen), 4).mean(axis=1)
    else:
        f = _eval_field(problem.f, cen, ())
    data = system.ElementData(K, c, f)
    data.validate()
    return data


def dorfler_mark(eta2, theta, ids=None):
    """Shortest prefix of the indicators sorted descending carrying ``theta`` of the total.

    Ties are broken by ``ids`` ascending (positions when not given).
    Returns the selected ids as a sorted array.
    """
    eta2 = np.asarray(eta2, dtype=float)
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    ids = np.arange(len(eta2)) if ids is None else np.asarray(ids)
    if len(eta2) == 0:
        return ids[:0]
    order = np.lexsort((ids, -eta2))
    cum = np.cumsum(eta2[order])
    total = cum[-1]
    if total <= 0.0:
        return ids[:0]
    k = int(np.searchsorted(cum, theta * total, side="left"))
    return np.sort(ids[order[:min(k, len(cum) - 1) + 1]])


def galerkin_loop(problem, config, callback=None):
    """Run SOLVE, ESTIMATE, MARK and REFINE until ``eta < tol`` or the dof cap is passed.

    ``callback(record, state)`` is called after every iteration.
    Returns the list of :class:`IterationRecord`.
    """
    config.validate()
    mesh = MeshForest.from_cubes(problem.cubes)
    records = []
    it = 0
    while True:
        snap = mesh.snapshot()
        data = approximate_data(problem, snap, config.f_sampling)
        proj = vem.build_projectors(snap)
        sysm = system.assemble(snap, data, config.gamma, problem.g(snap.coords), proj)
        try:
            u, cg_iters = system.solve_cg(sysm, config.cg_tol, config.cg_max_iter)
        except system.SolverError as exc:
            raise GalerkinError(f"solve failed at iteration {it}: {exc}") from exc
        report = estimator.global_estimate(snap, u, data, config.gamma, proj)
        h1 = math.nan
        if problem.grad_exact is not None:
            g, _ = proj.project(snap, u)
            h1 = h1_error(snap, g, problem)
        qo = math.nan
        if config.check_orthogonality:
            qo = system.quasi_orthogonality_residual(
                snap, u, data, proj, rhs_norm=np.linalg.norm(sysm.full_rhs[sysm.dofmap.free]))
        ndofs = snap.n_nodes
        stop = (report.eta < config.tol or ndofs > config.max_ndofs
                or (config.max_iterations is not None and it + 1 >= config.max_iterations))
        n_marked = n_refined = 0
        if not stop:
            marked = dorfler_mark(report.eta2_local, config.theta, snap.leaf_ids)
            if len(marked) == 0:
                stop = True
            else:
                rep = mesh.refine_set(marked.tolist(), config.mode, max(1, config.lambda_max))
                n_marked, n_refined = rep.n_marked, rep.n_refined
        rec = IterationRecord(it, ndofs, snap.n_elements, h1, report.eta, report.stab,
                              snap.lambda_max, n_marked, n_refined, cg_iters, qo)
        log.info("iter %d ndofs %d cells %d eta %.4e h1 %.4e lam %d", it, ndofs,
                 snap.n_elements, report.eta, h1, snap.lambda_max)
        records.append(rec)
        if callback is not None:
            callback(rec, IterationState(mesh, snap, u, data, report))
        if stop:
            return records
        it += 1
