"""Global assembly, Dirichlet elimination and the preconditioned CG solve."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels, vem


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    """CG failed to converge; ``history`` holds the preconditioned residual norms."""

    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = list(history)


@dataclass
class ElementData:
    """Piecewise-constant data, one value per leaf in snapshot order."""

    K: np.ndarray  # (L, 3, 3)
    c: np.ndarray  # (L,)
    f: np.ndarray  # (L,)

    @classmethod
    def constant(cls, n_elements, K=None, c=0.0, f=0.0):
        K = np.eye(3) if K is None else np.asarray(K, dtype=float)
        return cls(np.broadcast_to(K, (n_elements, 3, 3)).copy(),
                   np.full(n_elements, float(c)), np.full(n_elements, float(f)))

    def validate(self):
        K, c = self.K, self.c
        if K.ndim != 3 or K.shape[1:] != (3, 3) or len(c) != len(K) or len(self.f) != len(K):
            raise ValueError("element data arrays have inconsistent shapes")
        scale = np.abs(K).max(axis=(1, 2))
        if np.any(np.abs(K - np.transpose(K, (0, 2, 1))).max(axis=(1, 2)) > 1e-14 * scale):
            raise ValueError("K_E must be symmetric")
        if np.any(np.linalg.eigvalsh(K)[:, 0] <= 0.0):
            raise ValueError("K_E must be positive definite")
        if np.any(c < 0.0):
            raise ValueError("c_E must be nonnegative")
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(c)) and np.all(np.isfinite(self.f))):
            raise ValueError("element data must be finite")


@dataclass
class DofMap:
    """Node to free-dof numbering; Dirichlet nodes carry prescribed values."""

    dirichlet: np.ndarray  # bool per node
    free: np.ndarray  # node ids of free dofs, ascending
    index: np.ndarray  # node -> free dof index, -1 on Dirichlet nodes
    values: np.ndarray  # full nodal vector, Dirichlet values set, zeros elsewhere

    @classmethod
    def build(cls, dirichlet, values):
        dirichlet = np.asarray(dirichlet, dtype=bool)
        free = np.flatnonzero(~dirichlet)
        index = np.full(len(dirichlet), -1, dtype=np.int64)
        index[free] = np.arange(len(free))
        vals = np.where(dirichlet, np.asarray(values, dtype=float), 0.0)
        return cls(dirichlet, free, index, vals)

    @property
    def n_free(self):
        return len(self.free)

    def expand(self, x):
        u = self.values.copy()
        u[self.free] = x
        return u


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix  # free-free block
    rhs: np.ndarray
    dofmap: DofMap
    gamma: float
    full_matrix: sp.csr_matrix = field(repr=False)
    full_rhs: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.matrix.shape[0]


def _mirrored(rows, cols, vals, n):
    keep = rows <= cols
    U = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    U.sum_duplicates()
    return (U + sp.triu(U, k=1, format="csr").T).tocsr()


def assemble(snap, data, gamma=1.0, dirichlet_values=None, proj=None):
    """Assemble ``B_T = a_T + m_T + gamma S_T`` and ``F_T`` and eliminate Dirichlet nodes.

    Parameters
    ----------
    snap : MeshSnapshot
    data : ElementData
    gamma : float
        Stabilization weight, must be positive.
    dirichlet_values : (n_nodes,) array or None
        Boundary data at every node; only boundary entries are read.
        ``None`` means homogeneous data.
    proj : Projectors, optional
        Reused when given.

    Returns
    -------
    LinearSystem
    """
    if not gamma > 0.0:
        raise ValueError("gamma must be positive")
    data.validate()
    if len(data.c) != snap.n_elements:
        raise ValueError("element data do not match the mesh")
    proj = vem.build_projectors(snap) if proj is None else proj
    loc = vem.local_systems(snap, proj, data.K, data.c, data.f)
    n = snap.n_nodes
    B = _mirrored(loc.rows, loc.cols, loc.a + loc.m + gamma * loc.s, n)
    F = np.bincount(snap.dof_node, loc.rhs, minlength=n)
    g = np.zeros(n) if dirichlet_values is None else np.asarray(dirichlet_values, dtype=float)
    dm = DofMap.build(snap.on_boundary, g)
    if dm.n_free == n and n > 0:
        raise AssemblyError("no Dirichlet nodes: the system would be singular for c = 0")
    Bf = B[dm.free]
    rhs = F[dm.free] - Bf @ dm.values
    Aff = Bf[:, dm.free].tocsr()
    Aff.sort_indices()
    return LinearSystem(Aff, rhs, dm, float(gamma), B, F)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    history: list


def pcg(A, b, rel_tol=1e-10, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when the preconditioned residual norm ``sqrt(r.z)`` drops below
    ``rel_tol`` times its initial value.  Raises :class:`SolverError` if
    that does not happen within ``max_iter`` iterations.
    """
    n = A.shape[0]
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = int(20 * np.sqrt(n)) + 1000
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if n == 0:
        return CGResult(x, 0, [])
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("matrix has a nonpositive diagonal entry", [])
    dinv = 1.0 / d
    r = b - A @ x if x0 is not None else b.copy()
    z = dinv * r
    rz = r @ z
    res0 = np.sqrt(rz)
    history = [res0]
    if res0 == 0.0:
        return CGResult(x, 0, history)
    p = z.copy()
    for it in range(1, max_iter + 1):
        q = A @ p
        pq = p @ q
        if not pq > 0:
            raise SolverError(f"loss of positive definiteness at iteration {it}", history)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        z = dinv * r
        rz_new = r @ z
        history.append(np.sqrt(abs(rz_new)))
        if history[-1] <= rel_tol * res0:
            return CGResult(x, it, history)
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise SolverError(f"CG did not converge in {max_iter} iterations "
                      f"(residual ratio {history[-1] / res0:.3e})", history)


def solve_cg(system, rel_tol=1e-10, max_iter=None):
    """Solve a :class:`LinearSystem`; returns the full nodal vector and the iteration count."""
    res = pcg(system.matrix, system.rhs, rel_tol, max_iter)
    return system.dofmap.expand(res.x), res.iterations


def vertex_residuals(snap, proj, data, u):
    """Per (element, vertex) pairing of the discrete residual with the P1 hats.

    Entry ``[e, k]`` is ``int_E f phi_k - a_E(Pi u, phi_k) - m_E(Pi u, phi_k)``
    where ``phi_k`` is the barycentric coordinate of vertex ``k``; all
    integrands are polynomials of degree at most two, integrated exactly.
    """
    geo = proj.geometry
    g, c0 = proj.project(snap, u)
    X = geo.vert_coords
    vol = geo.volume
    Tinv = np.linalg.inv(np.transpose(X[:, 1:] - X[:, :1], (0, 2, 1)))
    grads = np.empty((len(vol), 4, 3))
    grads[:, 1:] = Tinv
    grads[:, 0] = -Tinv.sum(axis=1)
    Kg = np.einsum("eab,eb->ea", data.K, g)
    pv = c0[:, None] + np.einsum("eka,ea->ek", X, g)  # projection at the vertices
    res = (data.f * vol / 4.0)[:, None]
    res = res - vol[:, None] * np.einsum("eka,ea->ek", grads, Kg)
    res = res - (data.c * vol / 20.0)[:, None] * (pv + pv.sum(axis=1, keepdims=True))
    return res


def quasi_orthogonality_residual(snap, u, data, proj=None, rhs_norm=None):
    """Largest discrete residual against the conforming hats of free proper nodes.

    Each hat is 1 at one proper node, 0 at the others, and extended to
    hanging nodes by recursive midpoint averaging.  The value is
    normalized by ``rhs_norm`` (the Euclidean norm of the free load
    vector when not given).
    """
    proj = vem.build_projectors(snap) if proj is None else proj
    R = vertex_residuals(snap, proj, data, u)
    nodal = np.bincount(snap.verts.ravel(), R.ravel(), minlength=snap.n_nodes)
    r = kernels.restrict_to_parents(nodal, snap.lam, snap.parent_edge)
    test = snap.is_proper & ~snap.on_boundary
    if not np.any(test):
        return 0.0
    if rhs_norm is None:
        loc = vem.local_systems(snap, proj, data.K, data.c, data.f)
        F = np.bincount(snap.dof_node, loc.rhs, minlength=snap.n_nodes)
        rhs_norm = np.linalg.norm(F[~snap.on_boundary])
    scale = rhs_norm if rhs_norm > 0 else 1.0
    return float(np.abs(r[test]).max() / scale)
