import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import pytest

from avem3d.driver import GalerkinConfig, galerkin_loop
from avem3d.fichera import fichera_problem
from avem3d.mesh import MeshForest, fichera_cubes

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES = {}


def random_admissible_mesh(seed, lambda_max, rounds, frac=0.2, cubes=None):
    """Fichera mesh refined ``rounds`` times on random leaves, biased toward the corner."""
    rng = random.Random(seed)
    mesh = MeshForest.from_cubes(cubes or fichera_cubes())
    for _ in range(rounds):
        leaves = sorted(mesh.leaves)
        X = mesh.coords_array()
        dist = {t: float(np.linalg.norm(X[list(mesh.tet_verts[t])].mean(axis=0))) for t in leaves}
        near = sorted(leaves, key=lambda t: (dist[t], t))[:max(1, len(leaves) // 10)]
        pick = set(rng.sample(leaves, max(1, int(frac * len(leaves))))) | set(near)
        mode = "conforming" if lambda_max == 0 else "admissible"
        mesh.refine_set(sorted(pick), mode, max(1, lambda_max))
    return mesh


def exact_volume(mesh, t):
    P = [[Fraction(c) for c in mesh.coords[i]] for i in mesh.tet_verts[t]]
    a = [[P[k][j] - P[0][j] for j in range(3)] for k in (1, 2, 3)]
    det = (a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
           - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
           + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]))
    return abs(det) / 6


def exact_area_sq(points):
    P = [[Fraction(c) for c in p] for p in points]
    o = P[0]
    n = [Fraction(0)] * 3
    for a, b in zip(P, P[1:] + P[:1]):
        u = [a[i] - o[i] for i in range(3)]
        w = [b[i] - o[i] for i in range(3)]
        n = [n[0] + u[1] * w[2] - u[2] * w[1], n[1] + u[2] * w[0] - u[0] * w[2],
             n[2] + u[0] * w[1] - u[1] * w[0]]
    return sum(x * x for x in n) / 4


def facet_partition_exact(mesh, t):
    """Leaf facet areas of every face of ``t`` add up to the face area, in exact arithmetic."""
    X = mesh.coords_array()
    v = mesh.tet_verts[t]
    sq = {}
    for k, poly, _ in mesh.interface_facets(t):
        sq.setdefault(k, []).append(exact_area_sq([X[n] for n in poly]))
    for k in range(4):
        full = exact_area_sq([X[v[i]] for i in range(4) if i != k])
        # sub-facets are similar up to powers of 1/2: area ratios are exact squares
        roots = []
        for r in (p / full for p in sq[k]):
            rn, rd = math.isqrt(r.numerator), math.isqrt(r.denominator)
            if rn * rn != r.numerator or rd * rd != r.denominator:
                return False
            roots.append(Fraction(rn, rd))
        if sum(roots) != 1:
            return False
    return True


@dataclass
class RunResult:
    records: list
    seconds: float
    equal_lambda_leaves: list  # per iteration: leaves whose vertices share one lambda > 0


def _timed_run(lambda_max, **kw):
    cfg = GalerkinConfig(lambda_max=lambda_max, theta=0.5, gamma=1.0, max_ndofs=20000, **kw)
    bad = []

    def cb(rec, state):
        lv = state.snap.lam[state.snap.verts]
        bad.append(int(np.sum((lv[:, 0] > 0) & (lv == lv[:, :1]).all(axis=1))))

    t0 = time.perf_counter()
    recs = galerkin_loop(fichera_problem(0.5), cfg, cb)
    return RunResult(recs, time.perf_counter() - t0, bad)


@pytest.fixture(scope="session")
def avem_run():
    """Fichera, alpha 1/2, theta 1/2, gamma 1, Lambda 10, cap 20000 dofs."""
    return _timed_run(10, check_orthogonality=True)


@pytest.fixture(scope="session")
def afem_run():
    return _timed_run(0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
