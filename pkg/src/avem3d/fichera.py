"""The Fichera corner benchmark: exact solution, data and the gradient norm."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .driver import ProblemSpec
from .quadrature import h1_error, integrate_singular
from .mesh import CubeDomain, fichera_cubes

def fichera_problem(alpha=0.5):
    """Fichera corner problem with exact solution ``|x|^alpha``, ``K = I``, ``c = 1``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")

    def u(x):
        return np.linalg.norm(np.atleast_2d(x), axis=1) ** alpha

    def grad(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=1)
        if np.any(r == 0.0):
            raise ValueError("the exact gradient is singular at the origin")
        return alpha * (r ** (alpha - 2.0))[:, None] * x

    def f(x):
        r = np.linalg.norm(np.atleast_2d(x), axis=1)
        if np.any(r == 0.0):
            raise ValueError("the source is singular at the origin")
        return -alpha * (alpha + 1.0) * r ** (alpha - 2.0) + r ** alpha

    return ProblemSpec(
        cubes=fichera_cubes(), K=None, c=1.0, f=f, g=u, u_exact=u, grad_exact=grad,
        name="fichera", singular_point=(0.0, 0.0, 0.0),
        grad_norm_sq=lambda: grad_norm_sq(alpha),
    )


def _uniform_bisection(P, sweeps):
    # every Kuhn tet starts with tag 3 and tags stay uniform across a sweep
    tag = 3
    for _ in range(sweeps):
        x0, xk = P[:, 0], P[:, tag]
        z = 0.5 * (x0 + xk)[:, None]
        c1 = np.concatenate([P[:, :tag], z, P[:, tag + 1:]], axis=1)
        c2 = np.concatenate([P[:, 1:tag + 1], z, P[:, tag + 1:]], axis=1)
        P = np.concatenate([c1, c2])
        tag = tag - 1 if tag > 1 else 3
    return P


def kuhn_tets(cubes):
    """Vertex coordinates (n, 4, 3) of the Kuhn tetrahedra of ``cubes``."""
    out = []
    for c in CubeDomain(cubes).cubes:
        lo = np.array(c, dtype=float)
        for perm in itertools.permutations(range(3)):
            p = lo.copy()
            verts = [p.copy()]
            for ax in perm:
                p[ax] += 1.0
                verts.append(p.copy())
            out.append(verts)
    return np.array(out)


@lru_cache(maxsize=None)
def _grad_norm_sq(alpha, sweeps, levels):
    prob = fichera_problem(alpha)
    P = _uniform_bisection(kuhn_tets(prob.cubes), sweeps)

    def fun(x):
        g = prob.grad_exact(x)
        return (g * g).sum(axis=1)

    return math.fsum(integrate_singular(P, fun, levels))


def grad_norm_sq(alpha=0.5, sweeps=6, levels=3):
    """``||grad u||^2`` over the Fichera domain on a fixed uniform refinement (cached)."""
    return _grad_norm_sq(float(alpha), int(sweeps), int(levels))
