"""Tetrahedral quadrature and the H1 error of projected gradients."""
from __future__ import annotations

import math

import numpy as np

# 14-point degree-5 rule on the reference tetrahedron (weights sum to 1/6)
_A, _WA = 0.09273525031089123551, 0.01224884051939366030
_B, _WB = 0.31088591926330060003, 0.01878132095300264937
_C, _WC = 0.45449629587435042832, 0.0070910034628469046642


def _tet_rule():
    bary, w = [], []
    for a, wa in ((_A, _WA), (_B, _WB)):
        for k in range(4):
            p = np.full(4, a)
            p[k] = 1.0 - 3.0 * a
            bary.append(p)
            w.append(wa)
    for i in range(4):
        for j in range(i + 1, 4):
            p = np.full(4, 0.5 - _C)
            p[[i, j]] = _C
            bary.append(p)
            w.append(_WC)
    return np.array(bary), 6.0 * np.array(w)


QUAD_BARY, QUAD_WEIGHTS = _tet_rule()  # weights normalized to sum 1


def integrate_tets(P, fun):
    """Apply the 14-point rule on tetrahedra ``P`` (n, 4, 3).

    ``fun`` maps points (m, 3) to values (m,); returns per-tet integrals.
    """
    P = np.asarray(P, dtype=float)
    vol = np.abs(np.linalg.det(P[:, 1:] - P[:, :1])) / 6.0
    pts = np.einsum("qk,nka->nqa", QUAD_BARY, P)
    vals = np.asarray(fun(pts.reshape(-1, 3)))
    return vol * (vals.reshape(len(P), len(QUAD_WEIGHTS)) @ QUAD_WEIGHTS)


def _red_children(P):
    """Uniform 1:8 split of tetrahedra (n, 4, 3); child 0..3 keep vertex 0..3."""
    x = [P[:, i] for i in range(4)]
    m = {(i, j): 0.5 * (x[i] + x[j]) for i in range(4) for j in range(i + 1, 4)}
    kids = [
        (x[0], m[0, 1], m[0, 2], m[0, 3]),
        (m[0, 1], x[1], m[1, 2], m[1, 3]),
        (m[0, 2], m[1, 2], x[2], m[2, 3]),
        (m[0, 3], m[1, 3], m[2, 3], x[3]),
        (m[0, 1], m[0, 2], m[0, 3], m[1, 3]),
        (m[0, 1], m[0, 2], m[1, 2], m[1, 3]),
        (m[0, 2], m[0, 3], m[1, 3], m[2, 3]),
        (m[0, 2], m[1, 2], m[1, 3], m[2, 3]),
    ]
    return np.stack([np.stack(k, axis=1) for k in kids], axis=1)  # (n, 8, 4, 3)


def integrate_singular(P, fun, levels=3, point=(0.0, 0.0, 0.0)):
    """Integrate over tetrahedra, subdividing ``levels`` times toward ``point``.

    Tetrahedra having ``point`` as a vertex are split 1:8; the seven
    children away from it are integrated directly and the corner child is
    split again.  Others use the plain rule.
    """
    P = np.asarray(P, dtype=float)
    point = np.asarray(point, dtype=float)
    hit = np.all(P == point, axis=2)
    inc = hit.any(axis=1)
    out = np.zeros(len(P))
    if np.any(~inc):
        out[~inc] = integrate_tets(P[~inc], fun)
    idx = np.flatnonzero(inc)
    if len(idx):
        cur = P[idx]
        corner = np.argmax(hit[idx], axis=1)
        for _ in range(levels):
            kids = _red_children(cur)
            keep = np.ones((len(cur), 8), dtype=bool)
            keep[np.arange(len(cur)), corner] = False
            vals = integrate_tets(kids[keep], fun).reshape(len(cur), 7)
            out[idx] += vals.sum(axis=1)
            cur = kids[np.arange(len(cur)), corner]
        out[idx] += integrate_tets(cur, fun)
    return out


def h1_error(snap, grad_proj, problem, levels=3, denominator=None):
    """Relative H1 error of the projected discrete gradient.

    Parameters
    ----------
    snap : MeshSnapshot
    grad_proj : (L, 3) array
        Constant gradient of the projected solution on every leaf.
    problem : ProblemSpec
        Needs ``grad_exact``.
    levels : int
        Subdivision levels toward ``problem.singular_point``.
    denominator : float, optional
        ``||grad u||^2``.  Defaults to the cached fine-mesh value for the
        Fichera problem, otherwise to the integral on ``snap``.
    """
    P = snap.coords[snap.verts]
    num = gradient_error_sq(P, grad_proj, problem, levels)
    if denominator is None:
        if problem.grad_norm_sq is not None:
            denominator = problem.grad_norm_sq()
        else:
            denominator = gradient_error_sq(P, np.zeros_like(grad_proj), problem, levels)
    if denominator == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return math.sqrt(num / denominator)


def gradient_error_sq(P, gp, problem, levels=3):
    """``sum_E int_E |grad u - gp_E|^2`` over tetrahedra ``P`` with constant ``gp_E``."""
    P = np.asarray(P, dtype=float)
    gp = np.asarray(gp, dtype=float)
    point = problem.singular_point
    inc = np.zeros(len(P), dtype=bool) if point is None else \
        np.all(P == np.asarray(point, dtype=float), axis=2).any(axis=1)
    parts = []
    if np.any(~inc):
        Q, G = P[~inc], gp[~inc]
        pts = np.einsum("qk,nka->nqa", QUAD_BARY, Q)
        vol = np.abs(np.linalg.det(Q[:, 1:] - Q[:, :1])) / 6.0
        d = problem.grad_exact(pts.reshape(-1, 3)).reshape(len(Q), -1, 3) - G[:, None]
        parts.extend(vol * ((d * d).sum(axis=2) @ QUAD_WEIGHTS))
    for Pe, ge in zip(P[inc], gp[inc]):
        def fun(x, ge=ge):
            d = problem.grad_exact(x) - ge
            return (d * d).sum(axis=1)
        parts.append(float(integrate_singular(Pe[None], fun, levels, point)[0]))
    return math.fsum(parts)
