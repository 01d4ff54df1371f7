"""Residual a posteriori estimator, stabilization term and an H1 oracle."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import vem
from .mesh import MeshCorruptionError


@dataclass
class EstimatorReport:
    """Per-leaf and global estimator quantities.

    ``eta2_local[e]`` belongs to the leaf ``snap.leaf_ids[e]``.
    """

    eta2_local: np.ndarray
    eta2: float
    stab: float
    gamma: float = 1.0

    @property
    def eta(self):
        return math.sqrt(self.eta2)

    @property
    def ratio(self):
        """``gamma^2 S_T / eta^2`` (0 when both vanish)."""
        if self.eta2 == 0.0:
            return 0.0 if self.stab == 0.0 else math.inf
        return self.gamma ** 2 * self.stab / self.eta2


def _tet_l2_sq(vol, vals):
    # exact integral of the square of a linear function from its vertex values
    return vol / 20.0 * ((vals * vals).sum(axis=1) + vals.sum(axis=1) ** 2)


def facet_areas(snap):
    """Area of every leaf facet polygon."""
    X = snap.coords
    xa = X[snap.dof_node[snap.seg_a]]
    xb = X[snap.dof_node[snap.seg_b]]
    start = np.searchsorted(snap.seg_fac, np.arange(len(snap.fac_elem)))
    o = xa[start][snap.seg_fac]
    cr = np.cross(xa - o, xb - o)
    vec = np.column_stack([np.bincount(snap.seg_fac, cr[:, a], minlength=len(start)) for a in range(3)])
    return 0.5 * np.linalg.norm(vec, axis=1)


def local_indicators(snap, u, data, proj=None):
    """``eta^2(E)`` for every leaf.

    ``h_E^2 ||f_E - c_E Pi u||^2_E + 1/2 sum_F h_E |F| j_F^2`` with the
    jump ``j_F`` of the normal flux of the projected solution across each
    interface facet (zero on the domain boundary).
    """
    proj = vem.build_projectors(snap) if proj is None else proj
    geo = proj.geometry
    g, c0 = proj.project(snap, u)
    pv = c0[:, None] + np.einsum("eka,ea->ek", geo.vert_coords, g)
    r = data.f[:, None] - data.c[:, None] * pv
    eta2 = geo.h ** 2 * _tet_l2_sq(geo.volume, r)
    flux = np.einsum("eab,eb->ea", data.K, g)
    e, nb = snap.fac_elem, snap.fac_nbr
    n = geo.face_normals[e, snap.fac_face]
    inner = nb >= 0
    jump = np.zeros(len(e))
    jump[inner] = np.einsum("ij,ij->i", flux[e[inner]] - flux[nb[inner]], n[inner])
    contrib = 0.5 * geo.h[e] * facet_areas(snap) * jump ** 2
    eta2 += np.bincount(e, contrib, minlength=snap.n_elements)
    return eta2


def local_stab(snap, u, proj=None):
    """``h_E sum_i ((u - I_E u)(x_i))^2`` for every leaf."""
    proj = vem.build_projectors(snap) if proj is None else proj
    d = proj.interpolation_defect(snap, u)
    return proj.geometry.h * np.bincount(snap.element_of_entry(), d * d, minlength=snap.n_elements)


def stab_term(snap, u, proj=None):
    """``S_T(u, u)``, summed in leaf order."""
    return math.fsum(local_stab(snap, u, proj))


def global_estimate(snap, u, data, gamma=1.0, proj=None):
    proj = vem.build_projectors(snap) if proj is None else proj
    loc = local_indicators(snap, u, data, proj)
    return EstimatorReport(loc, math.fsum(loc), stab_term(snap, u, proj), gamma)


# ---------------------------------------------------------------------------
# H1 oracle on a conforming replay of every leaf
# ---------------------------------------------------------------------------
def _replay(mesh, t):
    """Bisect leaf ``t`` virtually until no sub-tet side carries a mesh node.

    Returns the sub-tetrahedra as vertex 4-tuples and a map from the
    negative ids of virtual midpoints (sides without a mesh node) to
    their parent side.
    """
    mid = mesh.midpoint
    virtual = {}
    out = []
    stack = [(tuple(mesh.tet_verts[t]), mesh.tet_tag[t])]
    while stack:
        v, k = stack.pop()
        if not any((min(v[i], v[j]), max(v[i], v[j])) in mid
                   for i in range(4) for j in range(i + 1, 4)):
            out.append(v)
            continue
        key = (min(v[0], v[k]), max(v[0], v[k]))
        z = mid.get(key)
        if z is None:
            z = -1 - len(virtual)
            virtual[z] = key
        tag = k - 1 if k > 1 else 3
        stack.append((v[:k] + (z,) + v[k + 1:], tag))
        stack.append((v[1:k + 1] + (z,) + v[k + 1:], tag))
    return out, virtual


def element_lift_seminorm(mesh, t, values, linear=None):
    """``|L - p|^2_{1,E}`` for the piecewise-linear lift ``L`` of nodal data on leaf ``t``.

    ``linear`` is an optional ``(c0, grad)`` pair or the string
    ``"interpolant"`` (linear interpolation at the four vertices).
    """
    values = np.asarray(values, dtype=float)
    X = mesh.coords
    dofs = set(mesh.element_boundary_nodes(t))
    subs, virtual = _replay(mesh, t)
    vt = mesh.tet_verts[t]
    if isinstance(linear, str):
        if linear != "interpolant":
            raise ValueError(f"unknown linear part {linear!r}")
        P = np.asarray([X[n] for n in vt])
        coef = np.linalg.solve(np.column_stack([np.ones(4), P]), values[list(vt)])
        linear = (coef[0], coef[1:])
    shift = np.zeros(3) if linear is None else np.asarray(linear[1], dtype=float)
    coords = {n: np.asarray(X[n], dtype=float) for n in dofs}
    vals = {n: values[n] for n in dofs}

    def resolve(n):
        if n in coords:
            return coords[n], vals[n]
        if n in virtual:  # no mesh node there: the lift is linear along that side
            (xa, va), (xb, vb) = (resolve(m) for m in virtual[n])
            return 0.5 * (xa + xb), 0.5 * (va + vb)
        raise MeshCorruptionError(f"replay of tetrahedron {t} reached node {n} outside its boundary")

    used = set()
    acc = []
    for s in subs:
        P = np.empty((4, 3))
        w = np.empty(4)
        for i, n in enumerate(s):
            P[i], w[i] = resolve(n)
            if n >= 0:
                used.add(n)
        D = P[1:] - P[0]
        grad = np.linalg.solve(D, w[1:] - w[0]) - shift
        acc.append(abs(np.linalg.det(D)) / 6.0 * (grad @ grad))
    if used != dofs:
        raise MeshCorruptionError(f"replay of tetrahedron {t} does not match its boundary nodes")
    return math.fsum(acc)


def h1_seminorm_oracle(mesh, values, subtract_interpolant=False):
    """Broken H1 seminorm squared of the piecewise-linear lift of nodal data.

    Every leaf is replayed by Maubach bisection until its hanging nodes
    are vertices of the sub-tetrahedra; the lift is linear on each
    sub-tetrahedron.  With ``subtract_interpolant`` the linear interpolant
    at the four vertices of the leaf is removed first, giving
    ``sum_E |v - I_E v|^2_{1,E}``.
    """
    linear = "interpolant" if subtract_interpolant else None
    return math.fsum(element_lift_seminorm(mesh, t, values, linear) for t in sorted(mesh.leaves))
