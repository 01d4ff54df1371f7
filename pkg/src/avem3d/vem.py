"""Lowest-order enhanced virtual elements on tetrahedral-shape elements.

Two layers live here.  :class:`ElementLocal` works on a single leaf and
mirrors the textbook construction step by step; :func:`build_projectors`
and :func:`local_systems` produce the same quantities for every leaf at
once from a :class:`~avem3d.mesh.MeshSnapshot`, using the kernels in
:mod:`avem3d.kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels


@dataclass(frozen=True)
class LinearPoly3:
    """Affine function ``c0 + grad . x``."""

    c0: float
    grad: np.ndarray

    def __call__(self, x):
        return self.c0 + np.asarray(x, dtype=float) @ self.grad


# ---------------------------------------------------------------------------
# single polygon / element
# ---------------------------------------------------------------------------
def _polygon_moments(points, normal):
    """Area, centroid and boundary moments of a planar polygon.

    ``points`` are ordered counter-clockwise seen from ``normal``.
    """
    P = np.asarray(points, dtype=float)
    Q = np.roll(P, -1, axis=0)
    o = P[0]
    tri = 0.5 * np.cross(P - o, Q - o) @ normal
    area = tri.sum()
    if not area > 0.0:
        raise ValueError("degenerate or clockwise facet polygon")
    centroid = o + (tri[:, None] * (P + Q - 2 * o)).sum(axis=0) / (3.0 * area)
    seg = Q - P
    length = np.linalg.norm(seg, axis=1)
    return area, centroid, seg, length


def facet_projector(points, values, normal):
    """Gradient projection of a piecewise-linear boundary trace on a planar polygon.

    Parameters
    ----------
    points : (n, 3) array
        Polygon boundary nodes, counter-clockwise seen from ``normal``.
    values : (n,) array
        Values at those nodes; the trace is linear between consecutive nodes.
    normal : (3,) array
        Unit normal of the polygon plane.

    Returns
    -------
    proj : LinearPoly3
        The projection, as an affine function of the global coordinates
        with an in-plane gradient.
    integral : float
        Integral of the enhanced face function, equal to that of ``proj``.
    """
    P = np.asarray(points, dtype=float)
    v = np.asarray(values, dtype=float)
    n = np.asarray(normal, dtype=float)
    area, centroid, seg, length = _polygon_moments(P, n)
    vmid = 0.5 * (v + np.roll(v, -1))
    outward = np.cross(seg, n)  # |outward| = segment length
    grad = (vmid[:, None] * outward).sum(axis=0) / area
    perimeter = length.sum()
    mean_x = (length[:, None] * 0.5 * (P + np.roll(P, -1, axis=0))).sum(axis=0) / perimeter
    mean_v = (length * vmid).sum() / perimeter
    c0 = mean_v - grad @ mean_x
    return LinearPoly3(float(c0), grad), float(area * (c0 + grad @ centroid))


@dataclass
class ElementLocal:
    """Local VEM data of one leaf (dofs in :meth:`MeshForest.element_boundary_nodes` order)."""

    tet: int
    nodes: tuple
    points: np.ndarray
    facets: tuple
    volume: float
    h: float
    centroid: np.ndarray
    face_normals: np.ndarray
    face_areas: np.ndarray
    grad: np.ndarray  # (n, 3): gradient of the projection of each dof basis function
    const: np.ndarray  # (n,): constant term of the same projections
    bary: np.ndarray  # (n, 4): barycentric coordinates of every dof node

    @property
    def n_dofs(self):
        return len(self.nodes)

    def project(self, values):
        values = np.asarray(values, dtype=float)
        return LinearPoly3(float(values @ self.const), values @ self.grad)

    def interpolate(self, values):
        """Linear interpolant at the four vertices and the defect at every dof."""
        values = np.asarray(values, dtype=float)
        verts = self.points[:4]
        T = np.column_stack([np.ones(4), verts])
        coef = np.linalg.solve(T, values[:4])
        interp = LinearPoly3(float(coef[0]), coef[1:])
        diff = values - self.bary @ values[:4]
        diff[:4] = 0.0
        return interp, diff

    def matrices(self, K=None, c=0.0):
        """Consistency, mass and stabilization matrices ``(A_E, M_E, S_E)``."""
        K = np.eye(3) if K is None else np.asarray(K, dtype=float)
        _check_data(K, c)
        G = self.grad
        A = self.volume * G @ K @ G.T
        V = self.const[:, None] + G @ self.points[:4].T  # projections at the vertices
        s = V.sum(axis=1)
        M = c * self.volume / 20.0 * (V @ V.T + np.outer(s, s))
        Q = np.eye(self.n_dofs)
        Q[:, :4] -= self.bary
        Q[:4] = 0.0
        S = self.h * Q.T @ Q
        return _sym(A), _sym(M), _sym(S)

    def rhs(self, f):
        return f * self.volume * (self.const + self.grad @ self.centroid)


def _sym(a):
    return 0.5 * (a + a.T)


def _check_data(K, c):
    if K.shape != (3, 3) or not np.allclose(K, K.T, rtol=0, atol=1e-14 * np.abs(K).max()):
        raise ValueError("K_E must be a symmetric 3x3 matrix")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise ValueError("K_E must be positive definite")
    if c < 0:
        raise ValueError("c_E must be nonnegative")


def element_local(mesh, t):
    """Build :class:`ElementLocal` for leaf ``t`` of a :class:`MeshForest`."""
    info = mesh.leaf_info(t)
    geo = mesh.element_geometry(t)
    X = mesh.coords
    pts = np.asarray([X[i] for i in info.nodes], dtype=float)
    loc = {n: i for i, n in enumerate(info.nodes)}
    nd = len(info.nodes)
    face_int = np.zeros((4, nd))
    for k, poly, _ in info.facets:
        P = pts[[loc[i] for i in poly]]
        for j, node in enumerate(poly):
            e = np.zeros(len(poly))
            e[j] = 1.0
            face_int[k, loc[node]] += facet_projector(P, e, geo.face_normals[k])[1]
    grad = (face_int.T @ geo.face_normals) / geo.volume
    verts = pts[:4]
    face_centroids = np.array([(verts.sum(axis=0) - verts[k]) / 3.0 for k in range(4)])
    moment = geo.face_areas @ face_centroids
    const = (face_int.sum(axis=0) - grad @ moment) / geo.face_areas.sum()
    bary = barycentric(verts, pts)
    bary[:4] = np.eye(4)
    return ElementLocal(t, info.nodes, pts, info.facets, geo.volume, geo.h, geo.centroid,
                        geo.face_normals, geo.face_areas, grad, const, bary)


def barycentric(verts, pts):
    """Barycentric coordinates of ``pts`` (m, 3) in the tetrahedron ``verts`` (4, 3)."""
    T = (verts[1:] - verts[0]).T
    lam = np.linalg.solve(T, (np.asarray(pts) - verts[0]).T).T
    return np.column_stack([1.0 - lam.sum(axis=1), lam])


def element_projector(mesh, t, dof_values):
    """Gradient projection of the VEM function with the given dofs on leaf ``t``."""
    return element_local(mesh, t).project(dof_values)


def local_matrices(mesh, t, K=None, c=0.0):
    return element_local(mesh, t).matrices(K, c)


def local_rhs(mesh, t, f):
    return element_local(mesh, t).rhs(f)


def lagrange_p1_interp(mesh, t, dof_values):
    return element_local(mesh, t).interpolate(dof_values)


def hierarchical_detail(v, z, parent_edge, is_proper):
    """``v(z)`` on proper nodes, ``v(z)`` minus the parent-edge average on hanging ones."""
    if is_proper[z]:
        return float(v[z])
    a, b = parent_edge[z]
    return float(v[z] - 0.5 * (v[a] + v[b]))


def hierarchical_details(v, parent_edge, is_proper):
    v = np.asarray(v, dtype=float)
    d = v.copy()
    h = ~np.asarray(is_proper)
    pe = np.asarray(parent_edge)[h]
    d[h] = v[h] - 0.5 * (v[pe[:, 0]] + v[pe[:, 1]])
    return d


# ---------------------------------------------------------------------------
# batched path
# ---------------------------------------------------------------------------
@dataclass
class ElementGeometryArrays:
    volume: np.ndarray
    h: np.ndarray
    centroid: np.ndarray
    face_normals: np.ndarray  # (L, 4, 3)
    face_areas: np.ndarray  # (L, 4)
    vert_coords: np.ndarray  # (L, 4, 3)


def element_geometry_arrays(snap):
    X = snap.coords[snap.verts]
    vol = np.abs(np.linalg.det(X[:, 1:] - X[:, :1])) / 6.0
    if np.any(vol == 0.0):
        raise ValueError("degenerate element in mesh")
    normals = np.empty((len(X), 4, 3))
    areas = np.empty((len(X), 4))
    for k in range(4):
        idx = [i for i in range(4) if i != k]
        a, b, c = X[:, idx[0]], X[:, idx[1]], X[:, idx[2]]
        n = np.cross(b - a, c - a)
        flip = np.einsum("ij,ij->i", n, a - X[:, k]) < 0
        n[flip] *= -1
        nn = np.linalg.norm(n, axis=1)
        areas[:, k] = 0.5 * nn
        normals[:, k] = n / nn[:, None]
    return ElementGeometryArrays(vol, np.cbrt(vol), X.mean(axis=1), normals, areas, X)


@dataclass
class Projectors:
    """Projection data for every leaf, one row per (element, local dof) entry."""

    geometry: ElementGeometryArrays
    grad: np.ndarray  # (nnz, 3)
    const: np.ndarray  # (nnz,)
    bary: np.ndarray  # (nnz, 4)

    def project(self, snap, u):
        """Per-element gradient and constant of the projection of nodal vector ``u``."""
        w = np.asarray(u, dtype=float)[snap.dof_node]
        elem = snap.element_of_entry()
        n = snap.n_elements
        g = np.column_stack([np.bincount(elem, w * self.grad[:, a], minlength=n) for a in range(3)])
        c = np.bincount(elem, w * self.const, minlength=n)
        return g, c

    def interpolation_defect(self, snap, u):
        """``(v - I_E v)(x_i)`` for every entry (zero on vertex entries)."""
        u = np.asarray(u, dtype=float)
        elem = snap.element_of_entry()
        vert_vals = u[snap.verts][elem]
        d = u[snap.dof_node] - np.einsum("ij,ij->i", self.bary, vert_vals)
        d[snap.dof_ptr[:-1, None] + np.arange(4)] = 0.0
        return d


def build_projectors(snap):
    geo = element_geometry_arrays(snap)
    X = snap.coords
    grad, const = kernels.projector_entries(
        X, snap.dof_ptr, snap.dof_node, snap.fac_elem, snap.fac_face, snap.seg_fac,
        snap.seg_a, snap.seg_b, geo.volume, geo.face_normals, geo.face_areas, geo.vert_coords)
    elem = snap.element_of_entry()
    verts = geo.vert_coords
    Tinv = np.linalg.inv(np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1)))
    lam = np.einsum("eij,ej->ei", Tinv[elem], X[snap.dof_node] - verts[elem, 0])
    bary = np.column_stack([1.0 - lam.sum(axis=1), lam])
    first = snap.dof_ptr[:-1]
    for k in range(4):
        bary[first + k] = np.eye(4)[k]
    return Projectors(geo, grad, const, bary)


@dataclass
class LocalSystems:
    """Local matrices of all elements flattened in element order.

    ``rows``/``cols`` are global node ids of every (i, j) local pair;
    ``a``, ``m``, ``s`` the consistency, mass and stabilization entries.
    """

    rows: np.ndarray
    cols: np.ndarray
    a: np.ndarray
    m: np.ndarray
    s: np.ndarray
    rhs: np.ndarray  # per (element, dof) entry


def local_systems(snap, proj, K, c, f):
    """Local matrices and load vectors for every leaf.

    ``K`` is (L, 3, 3), ``c`` and ``f`` are (L,) element-wise constants.
    """
    geo = proj.geometry
    K = np.ascontiguousarray(K, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    a, m, s = kernels.local_matrices(snap.dof_ptr, proj.grad, proj.const, proj.bary,
                                     geo.volume, geo.h, geo.vert_coords, K, c)
    nloc = snap.n_local
    elem_pairs = np.repeat(np.arange(snap.n_elements), nloc * nloc)
    start = np.repeat(snap.dof_ptr[:-1], nloc * nloc)
    off = np.arange(len(elem_pairs)) - np.repeat(np.concatenate([[0], np.cumsum(nloc * nloc)[:-1]]), nloc * nloc)
    nl = np.repeat(nloc, nloc * nloc)
    rows = snap.dof_node[start + off // nl]
    cols = snap.dof_node[start + off % nl]
    elem = snap.element_of_entry()
    rhs = f[elem] * geo.volume[elem] * (proj.const + np.einsum("ij,ij->i", proj.grad, geo.centroid[elem]))
    return LocalSystems(rows, cols, a, m, s, rhs)
