"""Newest-vertex bisection forest for tetrahedral meshes with hanging nodes.

Tetrahedra are refined with Maubach's tagged bisection.  Leaves of the
forest form the current mesh; a leaf is treated as a polyhedron whose
faces are the leaf facets of the shared facet tree, so nodes created by
neighbouring refinements sit on its boundary as hanging nodes.

All coordinates are dyadic rationals, so node identity and midpoint
computation are exact in binary floating point.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np

from .. import kernels
from .domain import CubeDomain

#: coordinates stay exact well beyond this depth; deeper refinement aborts
MAX_GENERATION = 60

_KUHN_PERMS = tuple(itertools.permutations(range(3)))
_EDGE_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


class MeshError(RuntimeError):
    """Invalid request on a mesh (non-leaf bisection, depth guard, ...)."""


class MeshCorruptionError(MeshError):
    """The forest's internal bookkeeping is inconsistent."""


def _ekey(a, b):
    return (a, b) if a < b else (b, a)


def _fkey(a, b, c):
    if a > b:
        a, b = b, a
    if b > c:
        b, c = c, b
    if a > b:
        a, b = b, a
    return (a, b, c)


def _face(v, k):
    return tuple(v[i] for i in range(4) if i != k)


@dataclass(frozen=True)
class LeafInfo:
    """Boundary description of one leaf.

    ``nodes`` lists the 4 vertices (Maubach order) followed by the hanging
    nodes in ascending id.  ``facets`` holds ``(k, polygon, neighbour)``
    for every leaf facet on the face opposite vertex ``k``; polygons are
    counter-clockwise seen from outside the element and neighbour is a
    leaf id or -1 on the domain boundary.
    """

    nodes: tuple
    facets: tuple


@dataclass
class NodeStatus:
    is_proper: np.ndarray
    lam: np.ndarray
    hanging_in: dict
    leaf_info: dict

    @property
    def lambda_max(self):
        return int(self.lam.max()) if len(self.lam) else 0


@dataclass(frozen=True)
class RefinementReport:
    n_marked: int
    n_refined: int


@dataclass(frozen=True)
class ElementGeometry:
    volume: float
    h: float
    centroid: np.ndarray
    face_areas: np.ndarray
    face_normals: np.ndarray  # row k: outward unit normal of the face opposite vertex k


class MeshForest:
    """Bisection forest with node, tetrahedron, edge-midpoint and facet tables."""

    def __init__(self, domain: CubeDomain):
        self.domain = domain
        # nodes; ids double as creation indices
        self.coords = []
        self.parent_edge = []
        self.node_generation = []
        # tetrahedra
        self.tet_verts = []
        self.tet_tag = []
        self.tet_parent = []
        self.tet_children = []
        self.tet_gen = []
        self.tet_faces = []
        self.leaves = set()
        # edge (a, b), a < b  ->  midpoint node
        self.midpoint = {}
        # edge -> leaves having it as a straight side
        self.edge_leaves = {}
        # facet tree
        self.facet_id = {}
        self.facet_nodes = []
        self.facet_parent = []
        self.facet_children = []
        self.facet_mid = []
        self.facet_owners = []
        self.facet_boundary = []
        self._status = None
        self._edge_cache = {}
        self._coord_index = None

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    @classmethod
    def from_cubes(cls, cubes):
        """Kuhn triangulation of a union of unit cubes (6 tets per cube, tag 3)."""
        domain = cubes if isinstance(cubes, CubeDomain) else CubeDomain(cubes)
        mesh = cls(domain)
        lattice = {}

        def node(p):
            if p not in lattice:
                lattice[p] = mesh._new_node(tuple(float(c) for c in p), None)
            return lattice[p]

        for cube in domain.cubes:
            for dx, dy, dz in itertools.product((0, 1), repeat=3):
                node((cube[0] + dx, cube[1] + dy, cube[2] + dz))
        for cube in domain.cubes:
            for perm in _KUHN_PERMS:
                p = list(cube)
                path = [node(tuple(p))]
                for ax in perm:
                    p[ax] += 1
                    path.append(node(tuple(p)))
                mesh._new_tet(tuple(path), 3, -1, 0)
        for f, owners in enumerate(mesh.facet_owners):
            if len(owners) > 2:
                raise MeshCorruptionError("initial facet shared by more than two tetrahedra")
            mesh.facet_boundary[f] = len(owners) == 1
        return mesh

    def _new_node(self, xyz, parent):
        self.coords.append(xyz)
        self.parent_edge.append(parent)
        if parent is None:
            self.node_generation.append(0)
        else:
            self.node_generation.append(
                max(self.node_generation[parent[0]], self.node_generation[parent[1]]) + 1)
        self._coord_index = None
        return len(self.coords) - 1

    def _midpoint_node(self, a, b):
        key = _ekey(a, b)
        m = self.midpoint.get(key)
        if m is not None:
            return m, False
        pa, pb = self.coords[a], self.coords[b]
        m = self._new_node(((pa[0] + pb[0]) * 0.5, (pa[1] + pb[1]) * 0.5, (pa[2] + pb[2]) * 0.5), key)
        self.midpoint[key] = m
        return m, True

    def _new_facet(self, key, parent):
        fid = len(self.facet_nodes)
        self.facet_id[key] = fid
        self.facet_nodes.append(key)
        self.facet_parent.append(parent)
        self.facet_children.append(None)
        self.facet_mid.append(-1)
        self.facet_owners.append([])
        self.facet_boundary.append(self.facet_boundary[parent] if parent >= 0 else False)
        return fid

    def _facet(self, a, b, c):
        key = _fkey(a, b, c)
        fid = self.facet_id.get(key)
        if fid is None:
            fid = self._new_facet(key, -1)
        return fid

    def _split_facet(self, a, b, o, z):
        """Record the split of facet (a, b, o) at the midpoint z of (a, b)."""
        pid = self.facet_id.get(_fkey(a, b, o))
        if pid is None:
            raise MeshCorruptionError(f"face {(a, b, o)} missing from the facet table")
        if self.facet_children[pid] is not None:
            if self.facet_mid[pid] != z:
                raise MeshCorruptionError(
                    f"facet {self.facet_nodes[pid]} split inconsistently "
                    f"(at {self.facet_mid[pid]} and at {z})")
            return
        kids = []
        for key in (_fkey(a, z, o), _fkey(z, b, o)):
            if key in self.facet_id:
                raise MeshCorruptionError(f"facet {key} exists without its parent split")
            kids.append(self._new_facet(key, pid))
        self.facet_children[pid] = tuple(kids)
        self.facet_mid[pid] = z

    def _new_tet(self, verts, tag, parent, gen):
        t = len(self.tet_verts)
        self.tet_verts.append(verts)
        self.tet_tag.append(tag)
        self.tet_parent.append(parent)
        self.tet_children.append(None)
        self.tet_gen.append(gen)
        faces = tuple(self._facet(*_face(verts, k)) for k in range(4))
        self.tet_faces.append(faces)
        for f in faces:
            self.facet_owners[f].append(t)
        for i, j in _EDGE_PAIRS:
            self.edge_leaves.setdefault(_ekey(verts[i], verts[j]), set()).add(t)
        self.leaves.add(t)
        return t

    def _invalidate(self):
        self._status = None
        self._edge_cache = {}

    # ------------------------------------------------------------------
    # refinement
    # ------------------------------------------------------------------
    def bisect(self, t):
        """Maubach bisection of leaf ``t``; returns ``(child1, child2, midpoint)``."""
        if t not in self.leaves:
            raise MeshError(f"tetrahedron {t} is not a leaf")
        gen = self.tet_gen[t]
        if gen >= MAX_GENERATION:
            raise MeshError(f"refinement depth guard reached at tetrahedron {t} (generation {gen})")
        v = self.tet_verts[t]
        k = self.tet_tag[t]
        x0, xk = v[0], v[k]
        z, _ = self._midpoint_node(x0, xk)
        others = [v[i] for i in range(1, 4) if i != k]
        for o in others:
            self._split_facet(x0, xk, o, z)

        for f in self.tet_faces[t]:
            self.facet_owners[f].remove(t)
        for i, j in _EDGE_PAIRS:
            key = _ekey(v[i], v[j])
            s = self.edge_leaves[key]
            s.discard(t)
            if not s:
                del self.edge_leaves[key]
        self.leaves.discard(t)

        tag = k - 1 if k > 1 else 3
        c1 = self._new_tet(v[:k] + (z,) + v[k + 1:], tag, t, gen + 1)
        c2 = self._new_tet(v[1:k + 1] + (z,) + v[k + 1:], tag, t, gen + 1)
        self.tet_children[t] = (c1, c2)
        self._invalidate()
        return c1, c2, z

    def _has_split_side(self, t):
        v = self.tet_verts[t]
        mid = self.midpoint
        for i, j in _EDGE_PAIRS:
            if _ekey(v[i], v[j]) in mid:
                return True
        return False

    def refine_set(self, marked, mode="admissible", lambda_max=1):
        """Bisect every marked leaf once, then restore admissibility or conformity.

        Parameters
        ----------
        marked : iterable of int
            Leaf ids.
        mode : {"admissible", "conforming"}
        lambda_max : int
            Largest allowed global index in admissible mode (>= 1).
        """
        marked = sorted(set(int(t) for t in marked))
        for t in marked:
            if t not in self.leaves:
                raise MeshError(f"marked tetrahedron {t} is not a leaf")
        if mode == "admissible" and lambda_max < 1:
            raise MeshError("admissible mode needs lambda_max >= 1")
        if mode not in ("admissible", "conforming"):
            raise MeshError(f"unknown refinement mode {mode!r}")
        if not marked:
            return RefinementReport(0, 0)

        queue = deque()
        n_refined = 0
        for t in marked:
            v = self.tet_verts[t]
            edge = _ekey(v[0], v[self.tet_tag[t]])
            c1, c2, _ = self.bisect(t)
            n_refined += 1
            queue.extend((c1, c2))
            queue.extend(self.edge_leaves.get(edge, ()))
        if mode == "conforming":
            n_refined += self._close_conforming(queue)
            self.recompute_node_status()
        else:
            n_refined += self.make_admissible(lambda_max)
        return RefinementReport(len(marked), n_refined)

    def _close_conforming(self, queue):
        count = 0
        while queue:
            t = queue.popleft()
            if t not in self.leaves or not self._has_split_side(t):
                continue
            v = self.tet_verts[t]
            edge = _ekey(v[0], v[self.tet_tag[t]])
            c1, c2, _ = self.bisect(t)
            count += 1
            queue.extend((c1, c2))
            queue.extend(self.edge_leaves.get(edge, ()))
        return count

    def close_conforming(self):
        """Bisect until no leaf carries a hanging node; returns the bisection count."""
        n = self._close_conforming(deque(sorted(self.leaves)))
        self.recompute_node_status()
        return n

    def make_admissible(self, lambda_max, max_sweeps=200):
        """Refine around nodes whose global index exceeds ``lambda_max``.

        Offending nodes are processed in creation order; every leaf on which
        such a node hangs is bisected along the NVB rule, descending into the
        children that still carry it, until the node is a vertex of all
        leaves containing it.  Returns the number of bisections performed.
        """
        if lambda_max < 1:
            raise MeshError("lambda_max must be >= 1")
        extra = 0
        for _ in range(max_sweeps):
            st = self.recompute_node_status()
            bad = np.flatnonzero(st.lam > lambda_max)
            if len(bad) == 0:
                return extra
            for x in bad:
                for t in st.hanging_in.get(int(x), ()):
                    extra += self._refine_toward(t, int(x))
        st = self.recompute_node_status()
        raise MeshError(
            f"make_admissible did not terminate after {max_sweeps} sweeps "
            f"(Lambda_T = {st.lambda_max}, {extra} bisections)")

    def _refine_toward(self, t, x):
        count = 0
        stack = [t]
        while stack:
            s = stack.pop()
            kids = self.tet_children[s]
            if kids is not None:
                stack.extend(kids)
                continue
            if x in self.tet_verts[s] or x not in self.element_boundary_nodes(s):
                continue
            c1, c2, _ = self.bisect(s)
            count += 1
            stack.extend((c1, c2))
        return count

    def uniform_refine(self, sweeps=1):
        """Bisect every leaf ``sweeps`` times."""
        for _ in range(sweeps):
            for t in sorted(self.leaves):
                self.bisect(t)
        return self

    # ------------------------------------------------------------------
    # boundary discovery
    # ------------------------------------------------------------------
    def edge_nodes(self, a, b):
        """Nodes strictly inside segment (a, b), ordered from a to b."""
        key = _ekey(a, b)
        res = self._edge_cache.get(key)
        if res is None:
            m = self.midpoint.get(key)
            if m is None:
                res = ()
            else:
                res = self.edge_nodes(key[0], m) + (m,) + self.edge_nodes(m, key[1])
            self._edge_cache[key] = res
        return res if a == key[0] else res[::-1]

    def _leaf_facets_of_face(self, f):
        kids = self.facet_children[f]
        if kids is None:
            return [f]
        out = []
        stack = [kids[1], kids[0]]
        while stack:
            g = stack.pop()
            kids = self.facet_children[g]
            if kids is None:
                out.append(g)
            else:
                stack.extend((kids[1], kids[0]))
        return out

    def _facet_neighbor(self, f, t):
        found = -1
        g = f
        owners = self.facet_owners
        while g >= 0:
            for o in owners[g]:
                if o != t:
                    if found >= 0 and found != o:
                        raise MeshCorruptionError(f"facet {self.facet_nodes[f]} has more than two owners")
                    found = o
            g = self.facet_parent[g]
        if found < 0 and not self.facet_boundary[f]:
            raise MeshCorruptionError(f"interior facet {self.facet_nodes[f]} has a dangling side")
        return found

    def _oriented(self, a, b, c, apex):
        """Order triangle (a, b, c) counter-clockwise seen from outside (away from apex)."""
        X = self.coords
        pa, pb, pc, pp = X[a], X[b], X[c], X[apex]
        u = (pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2])
        w = (pc[0] - pa[0], pc[1] - pa[1], pc[2] - pa[2])
        n = (u[1] * w[2] - u[2] * w[1], u[2] * w[0] - u[0] * w[2], u[0] * w[1] - u[1] * w[0])
        d = n[0] * (pa[0] - pp[0]) + n[1] * (pa[1] - pp[1]) + n[2] * (pa[2] - pp[2])
        if d == 0.0:
            raise MeshError("degenerate element face")
        return (a, b, c) if d > 0 else (a, c, b)

    def leaf_info(self, t):
        """Boundary nodes and interface facets of leaf ``t`` (see :class:`LeafInfo`)."""
        if self._status is not None and t in self._status.leaf_info:
            return self._status.leaf_info[t]
        return self._compute_leaf_info(t)

    def _compute_leaf_info(self, t):
        if t not in self.leaves:
            raise MeshError(f"tetrahedron {t} is not a leaf")
        v = self.tet_verts[t]
        faces = self.tet_faces[t]
        facets = []
        if not self._has_split_side(t):
            for k in range(4):
                a, b, c = self._oriented(*_face(v, k), v[k])
                facets.append((k, (a, b, c), self._facet_neighbor(faces[k], t)))
            return LeafInfo(v, tuple(facets))
        hanging = set()
        for k in range(4):
            for f in self._leaf_facets_of_face(faces[k]):
                a, b, c = self._oriented(*self.facet_nodes[f], v[k])
                poly = ((a,) + self.edge_nodes(a, b) + (b,) + self.edge_nodes(b, c)
                        + (c,) + self.edge_nodes(c, a))
                hanging.update(poly)
                facets.append((k, poly, self._facet_neighbor(f, t)))
        hanging.difference_update(v)
        return LeafInfo(v + tuple(sorted(hanging)), tuple(facets))

    def element_boundary_nodes(self, t):
        """Vertices of leaf ``t`` followed by its hanging nodes (its dofs)."""
        return self.leaf_info(t).nodes

    def interface_facets(self, t):
        """Leaf facets of ``t`` as ``(k, polygon, neighbour)``; neighbour -1 on the boundary."""
        return list(self.leaf_info(t).facets)

    # ------------------------------------------------------------------
    # node classification
    # ------------------------------------------------------------------
    def parent_edge_array(self):
        pe = np.full((len(self.coords), 2), -1, dtype=np.int64)
        for i, p in enumerate(self.parent_edge):
            if p is not None:
                pe[i] = p
        return pe

    def recompute_node_status(self):
        """Global properness and global index of every node."""
        if self._status is not None:
            return self._status
        hanging_in = {}
        info = {}
        for t in sorted(self.leaves):
            li = self._compute_leaf_info(t)
            info[t] = li
            for n in li.nodes[4:]:
                hanging_in.setdefault(n, []).append(t)
        proper = np.ones(len(self.coords), dtype=bool)
        if hanging_in:
            proper[np.fromiter(hanging_in, dtype=np.int64)] = False
        lam = kernels.node_lambda(proper, self.parent_edge_array())
        self._status = NodeStatus(proper, lam, hanging_in, info)
        return self._status

    @property
    def status(self):
        return self.recompute_node_status()

    @property
    def lambda_max(self):
        return self.status.lambda_max

    def ancestor_chain(self, t):
        """Ancestors of ``t`` up to the first one with a proper vertex.

        Empty when ``t`` itself has a proper vertex; otherwise
        ``[t, T_1, ..., T_N]`` with ``T_N`` the first ancestor owning a
        vertex of global index 0.
        """
        lam = self.status.lam
        if t not in self.leaves:
            raise MeshError(f"tetrahedron {t} is not a leaf")
        if any(lam[x] == 0 for x in self.tet_verts[t]):
            return []
        chain = [t]
        s = t
        while True:
            s = self.tet_parent[s]
            if s < 0:
                raise MeshCorruptionError("ancestor chain reached a root without proper vertices")
            chain.append(s)
            if any(lam[x] == 0 for x in self.tet_verts[s]):
                return chain

    # ------------------------------------------------------------------
    # geometry and queries
    # ------------------------------------------------------------------
    @property
    def n_nodes(self):
        return len(self.coords)

    @property
    def n_leaves(self):
        return len(self.leaves)

    def coords_array(self):
        return np.asarray(self.coords, dtype=float)

    def leaf_ids(self):
        return np.array(sorted(self.leaves), dtype=np.int64)

    def node_at(self, xyz):
        """Node id at exactly the given coordinates, or None."""
        if self._coord_index is None:
            self._coord_index = {c: i for i, c in enumerate(self.coords)}
        return self._coord_index.get(tuple(float(c) for c in xyz))

    def element_geometry(self, t):
        X = np.asarray([self.coords[i] for i in self.tet_verts[t]])
        vol = abs(np.linalg.det(X[1:] - X[0])) / 6.0
        if vol == 0.0:
            raise MeshError(f"tetrahedron {t} is degenerate")
        areas = np.empty(4)
        normals = np.empty((4, 3))
        for k in range(4):
            a, b, c = X[[i for i in range(4) if i != k]]
            n = np.cross(b - a, c - a)
            if np.dot(n, a - X[k]) < 0:
                n = -n
            nn = np.linalg.norm(n)
            areas[k] = 0.5 * nn
            normals[k] = n / nn
        return ElementGeometry(vol, vol ** (1.0 / 3.0), X.mean(axis=0), areas, normals)

    def boundary_mask(self):
        """True for nodes on the domain boundary."""
        return self.domain.on_boundary(self.coords_array())

    def total_volume(self):
        X = self.coords_array()
        V = np.asarray([self.tet_verts[t] for t in sorted(self.leaves)])
        return float(np.abs(np.linalg.det(X[V[:, 1:]] - X[V[:, :1]])).sum() / 6.0)

    def snapshot(self):
        from .snapshot import MeshSnapshot

        return MeshSnapshot.from_forest(self)
