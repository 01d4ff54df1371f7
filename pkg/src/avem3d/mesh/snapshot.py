"""Flat array view of the current leaf mesh."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MeshSnapshot:
    """Immutable array description of the leaf mesh.

    Element-local dof lists are stored in CSR form (``dof_ptr``,
    ``dof_node``); the first four entries of every element are its vertices.
    Every leaf facet is a row of the ``fac_*`` arrays and its polygon
    boundary is split into segments ``seg_*`` whose endpoints are given as
    global entry indices into ``dof_node``.
    """

    coords: np.ndarray
    parent_edge: np.ndarray
    is_proper: np.ndarray
    lam: np.ndarray
    on_boundary: np.ndarray
    leaf_ids: np.ndarray
    verts: np.ndarray
    dof_ptr: np.ndarray
    dof_node: np.ndarray
    fac_elem: np.ndarray
    fac_face: np.ndarray
    fac_nbr: np.ndarray
    seg_fac: np.ndarray
    seg_a: np.ndarray
    seg_b: np.ndarray

    @property
    def n_nodes(self):
        return len(self.coords)

    @property
    def n_elements(self):
        return len(self.leaf_ids)

    @property
    def lambda_max(self):
        return int(self.lam.max()) if len(self.lam) else 0

    @property
    def n_local(self):
        return np.diff(self.dof_ptr)

    def element_of_entry(self):
        return np.repeat(np.arange(self.n_elements), self.n_local)

    @classmethod
    def from_forest(cls, mesh):
        st = mesh.recompute_node_status()
        leaves = sorted(mesh.leaves)
        index = {t: i for i, t in enumerate(leaves)}
        dof_ptr = [0]
        dof_node = []
        fac_elem, fac_face, fac_nbr = [], [], []
        seg_fac, seg_a, seg_b = [], [], []
        nf = 0
        for e, t in enumerate(leaves):
            info = st.leaf_info[t]
            base = dof_ptr[-1]
            nodes = info.nodes
            dof_node.extend(nodes)
            dof_ptr.append(base + len(nodes))
            loc = {n: base + i for i, n in enumerate(nodes)}
            for k, poly, nbr in info.facets:
                fac_elem.append(e)
                fac_face.append(k)
                fac_nbr.append(index[nbr] if nbr >= 0 else -1)
                ids = [loc[n] for n in poly]
                seg_a.extend(ids)
                seg_b.extend(ids[1:] + ids[:1])
                seg_fac.extend([nf] * len(ids))
                nf += 1
        coords = mesh.coords_array()
        i64 = np.int64
        return cls(
            coords=coords,
            parent_edge=mesh.parent_edge_array(),
            is_proper=st.is_proper.copy(),
            lam=st.lam.copy(),
            on_boundary=mesh.domain.on_boundary(coords),
            leaf_ids=np.asarray(leaves, dtype=i64),
            verts=np.asarray([mesh.tet_verts[t] for t in leaves], dtype=i64).reshape(-1, 4),
            dof_ptr=np.asarray(dof_ptr, dtype=i64),
            dof_node=np.asarray(dof_node, dtype=i64),
            fac_elem=np.asarray(fac_elem, dtype=i64),
            fac_face=np.asarray(fac_face, dtype=i64),
            fac_nbr=np.asarray(fac_nbr, dtype=i64),
            seg_fac=np.asarray(seg_fac, dtype=i64),
            seg_a=np.asarray(seg_a, dtype=i64),
            seg_b=np.asarray(seg_b, dtype=i64),
        )
