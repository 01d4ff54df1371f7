"""Hot numeric kernels, each in a numpy and a numba flavour.

The public functions dispatch on :func:`avem3d._accel.numba_enabled`;
the ``*_numpy`` and ``*_numba`` variants are importable for testing and
benchmarking.
"""
import numpy as np

from ._accel import njit, numba_enabled


# ---------------------------------------------------------------------------
# global index of nodes
# ---------------------------------------------------------------------------
def node_lambda_numpy(is_proper, parent_edge):
    n = len(is_proper)
    lam = np.zeros(n, dtype=np.int64)
    hang = np.flatnonzero(~is_proper)
    if len(hang) == 0:
        return lam
    p = parent_edge[hang]
    if np.any(p < 0):
        raise ValueError("hanging node without a parent edge")
    # fixed-point sweep; converges after (max index + 1) passes
    for _ in range(n + 1):
        new = np.maximum(lam[p[:, 0]], lam[p[:, 1]]) + 1
        if np.array_equal(new, lam[hang]):
            return lam
        lam[hang] = new
    raise ValueError("cyclic parent edges")


@njit
def node_lambda_numba(is_proper, parent_edge):
    n = is_proper.shape[0]
    lam = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if not is_proper[i]:
            a = parent_edge[i, 0]
            b = parent_edge[i, 1]
            if a < 0:
                raise ValueError("hanging node without a parent edge")
            lam[i] = max(lam[a], lam[b]) + 1
    return lam


def node_lambda(is_proper, parent_edge):
    """Global index: 0 on proper nodes, else 1 + max over the parent edge."""
    is_proper = np.ascontiguousarray(is_proper, dtype=np.bool_)
    parent_edge = np.ascontiguousarray(parent_edge, dtype=np.int64)
    if numba_enabled():
        return node_lambda_numba(is_proper, parent_edge)
    return node_lambda_numpy(is_proper, parent_edge)


# ---------------------------------------------------------------------------
# gradient projections of all dof basis functions
# ---------------------------------------------------------------------------
def _facet_starts(seg_fac, n_facets):
    return np.searchsorted(seg_fac, np.arange(n_facets + 1))


def _surface_moments(vert_coords, areas):
    # face k is opposite vertex k, so its centroid is (sum - x_k) / 3
    fc = (vert_coords.sum(axis=1)[:, None, :] - vert_coords) / 3.0
    return np.einsum("ek,eka->ea", areas, fc), areas.sum(axis=1)


def projector_entries_numpy(X, dof_ptr, dof_node, fac_elem, fac_face, seg_fac, seg_a, seg_b,
                            vol, normals, areas, vert_coords):
    nnz = len(dof_node)
    xa = X[dof_node[seg_a]]
    xb = X[dof_node[seg_b]]
    ns = normals[fac_elem, fac_face][seg_fac]
    d = xb - xa
    length = np.sqrt(np.einsum("ij,ij->i", d, d))
    nu = np.cross(d, ns)
    start = _facet_starts(seg_fac, len(fac_elem))[:-1]
    o = xa[start][seg_fac]
    tri = 0.5 * np.einsum("ij,ij->i", np.cross(xa - o, xb - o), ns)
    nf = len(fac_elem)
    area = np.bincount(seg_fac, tri, minlength=nf)
    perim = np.bincount(seg_fac, length, minlength=nf)
    cen = np.empty((nf, 3))
    xmean = np.empty((nf, 3))
    for a in range(3):
        cen[:, a] = np.bincount(seg_fac, tri * (xa[:, a] + xb[:, a] - 2 * o[:, a]), minlength=nf) / (3 * area)
        xmean[:, a] = np.bincount(seg_fac, 0.5 * length * (xa[:, a] + xb[:, a]), minlength=nf) / perim
    cen += xa[start]
    cs = 0.5 * length * (area / perim)[seg_fac] + 0.5 * np.einsum("ij,ij->i", nu, (cen - xmean)[seg_fac])
    ent = np.concatenate([seg_a, seg_b])
    cc = np.concatenate([cs, cs])
    nn = np.concatenate([ns, ns])
    bint = np.bincount(ent, cc, minlength=nnz)
    elem = np.repeat(np.arange(len(vol)), np.diff(dof_ptr))
    grad = np.column_stack([np.bincount(ent, cc * nn[:, a], minlength=nnz) for a in range(3)])
    grad /= vol[elem][:, None]
    moment, surf = _surface_moments(vert_coords, areas)
    const = (bint - np.einsum("ij,ij->i", grad, moment[elem])) / surf[elem]
    return grad, const


@njit
def _projector_entries_numba(X, dof_ptr, dof_node, fac_elem, fac_face, fac_start, seg_a, seg_b,
                             vol, normals, moment, surf):
    nnz = dof_node.shape[0]
    grad = np.zeros((nnz, 3))
    bint = np.zeros(nnz)
    for f in range(fac_elem.shape[0]):
        e = fac_elem[f]
        n0 = normals[e, fac_face[f], 0]
        n1 = normals[e, fac_face[f], 1]
        n2 = normals[e, fac_face[f], 2]
        s0 = fac_start[f]
        s1 = fac_start[f + 1]
        o = X[dof_node[seg_a[s0]]]
        area = 0.0
        perim = 0.0
        cx = 0.0
        cy = 0.0
        cz = 0.0
        mx = 0.0
        my = 0.0
        mz = 0.0
        for s in range(s0, s1):
            pa = X[dof_node[seg_a[s]]]
            pb = X[dof_node[seg_b[s]]]
            ux = pa[0] - o[0]
            uy = pa[1] - o[1]
            uz = pa[2] - o[2]
            wx = pb[0] - o[0]
            wy = pb[1] - o[1]
            wz = pb[2] - o[2]
            tri = 0.5 * ((uy * wz - uz * wy) * n0 + (uz * wx - ux * wz) * n1 + (ux * wy - uy * wx) * n2)
            area += tri
            cx += tri * (ux + wx)
            cy += tri * (uy + wy)
            cz += tri * (uz + wz)
            dx = pb[0] - pa[0]
            dy = pb[1] - pa[1]
            dz = pb[2] - pa[2]
            ln = np.sqrt(dx * dx + dy * dy + dz * dz)
            perim += ln
            mx += 0.5 * ln * (pa[0] + pb[0])
            my += 0.5 * ln * (pa[1] + pb[1])
            mz += 0.5 * ln * (pa[2] + pb[2])
        qx = o[0] + cx / (3 * area) - mx / perim
        qy = o[1] + cy / (3 * area) - my / perim
        qz = o[2] + cz / (3 * area) - mz / perim
        for s in range(s0, s1):
            pa = X[dof_node[seg_a[s]]]
            pb = X[dof_node[seg_b[s]]]
            dx = pb[0] - pa[0]
            dy = pb[1] - pa[1]
            dz = pb[2] - pa[2]
            ln = np.sqrt(dx * dx + dy * dy + dz * dz)
            nux = dy * n2 - dz * n1
            nuy = dz * n0 - dx * n2
            nuz = dx * n1 - dy * n0
            cs = 0.5 * ln * area / perim + 0.5 * (nux * qx + nuy * qy + nuz * qz)
            for ent in (seg_a[s], seg_b[s]):
                bint[ent] += cs
                grad[ent, 0] += cs * n0
                grad[ent, 1] += cs * n1
                grad[ent, 2] += cs * n2
    const = np.empty(nnz)
    for e in range(vol.shape[0]):
        for i in range(dof_ptr[e], dof_ptr[e + 1]):
            grad[i, 0] /= vol[e]
            grad[i, 1] /= vol[e]
            grad[i, 2] /= vol[e]
            const[i] = (bint[i] - grad[i, 0] * moment[e, 0] - grad[i, 1] * moment[e, 1]
                        - grad[i, 2] * moment[e, 2]) / surf[e]
    return grad, const


def projector_entries_numba(X, dof_ptr, dof_node, fac_elem, fac_face, seg_fac, seg_a, seg_b,
                            vol, normals, areas, vert_coords):
    moment, surf = _surface_moments(vert_coords, areas)
    return _projector_entries_numba(X, dof_ptr, dof_node, fac_elem, fac_face,
                                    _facet_starts(seg_fac, len(fac_elem)), seg_a, seg_b,
                                    vol, np.ascontiguousarray(normals), moment, surf)


def projector_entries(*args):
    """Gradient and constant of the projection of every element dof basis function."""
    if numba_enabled():
        return projector_entries_numba(*args)
    return projector_entries_numpy(*args)


# ---------------------------------------------------------------------------
# local matrices
# ---------------------------------------------------------------------------
def _pair_offsets(dof_ptr):
    nloc = np.diff(dof_ptr)
    return nloc, np.concatenate([[0], np.cumsum(nloc * nloc)])


def local_matrices_numpy(dof_ptr, grad, const, bary, vol, h, vert_coords, K, c):
    nloc, off = _pair_offsets(dof_ptr)
    total = off[-1]
    a = np.empty(total)
    m = np.empty(total)
    s = np.empty(total)
    for n in np.unique(nloc):
        E = np.flatnonzero(nloc == n)
        ent = dof_ptr[E][:, None] + np.arange(n)
        G = grad[ent]
        C = const[ent]
        B = bary[ent]
        A = vol[E, None, None] * np.einsum("mia,mab,mjb->mij", G, K[E], G)
        V = C[..., None] + np.einsum("mia,mka->mik", G, vert_coords[E])
        sv = V.sum(axis=2)
        M = (c[E] * vol[E] / 20.0)[:, None, None] * (
            np.einsum("mik,mjk->mij", V, V) + sv[:, :, None] * sv[:, None, :])
        Q = np.broadcast_to(np.eye(n), (len(E), n, n)).copy()
        Q[:, :, :4] -= B
        Q[:, :4, :] = 0.0
        S = h[E, None, None] * np.einsum("mki,mkj->mij", Q, Q)
        idx = off[E][:, None] + np.arange(n * n)
        for out, mat in ((a, A), (m, M), (s, S)):
            out[idx] = (0.5 * (mat + np.transpose(mat, (0, 2, 1)))).reshape(len(E), n * n)
    return a, m, s


@njit
def local_matrices_numba_kernel(dof_ptr, off, grad, const, bary, vol, h, vert_coords, K, c):
    total = off[-1]
    a = np.empty(total)
    m = np.empty(total)
    s = np.empty(total)
    for e in range(vol.shape[0]):
        p0 = dof_ptr[e]
        n = dof_ptr[e + 1] - p0
        KG = np.empty((n, 3))
        V = np.empty((n, 4))
        sv = np.empty(n)
        Q = np.zeros((n, n))
        for i in range(n):
            g = grad[p0 + i]
            for r in range(3):
                KG[i, r] = K[e, r, 0] * g[0] + K[e, r, 1] * g[1] + K[e, r, 2] * g[2]
            tot = 0.0
            for k in range(4):
                x = vert_coords[e, k]
                V[i, k] = const[p0 + i] + g[0] * x[0] + g[1] * x[1] + g[2] * x[2]
                tot += V[i, k]
            sv[i] = tot
            if i >= 4:
                Q[i, i] = 1.0
                for k in range(4):
                    Q[i, k] -= bary[p0 + i, k]
        cm = c[e] * vol[e] / 20.0
        o = off[e]
        for i in range(n):
            gi = grad[p0 + i]
            for j in range(i, n):
                gj = grad[p0 + j]
                aij = vol[e] * 0.5 * (KG[i, 0] * gj[0] + KG[i, 1] * gj[1] + KG[i, 2] * gj[2]
                                      + KG[j, 0] * gi[0] + KG[j, 1] * gi[1] + KG[j, 2] * gi[2])
                vv = 0.0
                for k in range(4):
                    vv += V[i, k] * V[j, k]
                mij = cm * (vv + sv[i] * sv[j])
                qq = 0.0
                for r in range(4, n):
                    qq += Q[r, i] * Q[r, j]
                sij = h[e] * qq
                a[o + i * n + j] = aij
                a[o + j * n + i] = aij
                m[o + i * n + j] = mij
                m[o + j * n + i] = mij
                s[o + i * n + j] = sij
                s[o + j * n + i] = sij
    return a, m, s


def local_matrices_numba(dof_ptr, grad, const, bary, vol, h, vert_coords, K, c):
    _, off = _pair_offsets(dof_ptr)
    return local_matrices_numba_kernel(dof_ptr, off, grad, const, bary, vol, h,
                                       np.ascontiguousarray(vert_coords), K, c)


def local_matrices(*args):
    """Flattened (row-major, element order) consistency, mass and stabilization matrices."""
    if numba_enabled():
        return local_matrices_numba(*args)
    return local_matrices_numpy(*args)


# ---------------------------------------------------------------------------
# transpose of the hanging-node prolongation
# ---------------------------------------------------------------------------
def restrict_to_parents_numpy(r, lam, parent_edge):
    out = np.array(r, dtype=float)
    for level in range(int(lam.max(initial=0)), 0, -1):
        nodes = np.flatnonzero(lam == level)
        half = 0.5 * out[nodes]
        np.add.at(out, parent_edge[nodes, 0], half)
        np.add.at(out, parent_edge[nodes, 1], half)
    return out


@njit
def restrict_to_parents_numba(r, lam, parent_edge):
    out = r.copy()
    for i in range(out.shape[0] - 1, -1, -1):
        if lam[i] > 0:
            out[parent_edge[i, 0]] += 0.5 * out[i]
            out[parent_edge[i, 1]] += 0.5 * out[i]
    return out


def restrict_to_parents(r, lam, parent_edge):
    """Apply the transpose of recursive midpoint prolongation from proper nodes.

    Each hanging node passes half of its (accumulated) value to both
    endpoints of its parent edge, deepest nodes first.  Entries left on
    proper nodes are the pairings with the continuous piecewise-linear hats.
    """
    r = np.ascontiguousarray(r, dtype=float)
    lam = np.ascontiguousarray(lam, dtype=np.int64)
    parent_edge = np.ascontiguousarray(parent_edge, dtype=np.int64)
    if numba_enabled():
        return restrict_to_parents_numba(r, lam, parent_edge)
    return restrict_to_parents_numpy(r, lam, parent_edge)
