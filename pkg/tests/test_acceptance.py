"""Acceptance gate: one PASS/FAIL line per criterion, shown in the terminal summary."""
import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from avem3d import estimator, system, vem
from avem3d.estimator import h1_seminorm_oracle, stab_term
from avem3d.mesh import MeshForest, fichera_cubes

from conftest import ACCEPTANCE_LINES, exact_volume, facet_partition_exact, random_admissible_mesh
from test_system import textbook_p1

CG_TOL = 1e-10
PATCH_CASES = [(11, 1, 3), (12, 2, 3), (13, 3, 4), (14, 2, 5), (15, 3, 3)]
GRAD = np.array([0.7, -1.3, 2.1])


def report(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[f"{n:02d}"] = line
    print(line)
    return ok


def loglog_slope(x, y):
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def loglog_interp(xq, x, y):
    order = np.argsort(x)
    return np.exp(np.interp(np.log(xq), np.log(np.asarray(x)[order]), np.log(np.asarray(y)[order])))


@pytest.fixture(scope="module")
def patch_meshes():
    return [(lam, random_admissible_mesh(seed, lam, rounds)) for seed, lam, rounds in PATCH_CASES]


def _lin(x):
    return -0.4 + x @ GRAD


def test_criterion_01_patch(patch_meshes):
    worst_err, worst_eta = 0.0, 0.0
    scale = 7.0 * GRAD @ GRAD
    for _, m in patch_meshes:
        snap = m.snapshot()
        assert (~snap.is_proper).any()
        data = system.ElementData.constant(snap.n_elements)
        sysm = system.assemble(snap, data, 1.0, _lin(snap.coords))
        u, _ = system.solve_cg(sysm, 1e-14)
        worst_err = max(worst_err, np.abs(u - _lin(snap.coords)).max())
        worst_eta = max(worst_eta, estimator.global_estimate(snap, u, data).eta2 / scale)
    ok = worst_err <= 1e-8 and worst_eta <= 1e-16
    assert report(1, ok, f"max nodal error {worst_err:.2e}, eta^2/scale {worst_eta:.2e}")


def test_criterion_02_consistency(patch_meshes):
    worst = 0.0
    gnorm = np.linalg.norm(GRAD)
    n_leaves = 0
    for _, m in patch_meshes:
        X = m.coords_array()
        v = _lin(X)
        for t in sorted(m.leaves):
            n_leaves += 1
            el = vem.element_local(m, t)
            geo = m.element_geometry(t)
            for k, poly, _ in el.facets:
                n = geo.face_normals[k]
                p, _ = vem.facet_projector(X[list(poly)], v[list(poly)], n)
                worst = max(worst, np.abs(p.grad - (GRAD - (GRAD @ n) * n)).max() / gnorm)
            vals = v[list(el.nodes)]
            p = el.project(vals)
            worst = max(worst, np.abs(p.grad - GRAD).max() / gnorm, abs(p.c0 + 0.4) / gnorm)
            interp, diff = el.interpolate(vals)
            worst = max(worst, np.abs(interp.grad - GRAD).max() / gnorm, np.abs(diff).max() / np.abs(vals).max())
            A, _, _ = el.matrices()
            worst = max(worst, np.abs(A.sum(axis=1)).max() / np.abs(A).max())
    assert report(2, worst <= 1e-12, f"{n_leaves} leaves, worst relative defect {worst:.2e}")


def test_criterion_03_mesh_kernels(patch_meshes):
    fails = []
    for lam, m in patch_meshes:
        if sum(exact_volume(m, t) for t in m.leaves) != 7:
            fails.append("volume")
        if not all(facet_partition_exact(m, t) for t in m.leaves):
            fails.append("facet partition")
    for seed in (1, 2):
        m = random_admissible_mesh(seed, 0, 5)
        if not m.status.is_proper.all():
            fails.append("conforming closure")
    for lam in (1, 2, 3):
        m = MeshForest.from_cubes(fichera_cubes())
        rng = np.random.default_rng(lam)
        for _ in range(6):
            leaves = sorted(m.leaves)
            pick = rng.choice(leaves, max(1, len(leaves) // 5), replace=False)
            m.refine_set(sorted(int(t) for t in pick), "admissible", lam)
            st = m.status
            if st.lambda_max > lam:
                fails.append(f"Lambda_T > {lam}")
            for t in m.leaves:
                lv = st.lam[list(m.tet_verts[t])]
                if lv[0] > 0 and np.all(lv == lv[0]):
                    fails.append("all-equal lambda")
                chain = m.ancestor_chain(t)
                if chain and len(chain) - 1 > 3 * (lam - 1):
                    fails.append("ancestor chain")
    m = MeshForest.from_cubes(fichera_cubes())
    for k in range(1, 5):
        m.uniform_refine(1)
        if len(m.leaves) != 42 * 2 ** k:
            fails.append("uniform counts")
    detail = "volume, facets, closure, Lambda_T, lambda, chains, uniform counts" if not fails else ", ".join(
        sorted(set(fails)))
    assert report(3, not fails, detail)


def test_criterion_04_quasi_orthogonality(avem_run):
    qo = np.array([r.qo_residual for r in avem_run.records[:10]])
    ok = bool(np.all(qo <= 10 * CG_TOL))
    assert report(4, ok, f"max residual over first 10 solves {qo.max():.2e} (limit {10 * CG_TOL:.0e})")


def test_criterion_05_rate(avem_run):
    recs = avem_run.records[-6:]
    nd = [r.ndofs for r in recs]
    s_err = loglog_slope(nd, [r.h1err for r in recs])
    s_eta = loglog_slope(nd, [r.eta for r in recs])
    ok = (-0.45 <= s_err <= -0.22 and -0.45 <= s_eta <= -0.22 and avem_run.seconds <= 300)
    assert report(5, ok, f"slopes h1 {s_err:.3f}, eta {s_eta:.3f}; final ndofs {nd[-1]}; "
                         f"{avem_run.seconds:.0f}s")


def test_criterion_06_stabilization(avem_run):
    ratio = np.array([r.stab / r.eta2 for r in avem_run.records])
    q = max(1, len(ratio) // 4)
    first, last = ratio[:q].max(), ratio[-q:].max()
    ok = bool(ratio[3:].max() <= 1.0) and last <= 2 * first
    assert report(6, ok, f"max S_T/eta^2 after iteration 3 {ratio[3:].max():.3e}; "
                         f"quartile maxima {first:.3e} -> {last:.3e}")


def test_criterion_07_economy(avem_run, afem_run):
    av = [r for r in avem_run.records]
    af = [r for r in afem_run.records]
    af_err = np.array([r.h1err for r in af])
    matched = [r for r in av if af_err.min() <= r.h1err <= af_err.max()]
    matched = sorted(matched, key=lambda r: r.h1err)[:3]
    cell_ratio = [r.ncells / loglog_interp(r.h1err, af_err, [a.ncells for a in af]) for r in matched]
    av_ref = [r for r in av if r.n_refined > 0]
    af_ref = [r for r in af if r.n_refined > 0]
    af_nd = np.array([r.ndofs for r in af_ref])
    m2 = sorted([r for r in av_ref if af_nd.min() <= r.ndofs <= af_nd.max()], key=lambda r: -r.ndofs)[:3]
    ref_ratio = [r.n_refined / loglog_interp(r.ndofs, af_nd, [a.n_refined for a in af_ref]) for r in m2]
    secs = avem_run.seconds + afem_run.seconds
    ok = (len(matched) == 3 and len(m2) == 3 and max(cell_ratio) <= 0.85 and max(ref_ratio) <= 0.85
          and secs <= 600)
    assert report(7, ok, "cell ratios at matched error " + ", ".join(f"{x:.3f}" for x in cell_ratio)
                  + "; refined ratios at matched ndofs " + ", ".join(f"{x:.3f}" for x in ref_ratio)
                  + f"; final cells {av[-1].ncells} vs {af[-1].ncells}; {secs:.0f}s")


def test_criterion_08_lambda(avem_run):
    lam = [r.lambda_max for r in avem_run.records]
    ok = set(lam[1:]) <= {1, 2} and not any(avem_run.equal_lambda_leaves)
    assert report(8, ok, f"Lambda_T per iteration {sorted(set(lam[1:]))}")


def test_criterion_09_oracles():
    worst = 0.0
    for seed in (3, 4):
        snap = random_admissible_mesh(seed, 0, 3).snapshot()
        n = snap.n_elements
        rng = np.random.default_rng(seed)
        B = rng.standard_normal((n, 3, 3))
        data = system.ElementData(np.einsum("nij,nkj->nik", B, B) + np.eye(3), rng.random(n), rng.standard_normal(n))
        sysm = system.assemble(snap, data)
        Bt, Ft = textbook_p1(snap, data.K, data.c, data.f)
        worst = max(worst, np.abs(sysm.full_matrix.toarray() - Bt).max() / np.abs(Bt).max(),
                    np.abs(sysm.full_rhs - Ft).max() / np.abs(Ft).max())
    cg_worst = 0.0
    rng = np.random.default_rng(0)
    for n in (10, 50, 200):
        Q = rng.standard_normal((n, n))
        A = Q @ Q.T + n * np.eye(n)
        b = rng.standard_normal(n)
        x = system.pcg(sp.csr_matrix(A), b, rel_tol=1e-13).x
        y = sla.cho_solve(sla.cho_factor(A), b)
        cg_worst = max(cg_worst, np.abs(x - y).max() / np.abs(y).max())
    ok = worst <= 1e-12 and cg_worst <= 1e-8
    assert report(9, ok, f"FEM entrywise {worst:.2e}, CG vs Cholesky {cg_worst:.2e}")


def test_criterion_10_seminorm_equivalence():
    by_depth = {}
    for seed in range(20):
        lam, rounds = 1 + seed % 3, 3 + seed % 5
        m = random_admissible_mesh(100 + seed, lam, rounds, frac=0.3)
        snap = m.snapshot()
        rng = np.random.default_rng(seed)
        for _ in range(20):
            v = rng.standard_normal(snap.n_nodes)
            by_depth.setdefault(rounds, []).append(h1_seminorm_oracle(m, v, True) / stab_term(snap, v))
    allr = np.concatenate(list(by_depth.values()))
    C = max(allr.max(), 1.0 / allr.min())
    depths = sorted(by_depth)
    shallow = np.concatenate([by_depth[d] for d in depths[:2]])
    deep = np.concatenate([by_depth[d] for d in depths[-2:]])

    def width(r):
        return np.log(r.max() / r.min())

    ok = C <= 50 and width(deep) <= 1.5 * width(shallow)
    assert report(10, ok, f"band [{allr.min():.3f}, {allr.max():.3f}], C = {C:.2f}; log-width "
                          f"shallow {width(shallow):.3f}, deep {width(deep):.3f}")
