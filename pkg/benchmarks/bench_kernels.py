"""Numpy vs numba timings of the hot kernels on an adaptively refined Fichera mesh.

Usage: python benchmarks/bench_kernels.py [--max-dofs N] [--repeat R]
"""
import argparse
import os
import time
import timeit

import numpy as np

from avem3d import kernels, system, vem
from avem3d.driver import GalerkinConfig, galerkin_loop
from avem3d.fichera import fichera_problem


def adaptive_snapshot(max_dofs):
    last = {}
    cfg = GalerkinConfig(lambda_max=10, max_ndofs=max_dofs)
    galerkin_loop(fichera_problem(0.5), cfg, lambda rec, state: last.update(state=state))
    return last["state"]


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-dofs", type=int, default=8000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    state = adaptive_snapshot(args.max_dofs)
    snap = state.snap
    print(f"mesh: {snap.n_nodes} nodes, {snap.n_elements} leaves, {len(snap.dof_node)} local dofs, "
          f"Lambda_T = {snap.lambda_max}")

    geo = vem.element_geometry_arrays(snap)
    pargs = (snap.coords, snap.dof_ptr, snap.dof_node, snap.fac_elem, snap.fac_face, snap.seg_fac,
             snap.seg_a, snap.seg_b, geo.volume, geo.face_normals, geo.face_areas, geo.vert_coords)
    proj = vem.build_projectors(snap)
    largs = (snap.dof_ptr, proj.grad, proj.const, proj.bary, geo.volume, geo.h, geo.vert_coords,
             state.data.K, state.data.c)
    r = np.random.default_rng(0).standard_normal(snap.n_nodes)
    cases = [
        ("projector_entries", kernels.projector_entries_numpy, kernels.projector_entries_numba, pargs),
        ("local_matrices", kernels.local_matrices_numpy, kernels.local_matrices_numba, largs),
        ("node_lambda", kernels.node_lambda_numpy, kernels.node_lambda_numba,
         (snap.is_proper, snap.parent_edge)),
        ("restrict_to_parents", kernels.restrict_to_parents_numpy, kernels.restrict_to_parents_numba,
         (r, snap.lam, snap.parent_edge)),
    ]
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, f_np, f_nb, a in cases:
        t0 = time.perf_counter()
        f_nb(*a)  # compile (or load from cache)
        jit = time.perf_counter() - t0
        t_np = best(lambda: f_np(*a), args.repeat)
        t_nb = best(lambda: f_nb(*a), args.repeat)
        print(f"{name:<22}{1e3 * t_np:>12.2f}{1e3 * t_nb:>12.2f}{t_np / t_nb:>10.1f}   (first call {jit:.2f}s)")

    # end to end: projectors, assembly and estimator under both settings of the flag
    for flag in ("0", "1"):
        os.environ["AVEM3D_NUMBA"] = flag

        def step():
            p = vem.build_projectors(snap)
            system.assemble(snap, state.data, 1.0, None, p)

        step()
        print(f"assemble with AVEM3D_NUMBA={flag}: {1e3 * best(step, args.repeat):.1f} ms")


if __name__ == "__main__":
    main()
