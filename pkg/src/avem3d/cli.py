"""Command-line entry point: ``avem3d run`` and ``avem3d compare``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import _accel
from .driver import GalerkinConfig, galerkin_loop
from .fichera import fichera_problem
from .io import write_csv, write_joined_csv, write_solution_vtk

PROBLEMS = {"fichera": fichera_problem}


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _add_common(p):
    p.add_argument("--problem", choices=sorted(PROBLEMS), default="fichera")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=0.0, help="stop once eta < tol")
    p.add_argument("--max-dofs", type=_positive_int, default=38000)
    p.add_argument("--cg-tol", type=float, default=1e-10)
    p.add_argument("--threads", type=int, default=0, help="cap on internal threads (0: library default)")
    p.add_argument("--check-orthogonality", action="store_true",
                   help="evaluate the Galerkin quasi-orthogonality residual every iteration")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="avem3d", description="Adaptive VEM on tetrahedral meshes with hanging nodes")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one adaptive loop")
    _add_common(run)
    run.add_argument("--lambda-max", type=int, default=10, help="largest global index; 0 selects AFEM")
    run.add_argument("--csv", type=Path, required=True)
    run.add_argument("--vtk-dir", type=Path)
    run.add_argument("--vtk-every", type=int, default=0, help="write VTK every N iterations (0: last only)")
    cmp_ = sub.add_parser("compare", help="AFEM (lambda 0) and AVEM back to back, joined CSV")
    _add_common(cmp_)
    cmp_.add_argument("--lambda-max", type=_positive_int, default=10, help="AVEM global index bound")
    cmp_.add_argument("--csv", type=Path, required=True)
    return parser


def _config(args, lambda_max):
    cfg = GalerkinConfig(lambda_max=lambda_max, theta=args.theta, gamma=args.gamma, tol=args.tol,
                         max_ndofs=args.max_dofs, cg_tol=args.cg_tol,
                         check_orthogonality=args.check_orthogonality)
    cfg.validate()
    return cfg


def _problem(args):
    return PROBLEMS[args.problem](args.alpha)


def _run(args, out=None):
    out = sys.stdout if out is None else out
    problem = _problem(args)
    cfg = _config(args, args.lambda_max)
    if args.vtk_dir is not None:
        args.vtk_dir.mkdir(parents=True, exist_ok=True)
    last = {}

    def cb(rec, state):
        every = args.vtk_every
        if args.vtk_dir is not None and every > 0 and rec.iter % every == 0:
            write_solution_vtk(args.vtk_dir / f"iter_{rec.iter:04d}.vtk", state.snap, state.u,
                               state.report.eta2_local)
        last["state"], last["rec"] = state, rec

    t0 = time.perf_counter()
    records = galerkin_loop(problem, cfg, cb)
    write_csv(records, args.csv)
    if args.vtk_dir is not None and args.vtk_every <= 0:
        st, rec = last["state"], last["rec"]
        write_solution_vtk(args.vtk_dir / f"iter_{rec.iter:04d}.vtk", st.snap, st.u, st.report.eta2_local)
    r = records[-1]
    print(f"{problem.name} lambda_max={cfg.lambda_max} iterations={len(records)} ndofs={r.ndofs} "
          f"cells={r.ncells} eta={r.eta:.6e} h1err={r.h1err:.6e} time={time.perf_counter() - t0:.1f}s",
          file=out)
    return 0


def _compare(args, out=None):
    out = sys.stdout if out is None else out
    problem = _problem(args)
    runs = []
    for label, lam in (("afem", 0), ("avem", args.lambda_max)):
        t0 = time.perf_counter()
        recs = galerkin_loop(problem, _config(args, lam))
        runs.append((label, recs))
        r = recs[-1]
        print(f"{label} lambda_max={lam} iterations={len(recs)} ndofs={r.ndofs} cells={r.ncells} "
              f"eta={r.eta:.6e} h1err={r.h1err:.6e} time={time.perf_counter() - t0:.1f}s", file=out)
    write_joined_csv(runs, args.csv)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _accel.set_threads(args.threads)
    try:
        if args.command == "run":
            return _run(args)
        return _compare(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"avem3d: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
