"""Command-line front end: ``mfid solve|example|verify|reference``."""
import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .config import build_example, build_problem, emit_config, parse_config, with_output
from .errors import MfidError
from .io import read_fields, residual_report, run_experiment, write_snapshot
from .reference import RDProblem, de_bruijn_defect, lyapunov_trace, rd_trajectory


def _load(path):
    with open(path) as fh:
        return parse_config(fh.read())


def _progress(every):
    def cb(state, res):
        if every and state.iter % every == 0:
            print(f"iter {state.iter} energy {state.energy_history[-1]!r} "
                  f"continuity {res.continuity:.3e} optimality {res.max():.3e}",
                  file=sys.stderr, flush=True)
    return cb


def _finish(status, state, report, out_dir):
    print(f"converged: {state.converged}  iterations: {state.iter}")
    if state.energy_history:
        print(f"energy: {state.energy_history[-1]!r}")
    for k, v in report.items():
        print(f"{k}: {v!r}")
    print(f"artifacts: {os.path.abspath(out_dir)}")
    return status


def cmd_solve(args):
    cfg = with_output(_load(args.config), args.out)
    if args.max_iters is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, max_iters=args.max_iters))
    status, state, report = run_experiment(cfg, callback=_progress(args.progress))
    return _finish(status, state, report, cfg.output_dir)


def cmd_example(args):
    cfg = with_output(build_example(args.name, args.scale), args.out)
    if args.max_iters is not None:
        cfg = replace(cfg, solver=replace(cfg.solver, max_iters=args.max_iters))
    if args.print_config:
        print(emit_config(cfg), end="")
        return 0
    status, state, report = run_experiment(cfg, callback=_progress(args.progress))
    return _finish(status, state, report, cfg.output_dir)


def cmd_verify(args):
    cfg = _load(args.config)
    path = args.fields or os.path.join(cfg.output_dir, "fields.bin")
    grid, state = read_fields(path)
    problem = build_problem(cfg)
    if grid != problem.grid:
        raise MfidError(f"{path} holds a {grid} field, config describes {problem.grid}")
    report = residual_report(state, problem)
    for k, v in report.items():
        print(f"{k}: {v!r}")
    ok = report["max"] < args.tol
    print("certified" if ok else f"not certified at tolerance {args.tol!r}")
    return 0 if ok else 1


def cmd_reference(args):
    cfg = _load(args.config)
    grid = cfg.grid
    u0 = cfg.initial.evaluate(grid)
    prob = RDProblem.from_catalog(cfg.mobility, grid, 1.0, cfg.params(), face=args.face)
    dt = args.dt if args.dt is not None else 0.5 * prob.stable_step(u0)
    prob.dt_explicit = dt
    traj = rd_trajectory(u0, prob, args.steps)
    trace = lyapunov_trace(traj, prob)
    defect = de_bruijn_defect(trace, dt)
    out = args.out or os.path.join(cfg.output_dir, "reference")
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "de_bruijn.csv"), "w") as fh:
        fh.write("step,t,G,I,defect\n")
        for n, (G, I) in enumerate(trace):
            d = defect[n] if n < len(defect) else float("nan")
            fh.write(f"{n},{n * dt:.17g},{G:.17g},{I:.17g},{d:.17g}\n")
    write_snapshot(os.path.join(out, "u_final.csv"), traj[-1])
    G = np.array([t[0] for t in trace])
    print(f"dt: {dt!r}  steps: {args.steps}")
    print(f"G: {G[0]!r} -> {G[-1]!r}")
    print(f"max de Bruijn defect: {float(defect.max()) if defect.size else 0.0!r}")
    print(f"max G increase per step: {float(np.diff(G).max()) if G.size > 1 else 0.0!r}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mfid", description="Mean-field information control solver")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve the problem described by a config file")
    s.add_argument("config")
    s.add_argument("--out", default=None)
    s.add_argument("--max-iters", type=int, default=None)
    s.add_argument("--progress", type=int, default=0, metavar="N",
                   help="print a progress line every N iterations")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("example", help="run a built-in demonstration")
    e.add_argument("name", help="example1_alpha(<alpha>) or example2_row(<1|2|3>)")
    e.add_argument("--scale", choices=("desk", "full"), default="desk")
    e.add_argument("--out", default=None)
    e.add_argument("--max-iters", type=int, default=None)
    e.add_argument("--progress", type=int, default=0, metavar="N")
    e.add_argument("--print-config", action="store_true",
                   help="print the resolved config instead of solving")
    e.set_defaults(func=cmd_example)

    v = sub.add_parser("verify", help="recompute optimality residuals of a saved state")
    v.add_argument("config")
    v.add_argument("--fields", default=None)
    v.add_argument("--tol", type=float, default=1e-4)
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("reference", help="explicit reaction-diffusion run with de Bruijn trace")
    r.add_argument("config")
    r.add_argument("--steps", type=int, default=200)
    r.add_argument("--dt", type=float, default=None)
    r.add_argument("--face", choices=("cell", "mean"), default="cell")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_reference)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MfidError, OSError) as exc:
        print(f"mfid: error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
