"""Final energies of the three mobility rows of the two-bump splitting problem.

Long-running: each row at full scale needs far more iterations than the
acceptance budget. Use --max-iters to cap a row.
"""
import argparse
import time
from dataclasses import replace

from mfid.config import EXAMPLE2_ROWS, build_example, build_problem
from mfid.pdhg import energy, optimality_residuals, solve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", default="full", choices=["desk", "full"])
    ap.add_argument("--max-iters", type=int, default=100000)
    ap.add_argument("--rows", type=int, nargs="*", default=sorted(EXAMPLE2_ROWS))
    args = ap.parse_args()
    for row in args.rows:
        cfg = build_example(f"example2_row({row})", args.scale)
        problem = build_problem(cfg)
        t0 = time.perf_counter()
        state = solve(problem, replace(cfg.solver, max_iters=args.max_iters))
        res = optimality_residuals(state, problem)
        print(f"row {row} ({EXAMPLE2_ROWS[row]}): E={energy(state, problem):.6g} "
              f"converged={state.converged} its={state.iter} max residual={res.max():.2e} "
              f"[{time.perf_counter() - t0:.0f}s]", flush=True)


if __name__ == "__main__":
    main()
