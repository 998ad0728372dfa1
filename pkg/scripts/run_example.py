"""Run one of the built-in demonstrations and write its artifacts.

    python scripts/run_example.py "example1_alpha(2)" --scale desk --out out/ex1_a2
"""
import argparse
import sys

from mfid.config import build_example, with_output
from mfid.io import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("name")
    ap.add_argument("--scale", default="desk", choices=["desk", "full"])
    ap.add_argument("--out", default=None)
    ap.add_argument("--progress", type=int, default=500)
    args = ap.parse_args()
    cfg = build_example(args.name, args.scale)
    if args.out:
        cfg = with_output(cfg, args.out)

    def show(state, res):
        if state.iter % args.progress == 0:
            print(f"{state.iter:7d}  E={state.energy_history[-1]:.6g}  "
                  f"cont={res.continuity:.2e}  opt={res.max():.2e}", flush=True)

    status, state, report = run_experiment(cfg, callback=show)
    print(f"status {status} after {state.iter} iterations; max residual {report['max']:.2e}, "
          f"mass identity {report['mass_identity']:.2e}")
    return status


if __name__ == "__main__":
    sys.exit(main())
