"""Terminal error of the variational time stepper against explicit heat flow.

Halving the macro step should roughly halve the error.
"""
import argparse

import numpy as np

from mfid.grid import Grid
from mfid.jko import JkoConfig, jko_trajectory
from mfid.mobility import catalog_lookup
from mfid.reference import RDProblem, rd_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--T", type=float, default=4e-3)
    ap.add_argument("--steps", type=int, nargs="*", default=[2, 4, 8])
    args = ap.parse_args()
    g = Grid(args.n, args.n, 2)
    x1, x2 = g.cell_centers()
    u0 = 1 + 4 * np.exp(-30 * ((x1 - 0.4) ** 2 + (x2 - 0.55) ** 2))
    n_ref = int(np.ceil(args.T / (g.dx1**2 / 40)))
    ref = rd_trajectory(u0, RDProblem.from_catalog("wasserstein", g, args.T / n_ref), n_ref)[-1]
    pair, spec, _ = catalog_lookup("wasserstein")
    prev = None
    for m in args.steps:
        u = jko_trajectory(u0, JkoConfig(args.T / m, m, pair, spec, args.n, args.n))[-1]
        err = float(np.max(np.abs(u - ref)))
        ratio = "" if prev is None else f"  ratio {prev / err:.3f}"
        print(f"N={m:3d}  h={args.T / m:.2e}  max error {err:.4e}{ratio}", flush=True)
        prev = err


if __name__ == "__main__":
    main()
