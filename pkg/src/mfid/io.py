"""On-disk artifacts of an experiment run.

Files written to the output directory:

``u_t{n:04}.csv``
    density at time level ``n``; ``nx1`` rows of ``nx2`` values, 17 significant digits.
``snapshots.csv``
    ``requested_t,level,actual_t,file`` for every snapshot.
``fields.bin``
    little-endian binary dump: an 8-value int64 header ``(magic, version,
    nx1, nx2, nt, 0, 0, 0)`` followed by float64 arrays ``u``, ``m1``
    (two components), ``m2``, ``phi`` and ``psi`` in C order.
``energy.csv``
    ``iter,energy,continuity_residual,optimality_max`` per logged iteration.
``residuals.csv``
    ``name,value`` rows: the five optimality residuals, the mass identity
    error, the iteration count and the convergence flag.
``config.ini``
    the resolved configuration.
"""
import os

import numpy as np

from .config import build_problem, emit_config, snapshot_levels
from .errors import ConfigError, SolverError
from .grid import Grid
from .pdhg import SolverState, mass_identity_error, optimality_residuals, solve

MAGIC = 0x4D464944  # "MFID"
VERSION = 1

EXIT_CONVERGED = 0
EXIT_NOT_CONVERGED = 1
EXIT_DIVERGED = 2


def _g17(x):
    return format(float(x), ".17g")


def write_snapshot(path, u):
    np.savetxt(path, u, fmt="%.17g", delimiter=",")


def read_snapshot(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_fields(path, state, grid):
    header = np.array([MAGIC, VERSION, grid.nx1, grid.nx2, grid.nt, 0, 0, 0], dtype="<i8")
    psi = state.psi if state.psi is not None else grid.zeros()
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        for arr in (state.u, state.m1, state.m2, state.phi, psi):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_fields(path):
    """Return ``(grid, state)`` from a ``fields.bin`` file."""
    raw = open(path, "rb").read()
    header = np.frombuffer(raw[:64], dtype="<i8")
    if header.size != 8 or header[0] != MAGIC:
        raise ConfigError(f"{path} is not a fields dump")
    if header[1] != VERSION:
        raise ConfigError(f"{path}: unsupported version {header[1]}")
    grid = Grid(int(header[2]), int(header[3]), int(header[4]))
    data = np.frombuffer(raw[64:], dtype="<f8")
    n = int(np.prod(grid.shape))
    if data.size != 6 * n:
        raise ConfigError(f"{path}: expected {6 * n} values, found {data.size}")
    u, m1, m2, phi, psi = (data[:n], data[n:3 * n], data[3 * n:4 * n], data[4 * n:5 * n],
                           data[5 * n:])
    state = SolverState(u=u.reshape(grid.shape).copy(), m1=m1.reshape(grid.flux_shape).copy(),
                        m2=m2.reshape(grid.shape).copy(), phi=phi.reshape(grid.shape).copy(),
                        psi=psi.reshape(grid.shape).copy())
    return grid, state


def write_energy_log(path, log):
    with open(path, "w") as fh:
        fh.write("iter,energy,continuity_residual,optimality_max\n")
        for it, e, c, o in log:
            fh.write(f"{it},{_g17(e)},{_g17(c)},{_g17(o)}\n")


def read_energy_log(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return rows


def residual_report(state, problem):
    res = optimality_residuals(state, problem)
    out = dict(res.as_dict())
    out["max"] = res.max()
    out["mass_identity"] = mass_identity_error(state, problem.grid)
    return out


def write_residuals(path, report, state):
    with open(path, "w") as fh:
        fh.write("name,value\n")
        for k, v in report.items():
            fh.write(f"{k},{_g17(v)}\n")
        fh.write(f"iterations,{state.iter}\n")
        fh.write(f"converged,{int(state.converged)}\n")


def write_artifacts(out_dir, cfg, problem, state):
    os.makedirs(out_dir, exist_ok=True)
    grid = problem.grid
    with open(os.path.join(out_dir, "config.ini"), "w") as fh:
        fh.write(emit_config(cfg))
    with open(os.path.join(out_dir, "snapshots.csv"), "w") as fh:
        fh.write("requested_t,level,actual_t,file\n")
        for t, n, actual in snapshot_levels(cfg.snapshot_times, grid):
            name = f"u_t{n:04}.csv"
            write_snapshot(os.path.join(out_dir, name), state.u[n])
            fh.write(f"{_g17(t)},{n},{_g17(actual)},{name}\n")
    write_fields(os.path.join(out_dir, "fields.bin"), state, grid)
    write_energy_log(os.path.join(out_dir, "energy.csv"), state.log)
    report = residual_report(state, problem)
    write_residuals(os.path.join(out_dir, "residuals.csv"), report, state)
    return report


def run_experiment(cfg, out_dir=None, callback=None):
    """Solve, write every artifact, and return ``(exit_status, state, report)``.

    A diverged solve still writes artifacts from its last iterate.
    """
    out_dir = out_dir or cfg.output_dir
    problem = build_problem(cfg)
    status = EXIT_CONVERGED
    try:
        state = solve(problem, cfg.solver, callback=callback)
        if not state.converged:
            status = EXIT_NOT_CONVERGED
    except SolverError as exc:
        if exc.state is None:
            raise
        state = exc.state
        status = EXIT_DIVERGED
    report = write_artifacts(out_dir, cfg, problem, state)
    return status, state, report
