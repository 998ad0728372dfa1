"""Variational (JKO-type) time stepping built from repeated control solves.

A macro step of length h maps u_k to the terminal density of

    min  int_0^h kinetic dt + G(u(h)),    u(0) = u_k.

Substituting t = h s and m = m_tilde / h turns this into the unit-time
problem with terminal functional h*G, which is what the inner solver sees.
Its dual potential relates to the physical one by phi = phi_tilde / h.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import SolverError
from .grid import Grid
from .mobility import EntropySpec, MobilityPair, PotentialSpec
from .pdhg import ControlProblem, SolveConfig, SolverState, build_plan, initial_state, solve


@dataclass
class JkoConfig:
    outer_dt: float
    n_outer: int
    pair: MobilityPair
    spec: EntropySpec
    nx1: int
    nx2: int
    inner: SolveConfig = field(default_factory=lambda: SolveConfig(tol_residual=1e-7,
                                                                   tol_energy_rel=1e-10))
    inner_nt: int = 4
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    warm_start: bool = True

    def __post_init__(self):
        if not self.outer_dt > 0:
            raise ValueError("outer_dt must be positive")
        if self.inner_nt < 2:
            raise ValueError("inner_nt must be at least 2")
        if self.n_outer < 0:
            raise ValueError("n_outer must be nonnegative")
        if self.spec.is_indicator:
            raise ValueError("the macro step needs a Lyapunov terminal, not an indicator")

    @property
    def inner_grid(self):
        return Grid(self.nx1, self.nx2, self.inner_nt)


@dataclass
class JkoStep:
    u: np.ndarray
    state: SolverState
    terminal_dual_gap: float  # max |phi(t_{k+1}) + G'(u_{k+1})| in physical units


def macro_problem(u_k, cfg):
    """Unit-time control problem of one macro step."""
    return ControlProblem(cfg.inner_grid, cfg.pair, u_k, cfg.spec.scaled(cfg.outer_dt),
                          cfg.potential)


def jko_solve(u_k, cfg, warm: Optional[SolverState] = None, plan=None):
    """One macro step with full diagnostics."""
    problem = macro_problem(np.asarray(u_k, dtype=float), cfg)
    plan = plan or build_plan(problem.grid, free_terminal=True)
    state = initial_state(problem)
    if warm is not None:
        state.phi = warm.phi.copy()
        state.m1 = warm.m1.copy()
        state.m2 = warm.m2.copy()
    state = solve(problem, cfg.inner, state=state, plan=plan)
    if not state.converged:
        raise SolverError(f"inner solve did not converge in {state.iter} iterations",
                          state=state)
    u_next = state.u[-1].copy()
    gap = float(np.max(np.abs(state.phi[-1] / cfg.outer_dt + cfg.spec.prime(u_next))))
    return JkoStep(u_next, state, gap)


def jko_step(u_k, cfg, warm=None):
    """Terminal density of one macro step."""
    return jko_solve(u_k, cfg, warm).u


def jko_trajectory(u0, cfg, return_steps=False):
    """``[u0, u1, ..., u_{n_outer}]``; inner failures are re-raised with the step index."""
    plan = build_plan(cfg.inner_grid, free_terminal=True)
    out = [np.asarray(u0, dtype=float)]
    steps = []
    warm = None
    for k in range(cfg.n_outer):
        try:
            st = jko_solve(out[-1], cfg, warm if cfg.warm_start else None, plan)
        except SolverError as exc:
            raise SolverError(f"macro step {k}: {exc}", state=exc.state, data={"step": k}) from exc
        out.append(st.u)
        steps.append(st)
        warm = st.state
    return (out, steps) if return_steps else out
