"""Explicit finite-difference reference integrator for the reaction-diffusion flow.

The update is the flux form

    u <- u + dt * [ div(V1(u) grad G'(u)) - V2(u) G'(u) ]

on the same staggered stencils as the control solver, with no-flux faces.
It is deliberately simple so it can serve as an oracle for the variational
solvers: nothing here touches the primal-dual code path.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, StepSizeError
from .grid import Grid, div_m1, grad_phi
from .mobility import (EntropySpec, MobilityPair, catalog_lookup, face_mobility,
                       information_functional)


@dataclass
class RDProblem:
    f_prime: Callable
    r: Callable
    g_spec: EntropySpec
    pair: MobilityPair
    grid: Grid  # only nx1, nx2 are used
    dt_explicit: float
    face: str = "cell"
    f: Optional[Callable] = None  # F itself, needed only by the direct Laplacian step

    def __post_init__(self):
        if not self.dt_explicit > 0:
            raise StepSizeError("explicit step must be positive")

    @classmethod
    def from_catalog(cls, name, grid, dt_explicit, params=None, face="cell"):
        pair, spec, src = catalog_lookup(name, params)
        if src is None:
            raise DomainError(f"mobility {name!r} has no reaction-diffusion source")
        return cls(src.f_prime, src.r, spec, pair, grid, dt_explicit, face, src.f)

    def stable_step(self, u):
        """Largest explicit step allowed by the diffusion bound at ``u``."""
        fp = np.asarray(self.f_prime(u), dtype=float)
        if np.any(fp < 0):
            raise DomainError("F' must be nonnegative on the sampled range")
        fmax = float(fp.max())
        h2 = min(self.grid.dx1, self.grid.dx2) ** 2
        return np.inf if fmax == 0 else h2 / (4.0 * fmax)


def _rhs_flux_form(u, prob):
    g = prob.grid
    gp = prob.g_spec.prime(u)
    out = np.zeros(u.shape)
    if not prob.pair.v1_zero:
        flux = face_mobility(prob.pair.v1(u), prob.face) * grad_phi(gp, g)
        out += div_m1(flux, g)
    if not prob.pair.v2_zero:
        out -= prob.pair.v2(u) * gp
    return out


def _check_step(u, prob):
    if not np.all(np.isfinite(u)):
        raise DomainError("non-finite density")
    limit = prob.stable_step(u)
    if prob.dt_explicit > limit * (1 + 1e-12):
        raise StepSizeError(f"dt = {prob.dt_explicit:g} exceeds the explicit limit {limit:g}")


def rd_step(u, prob):
    """One forward-Euler step of the flux-form discretization."""
    u = np.asarray(u, dtype=float)
    _check_step(u, prob)
    return u + prob.dt_explicit * _rhs_flux_form(u, prob)


def neumann_laplacian(v, grid):
    """Five-point Laplacian with reflecting ghost cells."""
    vx = np.pad(v, ((1, 1), (0, 0)), mode="edge")
    vy = np.pad(v, ((0, 0), (1, 1)), mode="edge")
    return ((vx[2:] - 2 * v + vx[:-2]) / grid.dx1**2
            + (vy[:, 2:] - 2 * v + vy[:, :-2]) / grid.dx2**2)


def rd_step_direct(u, prob):
    """Forward-Euler step of u_t = Lap F(u) + R(u), for comparison with the flux form."""
    if prob.f is None:
        raise DomainError("direct step needs F")
    u = np.asarray(u, dtype=float)
    _check_step(u, prob)
    return u + prob.dt_explicit * (neumann_laplacian(prob.f(u), prob.grid) + prob.r(u))


def rd_trajectory(u0, prob, n_steps, step=rd_step):
    """``[u0, u1, ..., u_{n_steps}]``."""
    out = [np.asarray(u0, dtype=float)]
    for _ in range(n_steps):
        out.append(step(out[-1], prob))
    return out


def lyapunov_value(u, prob):
    return prob.grid.cell_area * float(np.sum(prob.g_spec.value(u)))


def lyapunov_trace(u_sequence, prob):
    """Per-slice ``(G(u), I(u))`` along a trajectory."""
    return [(lyapunov_value(u, prob),
             information_functional(u, prob.pair, prob.g_spec, prob.grid, prob.face))
            for u in u_sequence]


def de_bruijn_defect(trace, dt):
    """``|(G_{n+1} - G_n)/dt + I_n|`` for each step of a trace."""
    G = np.array([t[0] for t in trace])
    I = np.array([t[1] for t in trace])
    return np.abs(np.diff(G) / dt + I[:-1])
