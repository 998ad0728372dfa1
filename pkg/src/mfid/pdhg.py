"""G-prox primal-dual iteration for the mean-field information control problem.

Discrete problem (w = dt*dx1*dx2, a = dx1*dx2, K = nt - 1)::

    min   w * sum_{n=1..K} [ |m1|^2/(2 V1(u)) + m2^2/(2 V2(u)) + s(u) ] + a * sum G(u_K)
    s.t.  (u_n - u_{n-1})/dt + div m1_n - m2_n = 0,   n = 1..K,   u_0 given.

The dual potential phi lives on levels 1..K; level 0 stores a ghost copy of
level 1. With an indicator terminal the density at level K is pinned to the
target; otherwise it is a primal unknown updated by an exact proximal step.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, SolverError
from .grid import Grid, apply_A, div_m1, dt_phi, grad_phi
from .mobility import DELTA, EntropySpec, MobilityPair, PotentialSpec
from .preconditioner import build_plan, solve_AAt


@dataclass(frozen=True)
class AffineParams:
    """V1 = c1 (u + c3), V2 = c2 (u + c3)."""
    c1: float
    c2: float
    c3: float = 0.0

    def __post_init__(self):
        if not (self.c1 > 0 and self.c2 > 0 and self.c3 >= 0):
            raise ConfigError("affine mobilities need c1 > 0, c2 > 0, c3 >= 0")


MODES = ("general", "affine")


@dataclass(frozen=True)
class SolveConfig:
    tau: float = 0.7
    sigma: float = 0.7
    max_iters: int = 100000
    tol_residual: float = 1e-5
    tol_energy_rel: float = 1e-8
    newton_eps: float = 1e-10
    newton_max_iters: int = 60
    mode: str = "general"
    check_every: int = 10
    divergence_factor: float = 1e3
    mean_correction: bool = True

    def __post_init__(self):
        if not (self.tau > 0 and self.sigma > 0):
            raise ConfigError("tau and sigma must be positive", key="solver")
        if self.tau * self.sigma >= 1:
            raise ConfigError(f"step sizes need tau*sigma < 1, got {self.tau * self.sigma:g}",
                              key="solver")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}", key="solver.mode")
        if self.max_iters < 0 or self.check_every < 1:
            raise ConfigError("max_iters must be >= 0 and check_every >= 1", key="solver")


@dataclass
class ControlProblem:
    grid: Grid
    pair: MobilityPair
    u0: np.ndarray
    terminal: EntropySpec
    potential: PotentialSpec = field(default_factory=PotentialSpec)

    def __post_init__(self):
        self.u0 = np.asarray(self.u0, dtype=float)
        shape = (self.grid.nx1, self.grid.nx2)
        if self.u0.shape != shape:
            raise ConfigError(f"u0 has shape {self.u0.shape}, grid expects {shape}")
        if self.terminal.is_indicator and np.shape(self.terminal.target) != shape:
            raise ConfigError("terminal target does not match the grid")

    @property
    def free_terminal(self):
        return not self.terminal.is_indicator

    def affine_params(self):
        if self.pair.affine is None:
            raise ConfigError(f"mobility {self.pair.label!r} is not affine; use mode=general")
        return AffineParams(*self.pair.affine)


@dataclass
class SolverState:
    u: np.ndarray
    m1: np.ndarray
    m2: np.ndarray
    phi: np.ndarray
    psi: Optional[np.ndarray] = None
    iter: int = 0
    energy_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    log: list = field(default_factory=list)  # (iter, energy, continuity, optimality_max)
    converged: bool = False
    newton_iterations: int = 0  # largest per-cell count in the last u update
    newton_unconverged: int = 0
    newton_iterations_max: int = 0  # largest per-cell count over the whole run

    def copy(self):
        return SolverState(self.u.copy(), self.m1.copy(), self.m2.copy(), self.phi.copy(),
                           None if self.psi is None else self.psi.copy(), self.iter,
                           list(self.energy_history), list(self.residual_history),
                           list(self.log), self.converged, self.newton_iterations,
                           self.newton_unconverged, self.newton_iterations_max)


def initial_state(problem):
    """Linear interpolation between the end densities (indicator) or u0 frozen in time."""
    g = problem.grid
    t = g.times()[:, None, None]
    if problem.terminal.is_indicator:
        u = (1 - t) * problem.u0[None] + t * problem.terminal.target[None]
    else:
        u = np.broadcast_to(problem.u0, g.shape).copy()
    return SolverState(u=u, m1=g.zeros_flux(), m2=g.zeros(), phi=g.zeros(), psi=g.zeros())


# ----------------------------------------------------------------------------
# Kinetic integrand and its u-derivatives


def _flux_sq(m1):
    return m1[0] ** 2 + m1[1] ** 2


def kinetic_derivatives(u, m1sq, m2sq, pair):
    """d/du and d2/du2 of |m1|^2/(2 V1(u)) + m2^2/(2 V2(u))."""
    d1 = np.zeros(np.shape(u))
    d2 = np.zeros(np.shape(u))
    for zero, triple, msq in ((pair.v1_zero, pair.v1_all, m1sq), (pair.v2_zero, pair.v2_all, m2sq)):
        if zero:
            continue
        V, Vp, Vpp = triple(u)
        d1 = d1 - msq * Vp / (2 * V**2)
        d2 = d2 + msq * (Vp**2 / V**3 - Vpp / (2 * V**2))
    return d1, d2


def kinetic_density(u, m1sq, m2sq, pair):
    """Pointwise |m1|^2/(2 V1) + m2^2/(2 V2), with 0/0 = 0 and c/0 = inf."""
    out = np.zeros(np.shape(u))
    for zero, v, msq in ((pair.v1_zero, pair.v1, m1sq), (pair.v2_zero, pair.v2, m2sq)):
        V = np.zeros(np.shape(u)) if zero else v(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(msq == 0, 0.0, np.where(V > 0, msq / (2 * np.where(V > 0, V, 1.0)), np.inf))
        out = out + term
    return out


# ----------------------------------------------------------------------------
# Scalar safeguarded Newton, vectorized over cells


def safe_newton(resid, x0, lower=DELTA, eps=1e-10, max_iters=60):
    """Root of an increasing residual with the iterate clipped at ``lower``.

    ``resid(x)`` returns ``(a, b)`` with ``b = da/dx``. Each cell runs Newton
    ``x <- max(lower, x/10, x - a/b)`` while a sign bracket is maintained; a
    step that is undefined (b <= 0) or leaves the bracket is replaced by
    bisection (or bracket expansion when no upper end is known yet). The
    x/10 damping keeps an overshoot to the left from landing on the floor,
    where the kinetic terms are stiff and Newton crawls. Steps are judged
    relative to x. A cell whose residual is nonnegative at ``lower`` is done
    there. Returns the iterate, the per-cell iteration counts and a mask of
    unconverged cells.
    """
    x = np.maximum(np.asarray(x0, dtype=float), lower)
    lo = np.full(x.shape, lower)
    hi = np.full(x.shape, np.inf)
    done = np.zeros(x.shape, dtype=bool)
    iters = np.zeros(x.shape, dtype=int)
    for _ in range(max_iters):
        a, b = resid(x)
        act = ~done
        iters += act
        lo = np.where(act & (a < 0), x, lo)
        hi = np.where(act & (a > 0), x, hi)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            step = a / b
            raw = x - step
            xn = np.maximum(raw, np.maximum(0.1 * x, lower))
        damped = xn != raw
        newton_ok = (b > 0) & np.isfinite(xn) & (xn >= lo) & (xn <= hi)
        mid = np.where(np.isfinite(hi), 0.5 * (lo + hi), 2 * x + 1)
        xn = np.where(newton_ok, xn, mid)
        floor_hit = (x <= lower) & (a >= 0)
        small = np.abs(step) < eps * np.maximum(np.abs(x), lower)
        conv = (a == 0) | floor_hit | (newton_ok & small & ~damped) | (hi - lo < eps)
        x = np.where(act & ~floor_hit & (a != 0), xn, x)
        done |= act & conv
        if done.all():
            break
    return x, iters, ~done


def newton_update_u(u_start, u_k, m1sq, m2sq, dtphi_bar, pair, potential, tau,
                    eps=1e-10, max_iters=60):
    """Minimize the kinetic + potential cost plus |u - u_k|^2/(2 tau) - u dtphi_bar per cell.

    Residual a = kin'(u) - dtphi_bar + s'(u) + (u - u_k)/tau and its slope b.
    Returns ``(u_new, iterations, unconverged_mask)``.
    """
    def resid(u):
        d1, d2 = kinetic_derivatives(u, m1sq, m2sq, pair)
        a = d1 - dtphi_bar + potential.s_prime(u) + (u - u_k) / tau
        b = d2 + potential.s_double_prime(u) + 1.0 / tau
        return a, b

    return safe_newton(resid, u_start, DELTA, eps, max_iters)


def cubic_roots_plus(q1, q2, q3):
    """Vectorized largest real root of x^3 + q1 x^2 + q2 x + q3."""
    q1, q2, q3 = np.broadcast_arrays(*(np.asarray(q, dtype=float) for q in (q1, q2, q3)))
    p = q2 - q1**2 / 3.0
    q = 2.0 * q1**3 / 27.0 - q1 * q2 / 3.0 + q3
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    with np.errstate(invalid="ignore", divide="ignore"):
        # three real roots: trigonometric form, k = 0 branch is the largest
        r = np.sqrt(np.maximum(-p / 3.0, 0.0))
        arg = np.where(r > 0, -q / (2.0 * np.where(r > 0, r, 1.0) ** 3), 0.0)
        y3 = 2.0 * r * np.cos(np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0)
        # one real root: Cardano written to avoid cancellation
        A = -np.sign(q) * np.cbrt(np.abs(q) / 2.0 + np.sqrt(np.maximum(disc, 0.0)))
        A = np.where(q == 0, np.cbrt(np.sqrt(np.maximum(disc, 0.0))), A)
        B = np.where(A != 0, -p / (3.0 * np.where(A != 0, A, 1.0)), 0.0)
        y1 = A + B
    x1, P1 = _polish(y1 - q1 / 3.0, q1, q2, q3)
    x3, P3 = _polish(y3 - q1 / 3.0, q1, q2, q3)
    # disc may round to a small positive number at a double largest root, in
    # which case Cardano returns the simple smaller root; the trigonometric
    # candidate wins whenever it is larger and a root to rounding accuracy
    size = np.abs(x3) ** 3 + np.abs(q1) * x3**2 + np.abs(q2) * np.abs(x3) + np.abs(q3)
    tangent = (p < 0) & (x3 > x1) & (np.abs(P3) <= 1e-12 * np.maximum(size, 1.0))
    return np.where((disc < 0) | tangent, x3, x1)


def _polish(x, q1, q2, q3, steps=3):
    """Newton polish; near a multiple root dP is rounding noise, so a step is
    kept only when it lowers |P|."""
    P = ((x + q1) * x + q2) * x + q3
    for _ in range(steps):
        dP = (3 * x + 2 * q1) * x + q2
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            xn = np.where(dP > 0, x - P / np.where(dP > 0, dP, 1.0), x)
            Pn = ((xn + q1) * xn + q2) * xn + q3
        better = np.abs(Pn) < np.abs(P)
        x = np.where(better, xn, x)
        P = np.where(better, Pn, P)
    return x, P


def cubic_root_plus(q1, q2, q3):
    """Largest real root of x^3 + q1 x^2 + q2 x + q3, required to be nonnegative.

    The largest real root is where the cubic crosses zero upward for the last
    time, which is the stable branch of the monotone optimality residual.
    """
    x = cubic_roots_plus(q1, q2, q3)
    scalar = np.ndim(x) == 0
    tol = 1e-12 * np.maximum(1.0, np.abs(x))
    if np.any(x < -tol):
        raise SolverError("cubic has no nonnegative real root",
                          data={"q1": q1, "q2": q2, "q3": q3})
    x = np.maximum(x, 0.0)
    return float(x) if scalar else x


def affine_update_u(u_k, m1sq, m2sq, dtphi_bar, psi_bar, params, tau):
    """Closed-form u update when V1 and V2 are affine in u."""
    c1, c2, c3 = params.c1, params.c2, params.c3
    k1 = -tau * m1sq / (2 * c1) - tau * m2sq / (2 * c2)
    k2 = -tau * dtphi_bar + tau * psi_bar - u_k
    return cubic_root_plus(2 * c3 + k2, c3**2 + 2 * c3 * k2, k1 + k2 * c3**2)


def update_psi(psi_k, u_k, sigma, potential):
    """Resolvent (Id + sigma (s*)')^{-1} applied to psi_k + sigma u_k."""
    y = np.asarray(psi_k, dtype=float) + sigma * np.asarray(u_k, dtype=float)
    if not potential.active:
        return np.zeros(y.shape)
    c = potential.c
    if potential.kind == "quadratic":
        return y / (1.0 + sigma / c)
    if sigma == 0:
        return np.asarray(psi_k, dtype=float).copy()
    # psi + sigma exp(psi/c) = y  <=>  psi = y - c w with w e^w = (sigma/c) e^{y/c}.
    # Solve e^v + v = x for v = log w by Newton from the right (convex, increasing).
    x = np.log(sigma / c) + y / c
    v = np.where(x > 1.0, np.log(np.maximum(x, 1.0)), x)
    for _ in range(100):
        ev = np.exp(v)
        f = ev + v - x
        step = f / (ev + 1.0)
        v = v - step
        if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(v))):
            break
    else:
        raise SolverError("resolvent of the potential conjugate did not converge")
    return y - c * np.exp(v)


def terminal_update_u(phi_new_terminal, phi_old_terminal, spec):
    """Literal conjugate update (G*)'(-2 phi_new + phi_old) on the terminal slice."""
    from .mobility import legendre_conjugate_prime
    if spec.is_indicator:
        return np.array(spec.target, dtype=float, copy=True)
    return legendre_conjugate_prime(spec, -2.0 * phi_new_terminal + phi_old_terminal)


def terminal_prox(u_k, m1sq, m2sq, phibar_K, pair, spec, grid, tau, s_prime=None,
                  s_double_prime=None, linear=0.0, eps=1e-10, max_iters=60):
    """Exact proximal update of a free terminal density.

    Solves G'(u) + phibar_K + dt [kin'(u) + s'(u) + linear + (u - u_k)/tau] = 0,
    the stationarity of the discrete Lagrangian in u_K with the same L2 prox
    weight as every other primal cell.
    """
    dt = grid.dt

    def resid(u):
        d1, d2 = kinetic_derivatives(u, m1sq, m2sq, pair)
        a = spec.prime(u) + phibar_K + dt * (d1 + linear + (u - u_k) / tau)
        b = spec.double_prime(u) + dt * (d2 + 1.0 / tau)
        if s_prime is not None:
            a = a + dt * s_prime(u)
            b = b + dt * s_double_prime(u)
        return a, b

    return safe_newton(resid, u_k, DELTA, eps, max_iters)


# ----------------------------------------------------------------------------
# Dual and flux updates


def update_phi(state, plan, sigma):
    """phi + sigma (A A^T)^{-1} (dt u + div m1 - m2) on levels 1..K; ghost level 0."""
    g = plan.grid
    r = apply_A(state.m1, state.m2, state.u, g)
    phi = state.phi.copy()
    phi[1:] += sigma * solve_AAt(plan, r[1:])
    phi[0] = phi[1]
    return phi


def update_m1(m1, u_k, tau, phi_bar, pair, grid):
    if pair.v1_zero:
        return np.zeros(m1.shape)
    V = pair.v1(u_k)
    out = V / (tau + V) * (m1 + tau * grad_phi(phi_bar, grid))
    out[:, 0] = 0.0
    return out


def update_m2(m2, u_k, tau, phi_bar, pair):
    if pair.v2_zero:
        return np.zeros(m2.shape)
    V = pair.v2(u_k)
    out = V / (tau + V) * (m2 + tau * phi_bar)
    out[0] = 0.0
    return out


# ----------------------------------------------------------------------------
# Diagnostics


def energy(state, problem):
    """Discrete objective: kinetic + running potential on levels 1..K plus the terminal term."""
    g = problem.grid
    u = state.u[1:]
    kin = kinetic_density(u, _flux_sq(state.m1[:, 1:]), state.m2[1:] ** 2, problem.pair)
    total = g.weight * float(np.sum(kin + problem.potential.s(u)))
    spec = problem.terminal
    if spec.is_indicator:
        if not np.allclose(state.u[-1], spec.target, rtol=0, atol=1e-9):
            return np.inf
    else:
        total += g.cell_area * float(np.sum(spec.value(state.u[-1])))
    return total


@dataclass
class Residuals:
    continuity: float
    m1: float
    m2: float
    u: float
    terminal: float

    def max(self):
        return max(self.continuity, self.m1, self.m2, self.u, self.terminal)

    def as_dict(self):
        return {"continuity": self.continuity, "m1": self.m1, "m2": self.m2,
                "u": self.u, "terminal": self.terminal}


def _flux_residual(m, V, target):
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(V > 0, m / np.where(V > 0, V, 1.0) - target, np.abs(m))
    return r


def optimality_residuals(state, problem):
    """Max norms of the discrete stationarity conditions at the current iterate.

    continuity on levels 1..K; m1 = V1 grad phi and m2 = V2 phi on levels
    1..K (written as m/V - grad phi); the u equation on levels 1..K-1; and,
    for a free terminal density, the exact stationarity in u_K. With an
    indicator terminal the last entry is the distance to the target.
    """
    g = problem.grid
    pair = problem.pair
    u, m1, m2, phi = state.u, state.m1, state.m2, state.phi
    r_c = float(np.max(np.abs(apply_A(m1, m2, u, g)[1:])))
    gphi = grad_phi(phi, g)
    if pair.v1_zero:
        r1 = float(np.max(np.abs(m1[:, 1:])))
    else:
        V1 = pair.v1(u[1:])
        r = _flux_residual(m1[:, 1:], np.stack([V1, V1]), gphi[:, 1:])
        r[0][:, 0, :] = m1[0][1:, 0, :]
        r[1][:, :, 0] = m1[1][1:, :, 0]
        r1 = float(np.max(np.abs(r)))
    if pair.v2_zero:
        r2 = float(np.max(np.abs(m2[1:])))
    else:
        r2 = float(np.max(np.abs(_flux_residual(m2[1:], pair.v2(u[1:]), phi[1:]))))
    m1sq = _flux_sq(m1)
    m2sq = m2**2
    d1, _ = kinetic_derivatives(u, m1sq, m2sq, pair)
    sp = problem.potential.s_prime(u)
    ru = d1 + sp - dt_phi(phi, g)
    r_u = float(np.max(np.abs(ru[1:-1]))) if g.nt > 2 else 0.0
    if problem.free_terminal:
        rt = problem.terminal.prime(u[-1]) + phi[-1] + g.dt * (d1[-1] + sp[-1])
        r_t = float(np.max(np.abs(rt)))
    else:
        r_t = float(np.max(np.abs(u[-1] - problem.terminal.target)))
    return Residuals(r_c, r1, r2, r_u, r_t)


def mass_identity_error(state, grid):
    """max_n | mass(u_n) - mass(u_{n-1}) - dt * quadrature(m2_n) | over n = 1..K."""
    mass = grid.cell_area * state.u.sum(axis=(1, 2))
    src = grid.cell_area * state.m2.sum(axis=(1, 2))
    return float(np.max(np.abs(np.diff(mass) - grid.dt * src[1:])))


def restore_mean_feasibility(state, problem):
    """Remove the spatial mean of the continuity residual on every level.

    The mean mode is the only part of the constraint that the mass identity
    sees. It is absorbed by a constant shift of m2 over the cells where V2 is
    positive or, when V2 vanishes identically, by constant shifts of the free
    density levels. The shift is of the size of the residual itself.
    """
    g = problem.grid
    r = apply_A(state.m1, state.m2, state.u, g)
    rho = r[1:].mean(axis=(1, 2))
    if not problem.pair.v2_zero:
        active = problem.pair.v2(state.u[1:]) > 0
        count = active.sum(axis=(1, 2))
        ok = count > 0
        scale = np.where(ok, g.nx1 * g.nx2 / np.maximum(count, 1), 0.0)
        state.m2[1:] += np.where(active, (rho * scale)[:, None, None], 0.0)
        return state
    shift = -g.dt * np.cumsum(rho)
    last = g.nt - 1 if problem.free_terminal else g.nt - 2
    state.u[1:last + 1] += shift[:last, None, None]
    return state


# ----------------------------------------------------------------------------
# Driver


def pdhg_iteration(state, problem, cfg, plan, affine=None):
    """One sweep in the order phi, [psi], m1, m2, u interior, u terminal."""
    g = problem.grid
    pair = problem.pair
    tau = cfg.tau
    u_k = state.u
    phi_new = update_phi(state, plan, cfg.sigma)
    phi_bar = 2 * phi_new - state.phi
    psi_bar = None
    if affine is not None:
        psi_new = update_psi(state.psi, u_k, cfg.sigma, problem.potential)
        psi_bar = 2 * psi_new - state.psi
        state.psi = psi_new
    m1 = update_m1(state.m1, u_k, tau, phi_bar, pair, g)
    m2 = update_m2(state.m2, u_k, tau, phi_bar, pair)
    m1sq = _flux_sq(m1)
    m2sq = m2**2
    dtpb = dt_phi(phi_bar, g)
    u = u_k.copy()
    inner = slice(1, g.nt - 1)
    if affine is not None:
        u[inner] = affine_update_u(u_k[inner], m1sq[inner], m2sq[inner], dtpb[inner],
                                   psi_bar[inner], affine, tau)
        state.newton_iterations = 0
        state.newton_unconverged = 0
    else:
        un, its, bad = newton_update_u(u_k[inner], u_k[inner], m1sq[inner], m2sq[inner],
                                       dtpb[inner], pair, problem.potential, tau,
                                       cfg.newton_eps, cfg.newton_max_iters)
        u[inner] = un
        state.newton_iterations = int(its.max()) if its.size else 0
        state.newton_unconverged = int(bad.sum())
        state.newton_iterations_max = max(state.newton_iterations_max, state.newton_iterations)
    spec = problem.terminal
    if spec.is_indicator:
        u[-1] = spec.target
    else:
        pot = problem.potential
        if affine is not None:
            un, _, _ = terminal_prox(u_k[-1], m1sq[-1], m2sq[-1], phi_bar[-1], pair, spec, g,
                                     tau, linear=psi_bar[-1], eps=cfg.newton_eps,
                                     max_iters=cfg.newton_max_iters)
        else:
            un, _, _ = terminal_prox(u_k[-1], m1sq[-1], m2sq[-1], phi_bar[-1], pair, spec, g,
                                     tau, pot.s_prime, pot.s_double_prime,
                                     eps=cfg.newton_eps, max_iters=cfg.newton_max_iters)
        u[-1] = un
    u[0] = problem.u0
    state.u, state.m1, state.m2, state.phi = u, m1, m2, phi_new
    state.iter += 1
    return state


def solve(problem, cfg=None, state=None, plan=None, callback=None):
    """Run the primal-dual iteration until the stopping rule holds.

    Every ``cfg.check_every`` iterations the energy, the continuity residual
    and the full optimality residuals are logged. The run stops when the
    relative energy change over that window is below ``tol_energy_rel``, the
    continuity residual is below ``tol_residual`` and every optimality
    residual is below ``10 * tol_residual``. A converged iterate then gets
    ``restore_mean_feasibility`` unless ``cfg.mean_correction`` is off.
    """
    cfg = cfg or SolveConfig()
    g = problem.grid
    affine = problem.affine_params() if cfg.mode == "affine" else None
    plan = plan or build_plan(g, problem.free_terminal)
    if plan.free_terminal != problem.free_terminal:
        raise ConfigError("transform plan terminal closure does not match the problem")
    state = state.copy() if state is not None else initial_state(problem)
    state.u[0] = problem.u0
    if problem.terminal.is_indicator:
        state.u[-1] = problem.terminal.target
    if state.psi is None:
        state.psi = g.zeros()
    state.converged = False
    e0 = energy(state, problem)
    limit = cfg.divergence_factor * max(abs(e0), 1.0) if np.isfinite(e0) else np.inf
    last_e = e0
    for _ in range(cfg.max_iters):
        pdhg_iteration(state, problem, cfg, plan, affine)
        if state.iter % cfg.check_every:
            continue
        e = energy(state, problem)
        res = optimality_residuals(state, problem)
        state.energy_history.append(e)
        state.residual_history.append(res.continuity)
        state.log.append((state.iter, e, res.continuity, res.max()))
        if callback is not None:
            callback(state, res)
        if not np.isfinite(e) or e > limit or not np.all(np.isfinite(state.phi)):
            raise SolverError(f"iteration diverged at {state.iter}: energy {e!r}",
                              state=state.copy())
        rel = abs(e - last_e) / max(abs(e), 1e-300)
        last_e = e
        if (rel < cfg.tol_energy_rel and res.continuity < cfg.tol_residual
                and res.max() < 10 * cfg.tol_residual):
            state.converged = True
            break
    if state.converged and cfg.mean_correction:
        restore_mean_feasibility(state, problem)
    return state
