"""Mobility pairs, Lyapunov integrands, running potentials and the catalog.

All scalar functions are vectorized over numpy arrays. Mobilities built
from logarithms or powers are evaluated on ``max(u, DELTA)`` so that a
density clipped to the floor stays evaluable.
"""
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError, SolverError
from .grid import grad_phi

DELTA = 1e-10

Scalar = Callable[[np.ndarray], np.ndarray]


def _floor(u):
    return np.maximum(np.asarray(u, dtype=float), DELTA)


def _zero(u):
    return np.zeros(np.shape(u))


def _one(u):
    return np.ones(np.shape(u))


@dataclass(frozen=True)
class SourceFunctions:
    """The (F, G, R) triple a mobility pair is derived from.

    V1 = F'/G'' and V2 = -R/G'. Only the derivatives the checks need are kept.
    """
    f_prime: Scalar
    g_prime: Scalar
    g_double_prime: Scalar
    r: Scalar
    description: str
    f: Optional[Scalar] = None


@dataclass(frozen=True)
class MobilityPair:
    label: str
    v1: Scalar
    v1_prime: Scalar
    v1_double_prime: Scalar
    v2: Scalar
    v2_prime: Scalar
    v2_double_prime: Scalar
    u_min: float = 0.0
    v1_zero: bool = False
    v2_zero: bool = False
    params: dict = field(default_factory=dict)
    affine: Optional[tuple] = None  # (c1, c2, c3) when V1 = c1(u+c3), V2 = c2(u+c3)
    v2_triple: Optional[Callable] = None  # (V2, V2', V2'') in one pass when cheaper

    def v1_all(self, u):
        return self.v1(u), self.v1_prime(u), self.v1_double_prime(u)

    def v2_all(self, u):
        if self.v2_triple is not None:
            return self.v2_triple(u)
        return self.v2(u), self.v2_prime(u), self.v2_double_prime(u)


# ----------------------------------------------------------------------------
# Fisher-KPP reaction mobility u(u-1)/log u with its removable singularity.


def _gregory_coefficients(n):
    """Taylor coefficients of eps/log(1+eps) as exact fractions."""
    # log(1+e)/e = sum (-1)^k e^k/(k+1); invert the power series.
    a = [Fraction((-1) ** k, k + 1) for k in range(n)]
    b = [Fraction(1)]
    for k in range(1, n):
        b.append(-sum(a[i] * b[k - i] for i in range(1, k + 1)))
    return np.array([float(x) for x in b])


_GREGORY = _gregory_coefficients(16)
FKPP_SERIES_RADIUS = 5e-2


def _series(coef, e):
    """Value, first and second derivative of sum coef[k] e^k."""
    k = np.arange(len(coef))
    p0 = np.polynomial.polynomial.polyval(e, coef)
    c1 = coef[1:] * k[1:]
    p1 = np.polynomial.polynomial.polyval(e, c1)
    c2 = c1[1:] * k[1:-1]
    p2 = np.polynomial.polynomial.polyval(e, c2)
    return p0, p1, p2


def _fkpp_all(u):
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise DomainError("Fisher-KPP reaction mobility needs u > 0")
    e = u - 1.0
    near = np.abs(e) < FKPP_SERIES_RADIUS
    v = np.empty_like(u)
    d1 = np.empty_like(u)
    d2 = np.empty_like(u)
    if np.any(near):
        en = e[near]
        s0, s1, s2 = _series(_GREGORY, en)
        v[near] = (1 + en) * s0
        d1[near] = s0 + (1 + en) * s1
        d2[near] = 2 * s1 + (1 + en) * s2
    far = ~near
    if np.any(far):
        uf = u[far]
        L = np.log(uf)
        v[far] = uf * (uf - 1) / L
        d1[far] = (2 * uf - 1) / L - (uf - 1) / L**2
        d2[far] = (2 / L - (2 * uf - 1) / (uf * L**2) - 1 / L**2
                   + 2 * (uf - 1) / (uf * L**3))
    return v, d1, d2


def v2_fkpp_guarded(u):
    """u(u-1)/log u, continued through u = 1 by its Taylor series."""
    v = _fkpp_all(np.atleast_1d(u))[0]
    return v if np.ndim(u) else float(v[0])


def _fkpp_v2(u):
    return _fkpp_all(_floor(u))[0]


def _fkpp_v2p(u):
    return _fkpp_all(_floor(u))[1]


def _fkpp_v2pp(u):
    return _fkpp_all(_floor(u))[2]


# ----------------------------------------------------------------------------
# Entropy (Lyapunov integrand) and running potential


ENTROPY_KINDS = ("entropy", "quadratic", "indicator", "custom")


@dataclass(frozen=True)
class EntropySpec:
    """Terminal integrand G with G', G'' and the conjugate derivative (G*)'.

    ``scale`` multiplies the whole integrand; it is how a JKO step weights G
    by the macro step. For ``indicator`` the terminal density is ``target``.
    """
    kind: str
    g: Optional[Scalar] = None
    g_prime: Optional[Scalar] = None
    g_double_prime: Optional[Scalar] = None
    g_star_prime: Optional[Scalar] = None
    target: Optional[np.ndarray] = None
    beta: float = 1.0
    scale: float = 1.0
    domain_min: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in ENTROPY_KINDS:
            raise ConfigError(f"unknown entropy kind {self.kind!r}")
        if self.scale <= 0:
            raise ConfigError("entropy scale must be positive")

    @classmethod
    def entropy(cls, scale=1.0):
        return cls(kind="entropy", scale=scale, label="u log u - u")

    @classmethod
    def quadratic(cls, beta=1.0, scale=1.0):
        if beta <= 0:
            raise ConfigError("quadratic entropy needs beta > 0")
        return cls(kind="quadratic", beta=beta, scale=scale, domain_min=-np.inf,
                   label=f"{beta}/2 u^2")

    @classmethod
    def indicator(cls, target):
        return cls(kind="indicator", target=np.asarray(target, dtype=float),
                   label="indicator of target")

    @classmethod
    def custom(cls, g, g_prime, g_double_prime, g_star_prime=None,
               domain_min=0.0, label="custom", scale=1.0):
        return cls(kind="custom", g=g, g_prime=g_prime,
                   g_double_prime=g_double_prime, g_star_prime=g_star_prime,
                   domain_min=domain_min, label=label, scale=scale)

    def scaled(self, factor):
        return replace(self, scale=self.scale * factor)

    @property
    def is_indicator(self):
        return self.kind == "indicator"

    def value(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "entropy":
            uf = _floor(u)
            return self.scale * (uf * np.log(uf) - uf)
        if self.kind == "quadratic":
            return self.scale * 0.5 * self.beta * u**2
        if self.kind == "indicator":
            return np.where(np.isclose(u, self.target, rtol=0, atol=1e-12), 0.0, np.inf)
        return self.scale * self.g(u)

    def prime(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "entropy":
            return self.scale * np.log(_floor(u))
        if self.kind == "quadratic":
            return self.scale * self.beta * u
        if self.kind == "indicator":
            raise DomainError("indicator integrand has no derivative")
        return self.scale * self.g_prime(u)

    def double_prime(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "entropy":
            return self.scale / _floor(u)
        if self.kind == "quadratic":
            return np.full(u.shape, self.scale * self.beta)
        if self.kind == "indicator":
            raise DomainError("indicator integrand has no derivative")
        return self.scale * self.g_double_prime(u)


def _invert_increasing(fn, dfn, p, lo, tol=1e-12, max_iter=200):
    """Solve fn(u) = p for an increasing fn on (lo, inf), vectorized.

    Newton inside a bracket, with a bisection step whenever Newton would
    leave the bracket.
    """
    shape = np.shape(p)
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if np.isfinite(lo):
        a = np.full(p.shape, lo + DELTA)
        if np.any(fn(a) > p):
            raise DomainError("value below the range of G'")
    else:
        a = -np.ones(p.shape)
        for _ in range(200):
            low = fn(a) > p
            if not np.any(low):
                break
            a = np.where(low, 2 * a - 1, a)
        else:
            raise DomainError("value below the range of G'")
    b = np.maximum(a + 1.0, 1.0)
    for _ in range(200):
        high = fn(b) < p
        if not np.any(high):
            break
        b = np.where(high, b + 2 * (b - a), b)
    else:
        raise DomainError("value above the range of G'")
    x = 0.5 * (a + b)
    for _ in range(max_iter):
        f = fn(x) - p
        a = np.where(f < 0, x, a)
        b = np.where(f > 0, x, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            xn = x - f / dfn(x)
        bad = ~np.isfinite(xn) | (xn <= a) | (xn >= b)
        xn = np.where(bad, 0.5 * (a + b), xn)
        done = (np.abs(xn - x) <= tol * np.maximum(1.0, np.abs(xn))) | (f == 0)
        x = np.where(f == 0, x, xn)
        if np.all(done):
            return x.reshape(shape)
    raise SolverError("scalar inversion of G' did not converge")


def legendre_conjugate_prime(spec, p):
    """(G*)'(p), i.e. the inverse of G' evaluated at p."""
    p = np.asarray(p, dtype=float)
    if spec.kind == "entropy":
        return np.exp(p / spec.scale)
    if spec.kind == "quadratic":
        return p / (spec.scale * spec.beta)
    if spec.kind == "indicator":
        return np.broadcast_to(spec.target, p.shape).copy() if p.shape else spec.target
    if spec.g_star_prime is not None:
        return spec.g_star_prime(p / spec.scale)
    return _invert_increasing(spec.g_prime, spec.g_double_prime, p / spec.scale,
                              spec.domain_min)


POTENTIAL_KINDS = ("none", "entropy", "quadratic")


@dataclass(frozen=True)
class PotentialSpec:
    """Running potential s(u) added to the kinetic cost (convex)."""
    kind: str = "none"
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigError(f"unknown potential kind {self.kind!r}")
        if self.c < 0:
            raise ConfigError("potential strength c must be nonnegative")

    @classmethod
    def entropy(cls, c):
        return cls("entropy", float(c)) if c > 0 else cls()

    @classmethod
    def quadratic(cls, c):
        return cls("quadratic", float(c)) if c > 0 else cls()

    @property
    def active(self):
        return self.kind != "none" and self.c > 0

    def s(self, u):
        u = np.asarray(u, dtype=float)
        if not self.active:
            return np.zeros(u.shape)
        if self.kind == "entropy":
            uf = _floor(u)
            return self.c * (uf * np.log(uf) - uf)
        return 0.5 * self.c * u**2

    def s_prime(self, u):
        u = np.asarray(u, dtype=float)
        if not self.active:
            return np.zeros(u.shape)
        if self.kind == "entropy":
            return self.c * np.log(_floor(u))
        return self.c * u

    def s_double_prime(self, u):
        u = np.asarray(u, dtype=float)
        if not self.active:
            return np.zeros(u.shape)
        if self.kind == "entropy":
            return self.c / _floor(u)
        return np.full(u.shape, self.c)

    def conjugate_prime(self, psi):
        """(s*)'(psi), the inverse of s'."""
        psi = np.asarray(psi, dtype=float)
        if not self.active:
            return np.zeros(psi.shape)
        if self.kind == "entropy":
            return np.exp(psi / self.c)
        return psi / self.c


# ----------------------------------------------------------------------------
# Catalog


def _const_pair(label, v1, v2, **kw):
    return MobilityPair(label, v1[0], v1[1], v1[2], v2[0], v2[1], v2[2], **kw)


_ZERO3 = (_zero, _zero, _zero)
_ONE3 = (_one, _zero, _zero)


def _power3(alpha):
    def v(u):
        return _floor(u) ** alpha

    def vp(u):
        return alpha * _floor(u) ** (alpha - 1)

    def vpp(u):
        return alpha * (alpha - 1) * _floor(u) ** (alpha - 2)

    return v, vp, vpp


def _affine3(c, shift):
    return (lambda u: c * (np.asarray(u, dtype=float) + shift),
            lambda u: np.full(np.shape(u), float(c)),
            _zero)


def _entropy_sources(f_prime, r, description, f=None):
    return SourceFunctions(
        f_prime=f_prime,
        g_prime=lambda u: np.log(_floor(u)),
        g_double_prime=lambda u: 1.0 / _floor(u),
        r=r,
        description=description,
        f=f,
    )


def _ident(u):
    return np.asarray(u, dtype=float)


def _two_sqrt(u):
    return 2.0 * np.sqrt(_floor(u))


DEFAULT_ALLEN_CAHN = (0.0, 0.0, 0.5, 0.0, 0.25)  # f(u) = u^2/2 + u^4/4


def _allen_cahn(coeffs):
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    f1, f2, f3, f4 = P.deriv(1), P.deriv(2), P.deriv(3), P.deriv(4)

    def curvature(u):
        c = f2(np.asarray(u, dtype=float))
        if np.any(c <= 0):
            raise DomainError("Allen-Cahn mobility 1/f'' needs f'' > 0")
        return c

    def v(u):
        return 1.0 / curvature(u)

    def vp(u):
        u = np.asarray(u, dtype=float)
        return -f3(u) / curvature(u) ** 2

    def vpp(u):
        u = np.asarray(u, dtype=float)
        c = curvature(u)
        return 2 * f3(u) ** 2 / c**3 - f4(u) / c**2

    g = lambda u: P(np.asarray(u, dtype=float))
    gp = lambda u: f1(np.asarray(u, dtype=float))
    gpp = lambda u: f2(np.asarray(u, dtype=float))
    spec = EntropySpec.custom(g, gp, gpp, domain_min=-np.inf, label="f")
    src = SourceFunctions(f_prime=_one, g_prime=gp, g_double_prime=gpp,
                          r=lambda u: -f1(np.asarray(u, dtype=float)),
                          description="F=u, G=f, R=-f'", f=_ident)
    return (v, vp, vpp), spec, src


CATALOG_NAMES = ("wasserstein", "power_alpha", "h_minus_1", "fisher_rao",
                 "diffusion_reaction_alpha", "constant_regularized",
                 "fisher_kpp", "allen_cahn", "affine", "sqrt_fkpp", "sqrt_linear")


def catalog_lookup(name, params=None):
    """Return ``(MobilityPair, EntropySpec, SourceFunctions)`` for a catalog name.

    Parameters: ``alpha`` for power_alpha and diffusion_reaction_alpha,
    ``f`` (ascending polynomial coefficients) for allen_cahn, and
    ``c1, c2, c3`` for affine. ``sqrt_fkpp`` (V1 = sqrt u, V2 Fisher-KPP)
    and ``sqrt_linear`` (V1 = sqrt u, V2 = u) are the comparison pairs of
    the second demonstration problem.
    """
    params = dict(params or {})
    ent = EntropySpec.entropy()
    log = lambda u: np.log(_floor(u))

    def take(*allowed):
        extra = set(params) - set(allowed)
        if extra:
            raise ConfigError(f"unexpected parameters {sorted(extra)} for {name}")

    if name == "wasserstein":
        take()
        pair = _const_pair(name, _power3(1.0), _ZERO3, v2_zero=True)
        src = _entropy_sources(_one, _zero, "F=u, G=u log u - u, R=0", _ident)
        return pair, ent, src
    if name == "power_alpha":
        take("alpha")
        a = float(params.get("alpha", 1.0))
        if a == 0:
            return catalog_lookup("h_minus_1")
        pair = _const_pair(name, _power3(a), _ZERO3, v2_zero=True, params={"alpha": a})
        src = _entropy_sources(lambda u: _floor(u) ** (a - 1), _zero,
                               f"F=u^{a}/{a}, G=u log u - u, R=0",
                               lambda u: _floor(u) ** a / a)
        return pair, ent, src
    if name == "h_minus_1":
        take()
        pair = _const_pair(name, _ONE3, _ZERO3, v2_zero=True)
        spec = EntropySpec.quadratic(1.0)
        src = SourceFunctions(_one, lambda u: np.asarray(u, dtype=float), _one, _zero,
                              "F=u, G=u^2/2, R=0", _ident)
        return pair, spec, src
    if name == "fisher_rao":
        take()
        pair = _const_pair(name, _ZERO3, _power3(1.0), v1_zero=True)
        src = _entropy_sources(_zero, lambda u: -_floor(u) * log(u),
                               "F=0, G=u log u - u, R=-u log u", _zero)
        return pair, ent, src
    if name == "diffusion_reaction_alpha":
        take("alpha")
        a = float(params.get("alpha", 1.0))
        pair = _const_pair(name, _power3(1.0), _power3(a), params={"alpha": a})
        src = _entropy_sources(_one, lambda u: -_floor(u) ** a * log(u),
                               f"F=u, G=u log u - u, R=-u^{a} log u", _ident)
        return pair, ent, src
    if name == "constant_regularized":
        take()
        pair = _const_pair(name, _affine3(1.0, 1.0), _ZERO3, v2_zero=True)
        gp = lambda u: np.log(np.asarray(u, dtype=float) + 1.0) + 1.0
        gpp = lambda u: 1.0 / (np.asarray(u, dtype=float) + 1.0)
        g = lambda u: (np.asarray(u, dtype=float) + 1.0) * np.log(np.asarray(u, dtype=float) + 1.0)
        spec = EntropySpec.custom(g, gp, gpp, g_star_prime=lambda p: np.exp(p - 1.0) - 1.0,
                                  domain_min=-1.0, label="(u+1) log(u+1)")
        src = SourceFunctions(_one, gp, gpp, _zero, "F=u, G=(u+1) log(u+1), R=0", _ident)
        return pair, spec, src
    if name in ("fisher_kpp", "sqrt_fkpp"):
        take()
        v1 = _power3(1.0) if name == "fisher_kpp" else _power3(0.5)
        pair = _const_pair(name, v1, (_fkpp_v2, _fkpp_v2p, _fkpp_v2pp),
                           v2_triple=lambda u: _fkpp_all(_floor(u)))
        u1 = lambda u: np.asarray(u, dtype=float)
        if name == "fisher_kpp":
            src = _entropy_sources(_one, lambda u: u1(u) * (1 - u1(u)),
                                   "F=u, G=u log u - u, R=u(1-u)", _ident)
        else:
            src = _entropy_sources(lambda u: _floor(u) ** -0.5, lambda u: u1(u) * (1 - u1(u)),
                                   "F=2 sqrt u, G=u log u - u, R=u(1-u)", _two_sqrt)
        return pair, ent, src
    if name == "sqrt_linear":
        take()
        pair = _const_pair(name, _power3(0.5), _power3(1.0))
        src = _entropy_sources(lambda u: _floor(u) ** -0.5, lambda u: -_floor(u) * log(u),
                               "F=2 sqrt u, G=u log u - u, R=-u log u", _two_sqrt)
        return pair, ent, src
    if name == "allen_cahn":
        take("f")
        coeffs = params.get("f", DEFAULT_ALLEN_CAHN)
        v1, spec, src = _allen_cahn(coeffs)
        pair = _const_pair(name, v1, _ONE3, params={"f": tuple(coeffs)})
        return pair, spec, src
    if name == "affine":
        take("c1", "c2", "c3")
        c1 = float(params.get("c1", 1.0))
        c2 = float(params.get("c2", 1.0))
        c3 = float(params.get("c3", 0.0))
        if c1 <= 0 or c2 <= 0 or c3 < 0:
            raise ConfigError("affine mobilities need c1 > 0, c2 > 0, c3 >= 0")
        pair = _const_pair(name, _affine3(c1, c3), _affine3(c2, c3),
                           params={"c1": c1, "c2": c2, "c3": c3}, affine=(c1, c2, c3))
        return pair, ent, None
    raise ConfigError(f"unknown mobility {name!r}; known: {', '.join(CATALOG_NAMES)}")


# ----------------------------------------------------------------------------
# Information functional


def face_mobility(v1_cell, mode="cell"):
    """Mobility on the left/lower faces of each cell.

    ``cell`` uses the value of the cell owning the face, which is how the
    control discretization pairs m1 with V1(u). ``mean`` averages the two
    cells sharing the face.
    """
    if mode == "cell":
        return np.stack([v1_cell, v1_cell])
    if mode == "mean":
        vx = v1_cell.copy()
        vy = v1_cell.copy()
        vx[1:, :] = 0.5 * (v1_cell[1:, :] + v1_cell[:-1, :])
        vy[:, 1:] = 0.5 * (v1_cell[:, 1:] + v1_cell[:, :-1])
        return np.stack([vx, vy])
    raise ConfigError(f"unknown face mobility mode {mode!r}")


def information_functional(u, pair, spec, grid, face="cell"):
    """Quadrature of V1 |grad G'(u)|^2 + V2 |G'(u)|^2 on one time slice."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= pair.u_min) or not np.all(np.isfinite(u)):
        raise DomainError("density outside the mobility domain")
    gp = spec.prime(u)
    g = grad_phi(gp, grid)
    total = 0.0
    if not pair.v1_zero:
        vf = face_mobility(pair.v1(u), face)
        total += float(np.sum(vf * g**2))
    if not pair.v2_zero:
        total += float(np.sum(pair.v2(u) * gp**2))
    return grid.dx1 * grid.dx2 * total
