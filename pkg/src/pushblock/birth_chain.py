"""Transition densities of the inhomogeneous pure-birth chain.

The chain jumps ``x -> x+1`` at rate ``lambda(x)``; its generator is
``L = lambda(x) (f(x+1) - f(x))``.  Densities come from the spectral contour
formula; an ODE integration of the Kolmogorov equations serves as an
independent oracle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import poisson

from .errors import NegativeDensity, TruncationTooTight
from .rates import RateField, rate_at
from .spectral import (
    DEFAULT_QUADRATURE,
    ExpPolyFactor,
    QuadratureSettings,
    clambda_integral,
    p_poly,
)

log = logging.getLogger(__name__)

CLAMP_TOL = 1e-12
NEGATIVE_FAIL_TOL = 1e-9
ODE_TAIL_LIMIT = 1e-10


@dataclass(frozen=True)
class TransitionQuery:
    f: RateField
    t: float
    x: int
    y: int

    def __post_init__(self) -> None:
        if self.t < 0 or self.x < 0 or self.y < 0:
            raise ValueError("time and sites must be non-negative")

    def density(self, **kwargs) -> float:
        return transition_density(self.f, self.t, self.x, self.y, **kwargs)

    def density_ode(self, x_max: int | None = None) -> float:
        return transition_density_ode(self.f, self.t, self.x, self.y, x_max)


def poisson_tail(mu: float, k: int) -> float:
    """``P(Poisson(mu) > k)``; the certified bound on displacement beyond ``k``."""
    if k < 0:
        return 1.0
    return float(poisson.sf(k, mu))


def default_x_max(f: RateField, t: float, x: int) -> int:
    mt = f.M * t
    return x + math.ceil(mt + 12 * math.sqrt(mt) + 20)


def _clamp(value: float) -> float:
    if value < 0:
        if value < -NEGATIVE_FAIL_TOL:
            raise NegativeDensity(f"transition density evaluated to {value:.3e}")
        if value < -CLAMP_TOL:
            log.warning("clamping negative transition density %.3e", value)
        return 0.0
    return value


def transition_density(
    f: RateField,
    t: float,
    x: int,
    y: int,
    *,
    method: str = "auto",
    settings: QuadratureSettings | None = None,
) -> float:
    """``e^{tL}(x, y) = -(1/lambda(y)) (1/2 pi i) \\oint psi_y(w) p_x(w) e^{-tw} dw``.

    ``p_x`` cancels the first ``x`` factors of ``psi_y`` exactly, so only the
    rates at ``x..y`` enter.
    """
    if t < 0:
        raise ValueError("time must be non-negative")
    if y < x:
        return 0.0
    if t == 0:
        return 1.0 if x == y else 0.0
    val = clambda_integral(f, x, y, ExpPolyFactor(0, t), settings or DEFAULT_QUADRATURE, method)
    return _clamp(-val.real / rate_at(f, y))


def transition_density_ode(
    f: RateField, t: float, x: int, y: int, x_max: int | None = None
) -> float:
    """Oracle: integrate the forward equations on sites ``x..x_max`` (LSODA)."""
    if y < x:
        return 0.0
    if x_max is None:
        x_max = max(default_x_max(f, t, x), y + 1)
    if y >= x_max:
        raise TruncationTooTight(f"target site {y} lies beyond truncation {x_max}")
    return float(transition_row_ode(f, t, x, x_max)[y - x])


def transition_row_ode(f: RateField, t: float, x: int, x_max: int) -> np.ndarray:
    """``e^{tL}(x, x..x_max)`` from the forward equations on a truncated space.

    Pure-birth motion means the entries up to ``x_max`` are unaffected by the
    truncation; the lost mass is bounded by a Poisson(M t) tail.
    """
    tail = poisson_tail(f.M * t, x_max - x)
    if tail > ODE_TAIL_LIMIT:
        raise TruncationTooTight(f"Poisson tail {tail:.2e} beyond x_max={x_max} is too large")
    n = x_max - x + 1
    lam = f.rates(x, x_max)
    gen = np.diag(-lam) + np.diag(lam[:-1], -1)
    p0 = np.zeros(n)
    p0[0] = 1.0
    if t == 0:
        return p0
    sol = solve_ivp(
        lambda _s, p: gen @ p,
        (0.0, t),
        p0,
        method="LSODA",
        jac=lambda _s, _p: gen,
        rtol=1e-12,
        atol=1e-15,
    )
    if not sol.success:
        raise TruncationTooTight(f"ODE integration failed: {sol.message}")
    return np.clip(sol.y[:, -1], 0.0, None)


def cumulative(f: RateField, t: float, x: int, z: int, **kwargs) -> float:
    """``e^{tL} 1_{[0,z]}(x)``, the probability of sitting at or left of ``z``."""
    if z < x:
        return 0.0
    return float(sum(transition_density(f, t, x, y, **kwargs) for y in range(x, z + 1)))


def duality_residual(f: RateField, t: float, x: int, y: int, **kwargs) -> float:
    """``|e^{tL}(x,y) + (lambda(x)/lambda(y)) grad_x^+ e^{tL} 1_{[0,y]}(x)|``."""
    forward = cumulative(f, t, x + 1, y, **kwargs) - cumulative(f, t, x, y, **kwargs)
    dens = transition_density(f, t, x, y, **kwargs)
    return abs(dens + rate_at(f, x) / rate_at(f, y) * forward)


def eigen_relation_residual(f: RateField, u: complex, x: int) -> float:
    """``|lambda(x) (p_{x+1}(u) - p_x(u)) + u p_x(u)|``; ``p_.(u)`` is a (-u)-eigenfunction."""
    px = complex(p_poly(f, x, u))
    return abs(rate_at(f, x) * (complex(p_poly(f, x + 1, u)) - px) + u * px)


class TransitionTable:
    """Dense cache of ``e^{tL}(a, b)`` and cumulative sums for ``a, b <= size``."""

    def __init__(
        self,
        f: RateField,
        t: float,
        size: int,
        *,
        method: str = "auto",
        settings: QuadratureSettings | None = None,
    ):
        self.f, self.t, self.size = f, t, size
        self.method, self.settings = method, settings
        dens = np.zeros((size + 2, size + 2))
        for a in range(size + 2):
            for b in range(a, size + 2):
                dens[a, b] = transition_density(f, t, a, b, method=method, settings=settings)
        self.dens = dens
        # cum[a, z] = P(X_t <= z | X_0 = a)
        self.cum = np.cumsum(dens, axis=1)
        self.lam = f.rates(0, size + 1)

    def P(self, a, b):
        return self.dens[a, b]

    def F(self, a, z):
        return self.cum[a, z]
