"""Special functions of the pure-birth chain and the contour-integral engine.

Every contour integral in the package has the form

    (1/2 pi i) \\oint psi_{[lo..hi]}(w) * w**m * Q(w) * exp(-t w) dw,

with ``psi_{[lo..hi]}(w) = prod_{k=lo}^{hi} lambda(k) / (lambda(k) - w)`` and ``Q`` a
polynomial.  Such integrals are evaluated either as a finite residue sum
(distinct rates) or by the periodic trapezoidal rule on a circle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ContractionViolated,
    IllConditionedResidues,
    NoConvergence,
    NotAChamberPoint,
    PoleHit,
    RepeatedRates,
)
from .rates import RATE_EQUALITY_RTOL, RateField

POLE_TOL = 1e-12

# Residue sums whose terms exceed the result by this factor lose more than
# ~1e-12 to cancellation; those integrals are routed to quadrature instead.
RESIDUE_CANCELLATION_LIMIT = 1e5


@dataclass(frozen=True)
class QuadratureSettings:
    nodes: int = 256
    cap: int = 16384
    tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.nodes < 8 or self.nodes % 2:
            raise ValueError("nodes must be an even integer >= 8")
        if self.cap < self.nodes:
            raise ValueError("node cap must be at least the initial node count")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


DEFAULT_QUADRATURE = QuadratureSettings()


@dataclass(frozen=True)
class Contour:
    """Positively oriented circle used by the trapezoidal rule."""

    center: complex
    radius: float
    nodes: int = 256

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("contour radius must be positive")
        if self.nodes < 8 or self.nodes % 2:
            raise ValueError("contour needs an even number of nodes >= 8")

    def encloses(self, z: complex) -> bool:
        return abs(z - self.center) < self.radius

    def distance(self, z: complex) -> float:
        return abs(abs(z - self.center) - self.radius)


def default_c_lambda(f: RateField, nodes: int = 256) -> Contour:
    """Circle around 0 and [s, M], at distance s/2 from every pole."""
    return Contour(complex(f.M / 2), f.M / 2 + f.s / 2, nodes)


def default_c_zero(f: RateField, nodes: int = 256) -> Contour:
    """Small circle around 0 that excludes [s, M]."""
    return Contour(0j, f.s / 2, nodes)


def c_lambda_beyond(f: RateField, R: float = 4.0, nodes: int = 256) -> Contour:
    """Circle centred at 0 on which |lambda(x)/(lambda(x)-w)| <= 1/R for every x."""
    if R <= 1:
        raise ValueError("R must exceed 1")
    return Contour(0j, f.M * (1.0 + R), nodes)


# ---------------------------------------------------------------------------
# psi and p


def p_poly(f: RateField, x: int, w):
    """``p_x(w) = prod_{k<x} (lambda(k) - w) / lambda(k)``; vectorised over ``w``."""
    lam = f.rates(0, x - 1)
    w = np.asarray(w, dtype=complex)
    out = np.ones_like(w)
    for r in lam:
        out = out * (1.0 - w / r)
    return out[()] if out.ndim == 0 else out


def psi_fn(f: RateField, x: int, w):
    """``psi_x(w) = prod_{k<=x} lambda(k) / (lambda(k) - w)``; equals ``1/p_{x+1}(w)``."""
    lam = f.rates(0, x)
    w = np.asarray(w, dtype=complex)
    for r in lam:
        if np.any(np.abs(w - r) <= POLE_TOL * max(1.0, r)):
            raise PoleHit(f"w collides with the pole lambda={r}")
    out = np.ones_like(w)
    for r in lam:
        out = out * (r / (r - w))
    return out[()] if out.ndim == 0 else out


def psi_range(lam: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = np.ones_like(w)
    for r in lam:
        out = out * (r / (r - w))
    return out


def p_coefficients(f: RateField, lo: int, hi: int) -> np.ndarray:
    """Ascending coefficients of ``prod_{k=lo}^{hi} (1 - w/lambda(k))``."""
    c = np.array([1.0])
    for r in f.rates(lo, hi):
        c = np.append(c, 0.0) - np.concatenate(([0.0], c)) / r
    return c


def p_taylor(f: RateField, x: int) -> np.ndarray:
    """Coefficients of ``p_x`` in powers of ``w`` (length ``x + 1``)."""
    return p_coefficients(f, 0, x - 1)


def geometric_taylor(lam: np.ndarray, order: int) -> np.ndarray:
    """First ``order`` Taylor coefficients at 0 of ``prod lambda_k/(lambda_k - w)``."""
    c = np.zeros(order)
    if order == 0:
        return c
    c[0] = 1.0
    for r in lam:
        for d in range(1, order):
            c[d] += c[d - 1] / r
    return c


# ---------------------------------------------------------------------------
# integrand factors


@dataclass(frozen=True)
class ExpPolyFactor:
    """The analytic cofactor ``w**m * Q(w) * exp(-t w)``.

    ``m < 0`` places a pole of order ``-m`` at the origin.
    """

    m: int = 0
    t: float = 0.0
    q: tuple[float, ...] = (1.0,)

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        val = np.polynomial.polynomial.polyval(w, np.asarray(self.q)) * np.exp(-self.t * w)
        return val * w ** self.m

    @property
    def degree(self) -> int:
        return len(self.q) - 1 + self.m

    def cofactor_taylor(self, order: int) -> np.ndarray:
        """Taylor coefficients at 0 of ``Q(w) exp(-t w)`` up to ``w**(order-1)``."""
        if order <= 0:
            return np.zeros(0)
        e = np.array([(-self.t) ** b / math.factorial(b) for b in range(order)])
        q = np.zeros(order)
        n = min(order, len(self.q))
        q[:n] = self.q[:n]
        return np.convolve(q, e)[:order]


def _distinct(lam: np.ndarray) -> bool:
    srt = np.sort(lam)
    gaps = np.diff(srt)
    return bool(np.all(gaps > RATE_EQUALITY_RTOL * srt[1:]))


def residue_sum(f: RateField, lo: int, hi: int, factor: ExpPolyFactor) -> complex:
    """Exact residue evaluation of ``(1/2 pi i) \\oint_{C_lambda} psi_{[lo..hi]} factor dw``.

    Raises :class:`RepeatedRates` when two enclosed rates coincide and
    :class:`IllConditionedResidues` when cancellation would cost accuracy.
    """
    lam = f.rates(lo, hi)
    if len(lam) > 1 and not _distinct(lam):
        raise RepeatedRates(f"rates lambda({lo}..{hi}) are not pairwise distinct")
    terms = []
    for k, r in enumerate(lam):
        others = np.delete(lam, k)
        weight = -r * np.prod(others / (others - r))
        terms.append(weight * complex(factor(r)))
    if factor.m < 0:
        order = -factor.m
        psi_c = geometric_taylor(lam, order)
        cof = factor.cofactor_taylor(order)
        terms.append(complex(np.dot(psi_c, cof[::-1])))
    total = complex(sum(terms)) if terms else 0j
    scale = sum(abs(z) for z in terms)
    if scale > RESIDUE_CANCELLATION_LIMIT * max(1.0, abs(total)):
        raise IllConditionedResidues(
            f"residue terms of size {scale:.3g} cancel to {abs(total):.3g}"
        )
    return total


def residue_sum_Clambda(
    f: RateField,
    x: int,
    extra: ExpPolyFactor | Callable,
    with_zero_pole: bool | None = None,
    lo: int = 0,
) -> complex:
    """``(1/2 pi i) \\oint_{C_lambda} psi_x(w) extra(w) dw`` as a finite residue sum.

    ``extra`` is either an :class:`ExpPolyFactor` (zero-pole residue by exact
    Taylor expansion) or a plain callable without a pole at the origin, or with
    one when ``with_zero_pole`` is set (its residue is then taken on ``C_0``).
    """
    if isinstance(extra, ExpPolyFactor):
        if with_zero_pole is False and extra.m < 0:
            raise ValueError("factor has a pole at 0 but with_zero_pole is False")
        return residue_sum(f, lo, x, extra)
    lam = f.rates(lo, x)
    if len(lam) > 1 and not _distinct(lam):
        raise RepeatedRates(f"rates lambda({lo}..{x}) are not pairwise distinct")
    total = 0j
    for k, r in enumerate(lam):
        others = np.delete(lam, k)
        total += -r * np.prod(others / (others - r)) * complex(extra(r))
    if with_zero_pole:
        total += contour_integrate(lambda w: psi_range(lam, w) * extra(w), default_c_zero(f))
    return total


# ---------------------------------------------------------------------------
# quadrature


def contour_integrate(
    g: Callable, c: Contour, settings: QuadratureSettings | None = None
) -> complex:
    """``(1/2 pi i) \\oint_c g(w) dw`` by the trapezoidal rule with node doubling.

    ``g`` must accept a numpy array of complex nodes.  The node count doubles
    from ``c.nodes`` until successive values agree to ``settings.tol``.
    """
    settings = settings or DEFAULT_QUADRATURE
    n = c.nodes

    def node_sum(theta: np.ndarray) -> complex:
        z = c.radius * np.exp(1j * theta)
        return complex(np.sum(np.asarray(g(c.center + z)) * z))

    acc = node_sum(2 * np.pi * np.arange(n) / n)
    prev = acc / n
    while 2 * n <= settings.cap:
        acc += node_sum(2 * np.pi * (np.arange(n) + 0.5) / n)
        n *= 2
        cur = acc / n
        if abs(cur - prev) < settings.tol:
            return cur
        prev = cur
    raise NoConvergence(
        f"trapezoidal rule did not reach tol={settings.tol:g} within {settings.cap} nodes"
    )


def clambda_contour(f: RateField, n_poles: int, factor: ExpPolyFactor, nodes: int = 256) -> Contour:
    """A ``C_lambda`` circle whose radius is widened towards the saddle of the integrand.

    The default circle is kept when the integrand does not decay; otherwise the
    radius grows to ``decay / t`` so that rounding stays proportional to the
    value being computed rather than to the peak of ``psi`` near the poles.
    """
    base = default_c_lambda(f, nodes)
    decay = n_poles - factor.degree
    if factor.t > 0 and decay > 0:
        radius = min(max(base.radius, decay / factor.t), 1e4 * f.M)
        return Contour(base.center, radius, nodes)
    return base


def clambda_integral(
    f: RateField,
    lo: int,
    hi: int,
    factor: ExpPolyFactor,
    settings: QuadratureSettings | None = None,
    method: str = "auto",
) -> complex:
    """``(1/2 pi i) \\oint_{C_lambda} psi_{[lo..hi]}(w) factor(w) dw``.

    ``method`` is ``"auto"`` (residues when available, else quadrature),
    ``"residue"`` or ``"quadrature"``.
    """
    if method not in ("auto", "residue", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method != "quadrature":
        try:
            return residue_sum(f, lo, hi, factor)
        except (RepeatedRates, IllConditionedResidues):
            if method == "residue":
                raise
    settings = settings or DEFAULT_QUADRATURE
    lam = f.rates(lo, hi)
    contour = clambda_contour(f, len(lam), factor, settings.nodes)
    return contour_integrate(lambda w: psi_range(lam, w) * factor(w), contour, settings)


# ---------------------------------------------------------------------------
# harmonic functions


class HarmonicTable:
    """Dense memo of ``I_i(x)`` for ``i <= i_max``, ``x <= x_max``.

    ``I_0 = 1`` and ``I_i(x) = sum_{y<x} I_{i-1}(y) / lambda(y)``.
    """

    def __init__(self, f: RateField, i_max: int = 4, x_max: int = 32):
        self.f = f
        self.i_max = -1
        self.x_max = -1
        self.values = np.zeros((0, 0))
        self.ensure(i_max, x_max)

    def ensure(self, i_max: int, x_max: int) -> None:
        if i_max <= self.i_max and x_max <= self.x_max:
            return
        i_max = max(i_max, self.i_max)
        x_max = max(x_max, 2 * self.x_max, 16)
        inv = 1.0 / self.f.rates(0, x_max)
        vals = np.zeros((i_max + 1, x_max + 1))
        vals[0] = 1.0
        for i in range(1, i_max + 1):
            vals[i, 1:] = np.cumsum(vals[i - 1, :-1] * inv[:-1])
        self.values, self.i_max, self.x_max = vals, i_max, x_max

    def __call__(self, i: int, x: int) -> float:
        self.ensure(i, x)
        return float(self.values[i, x])


_TABLES: dict[RateField, HarmonicTable] = {}


def harmonic_table(f: RateField) -> HarmonicTable:
    table = _TABLES.get(f)
    if table is None:
        table = _TABLES.setdefault(f, HarmonicTable(f))
    return table


def harmonic_I(f: RateField, i: int, x: int) -> float:
    if i < 0 or x < 0:
        raise ValueError("order and site must be non-negative")
    return harmonic_table(f)(i, x)


def check_chamber(x: Sequence[int]) -> tuple[int, ...]:
    pt = tuple(int(v) for v in x)
    if any(v < 0 for v in pt) or any(b <= a for a, b in zip(pt, pt[1:])):
        raise NotAChamberPoint(f"{pt} is not strictly increasing and non-negative")
    return pt


def harmonic_h(f: RateField, x: Sequence[int]) -> float:
    """``h_N(x) = det(I_{i-1}(x_j))``, positive on the chamber."""
    pt = check_chamber(x)
    n = len(pt)
    if n <= 1:
        return 1.0
    table = harmonic_table(f)
    table.ensure(n - 1, pt[-1])
    mat = table.values[:n, list(pt)]
    return float(np.linalg.det(mat))


def harmonic_h_many(f: RateField, pts: np.ndarray) -> np.ndarray:
    """Vectorised ``h_N`` over an ``(K, N)`` array of chamber points."""
    pts = np.asarray(pts, dtype=int)
    k, n = pts.shape
    if n <= 1:
        return np.ones(k)
    table = harmonic_table(f)
    table.ensure(n - 1, int(pts.max()) if pts.size else 0)
    mats = table.values[:n][:, pts]  # (n, K, n)
    return np.linalg.det(np.transpose(mats, (1, 0, 2)))


# ---------------------------------------------------------------------------
# telescoping identity


def telescoping_check(
    f: RateField, y: int, w: complex, k: int, R: float = 2.0
) -> tuple[complex, complex]:
    """Both sides of the finite telescoping identity with ``a_i = lambda(y+i+1)``.

    Left: ``sum_{l<=k} (1/a_l) prod_{i<=l} a_i/(a_i-w)``.
    Right: ``-(1/w) (1 - prod_{l<=k} a_l/(a_l-w))``.
    """
    a = f.rates(y + 1, y + 1 + k)
    ratios = a / (a - w)
    if np.any(np.abs(ratios) > 1.0 / R):
        raise ContractionViolated(f"|a/(a-w)| exceeds 1/R={1 / R:g} at w={w}")
    partial = np.cumprod(ratios)
    lhs = complex(np.sum(partial / a))
    rhs = complex(-(1.0 - partial[-1]) / w)
    return lhs, rhs

