"""Biorthogonal functions, convolution kernels and the correlation kernel.

Conventions (all for the densely packed start):

* ``Psi_m(x) = -(1/lambda(x)) (1/2 pi i) \\oint psi_x(w) w^m e^{-tw} dw`` for any
  integer ``m``; the contour encloses the rates and the origin.
* ``Phi_j(x) = [u^j] p_x(u) e^{tu}``.
* ``phi^{(k)}(y, x) = -(1/lambda(y)) (1/2 pi i) \\oint psi_y(w) p_x(w) w^{-k} dw``.
* ``K(n1,x1; n2,x2) = -phi^{(n2-n1)}(x1, x2) 1(n2 > n1)
  + sum_{k=1}^{n2} Psi_{n1-k}(x1) Phi_{n2-k}(x2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse

from .birth_chain import poisson_tail
from .errors import ConfigError, NoConvergence, SupportTooLarge, TruncationTooTight
from .interlacing import DEFAULT_PATTERN_CAP
from .rates import RateField
from .semigroups import auto_cutoff, chamber_array, lowers_under, plancherel_law
from .spectral import (
    DEFAULT_QUADRATURE,
    Contour,
    ExpPolyFactor,
    QuadratureSettings,
    clambda_contour,
    clambda_integral,
    default_c_zero,
    harmonic_h_many,
    p_coefficients,
    p_poly,
    psi_range,
)

BRUTEFORCE_TAIL = 1e-10


@dataclass(frozen=True, order=True)
class KernelPoint:
    n: int
    x: int

    def __post_init__(self) -> None:
        if int(self.n) < 1 or int(self.x) < 0:
            raise ConfigError(f"kernel point needs n >= 1 and x >= 0, got ({self.n}, {self.x})")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "x", int(self.x))


def as_point(z) -> KernelPoint:
    return z if isinstance(z, KernelPoint) else KernelPoint(*z)


@dataclass
class KernelContext:
    """Parameters of the kernel at time ``t`` plus insert-only value caches.

    ``method`` selects residues or quadrature for the ``C_lambda`` integrals
    (``"auto"`` falls back to quadrature on repeated or ill-conditioned rates).
    ``taylor_order`` caps the degree of the ``u``-series; ``None`` means the
    series is taken exactly, which is always possible since ``p_x`` is a polynomial.
    """

    f: RateField
    t: float
    settings: QuadratureSettings = DEFAULT_QUADRATURE
    method: str = "auto"
    taylor_order: int | None = None
    _psi: dict = field(default_factory=dict, repr=False)
    _phi: dict = field(default_factory=dict, repr=False)
    _kern: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ConfigError("time must be non-negative")

    @property
    def c_lambda(self) -> Contour:
        return clambda_contour(self.f, 1, ExpPolyFactor(0, self.t), self.settings.nodes)

    @property
    def c_zero(self) -> Contour:
        return default_c_zero(self.f, self.settings.nodes)


# ----------------------------------------------------------------------------
# biorthogonal families


def psi_m(ctx: KernelContext, m: int, x: int) -> float:
    """``Psi_m(x)`` for any integer power ``m``."""
    key = (m, x)
    val = ctx._psi.get(key)
    if val is None:
        integral = clambda_integral(ctx.f, 0, x, ExpPolyFactor(m, ctx.t), ctx.settings, ctx.method)
        val = -integral.real / ctx.f(x)
        ctx._psi[key] = val
    return val


def psi_bi(ctx: KernelContext, n: int, j: int, x: int) -> float:
    """``Psi^n_{n-j}(x)``; ``j`` may lie outside ``1..n``."""
    return psi_m(ctx, n - j, x)


def phi_virt(ctx: KernelContext, k: int, x: int) -> float:
    """``[w^{k-1}] p_x(w)``."""
    if k < 1:
        raise ValueError("order k must be >= 1")
    c = p_coefficients(ctx.f, 0, x - 1)
    return float(c[k - 1]) if k - 1 < len(c) else 0.0


def phi_coef(ctx: KernelContext, j: int, x: int) -> float:
    """``[u^j] p_x(u) e^{tu}`` (zero for negative ``j``)."""
    if j < 0:
        return 0.0
    if ctx.taylor_order is not None and j >= ctx.taylor_order:
        raise NoConvergence(f"coefficient {j} is beyond taylor_order={ctx.taylor_order}")
    key = (j, x)
    val = ctx._phi.get(key)
    if val is None:
        c = p_coefficients(ctx.f, 0, x - 1)
        t = ctx.t
        val = 0.0
        for a in range(min(j, len(c) - 1) + 1):
            val += c[a] * t ** (j - a) / math.factorial(j - a)
        val = float(val)
        ctx._phi[key] = val
    return val


def phi_cap(ctx: KernelContext, n: int, j: int, x: int) -> float:
    """``Phi^n_j(x)`` for ``0 <= j <= n-1``."""
    if not 0 <= j <= n - 1:
        raise ValueError(f"index j={j} outside 0..{n - 1}")
    return phi_coef(ctx, j, x)


def phi_conv(ctx: KernelContext, k: int, y: int, x: int, method: str = "exact") -> float:
    """``phi^{(k)}(y, x)``.

    For ``x > y`` only the origin is a pole and the value is
    ``-(1/lambda(y)) [w^{k-1}] prod_{i=y+1}^{x-1} (1 - w/lambda(i))``; for ``x <= y``
    the integrand decays like ``w^{-2}`` and the integral vanishes.
    ``method="contour"`` evaluates the defining integral instead.
    """
    if k < 1:
        raise ValueError("order k must be >= 1")
    if method == "contour":
        # psi_y p_x keeps the rates lambda(x..y) when x <= y, else only p-factors beyond y
        if x > y:
            lo, hi, q = 1, 0, tuple(p_coefficients(ctx.f, y + 1, x - 1))
        else:
            lo, hi, q = x, y, (1.0,)
        val = clambda_integral(ctx.f, lo, hi, ExpPolyFactor(-k, 0.0, q), ctx.settings, "quadrature")
        return -float(val.real) / ctx.f(y)
    if x <= y:
        return 0.0
    c = p_coefficients(ctx.f, y + 1, x - 1)
    return -float(c[k - 1]) / ctx.f(y) if k - 1 < len(c) else 0.0


# ----------------------------------------------------------------------------
# kernel


def correlation_kernel(ctx: KernelContext, z1, z2, mode: str = "single") -> float:
    """``K_t(z1, z2)``.

    ``mode="single"`` resolves the inner integral as a Taylor coefficient;
    ``mode="double"`` evaluates both contour integrals by the trapezoidal rule.
    """
    z1, z2 = as_point(z1), as_point(z2)
    if mode == "double":
        return _kernel_double(ctx, z1, z2)
    if mode != "single":
        raise ValueError(f"unknown mode {mode!r}")
    key = (z1, z2)
    val = ctx._kern.get(key)
    if val is not None:
        return val
    first = -phi_conv(ctx, z2.n - z1.n, z1.x, z2.x) if z2.n > z1.n else 0.0
    second = 0.0
    for k in range(1, z2.n + 1):
        c = phi_coef(ctx, z2.n - k, z2.x)
        if c != 0.0:
            second += psi_m(ctx, z1.n - k, z1.x) * c
    val = first + second
    ctx._kern[key] = val
    return val


def _kernel_double(ctx: KernelContext, z1: KernelPoint, z2: KernelPoint) -> float:
    f, t = ctx.f, ctx.t
    (n1, x1), (n2, x2) = (z1.n, z1.x), (z2.n, z2.x)
    lam = f.rates(0, x1)
    cw = clambda_contour(f, len(lam), ExpPolyFactor(n1 - n2, t), ctx.settings.nodes)
    cu = ctx.c_zero
    first = -phi_conv(ctx, n2 - n1, x1, x2, method="contour") if n2 > n1 else 0.0

    def total(n: int) -> float:
        th = 2 * np.pi * np.arange(n) / n
        dw = cw.radius * np.exp(1j * th)
        du = cu.radius * np.exp(1j * th)
        w = cw.center + dw
        u = cu.center + du
        gw = psi_range(lam, w) * np.exp(-t * w) * w ** (n1 - n2)
        gu = p_poly(f, x2, u) * np.exp(t * u) * u ** (-n2)
        # (w^{n2} - u^{n2}) / (w - u) in its polynomial form
        poly = sum(np.outer(w ** (n2 - 1 - j), u**j) for j in range(n2))
        vals = (gw * dw)[:, None] * poly * (gu * du)[None, :]
        return float((vals.sum() / (n * n)).real)

    n = ctx.settings.nodes
    prev = total(n)
    while 2 * n <= ctx.settings.cap:
        n *= 2
        cur = total(n)
        if abs(cur - prev) < ctx.settings.tol * max(1.0, abs(cur)):
            return first - cur / f(x1)
        prev = cur
    raise NoConvergence("double quadrature did not converge")


def correlation_det(ctx: KernelContext, points: Sequence) -> float:
    """``det[K_t(z_i, z_j)]`` over pairwise distinct points."""
    pts = [as_point(z) for z in points]
    if len(set(pts)) != len(pts):
        raise ConfigError("correlation points must be pairwise distinct")
    if not pts:
        return 1.0
    mat = np.array([[correlation_kernel(ctx, a, b) for b in pts] for a in pts])
    return float(np.linalg.det(mat))


# ----------------------------------------------------------------------------
# brute force oracle


class GibbsLevels:
    """Level marginals of the evolved Gibbs measure from the packed start, truncated at ``cutoff``.

    The top level carries ``P^N_t(Delta_N, .)`` restricted to coordinates
    ``<= cutoff``; lower levels are reached through the Markov links. All
    weights are non-negative, so truncation only loses the mass of top rows
    whose last particle passed ``cutoff``. That mass is bounded by ``tail``.
    """

    def __init__(self, f: RateField, t: float, N: int, cutoff: int | None = None, cap: int = DEFAULT_PATTERN_CAP):
        self.f, self.t, self.N = f, t, N
        mu = N * f.M * t
        if cutoff is None:
            cutoff = auto_cutoff(mu, N - 1, BRUTEFORCE_TAIL)
        self.cutoff = cutoff
        self.tail = poisson_tail(mu, cutoff - (N - 1)) if t > 0 else 0.0
        if math.comb(cutoff + 1, N) > cap:
            raise SupportTooLarge(f"top level has more than {cap} states")
        self.states = {n: chamber_array(n, cutoff) for n in range(1, N + 1)}
        _, self.top = plancherel_law(f, t, N, cutoff)
        self.links = {n: self._link_matrix(n) for n in range(1, N)}

    def _code(self, pts: np.ndarray) -> np.ndarray:
        base = self.cutoff + 1
        pts = np.atleast_2d(pts)
        code = np.zeros(len(pts), dtype=np.int64)
        for i in range(pts.shape[1]):
            code = code * base + pts[:, i]
        return code

    def _link_matrix(self, n: int) -> sparse.csr_matrix:
        """Sparse link from level ``n+1`` (rows) to level ``n`` (columns)."""
        upper, lower = self.states[n + 1], self.states[n]
        lower_codes = self._code(lower)
        inv = 1.0 / self.f.rates(0, self.cutoff)
        h_up = harmonic_h_many(self.f, upper)
        rows, cols, vals = [], [], []
        for r, x in enumerate(upper):
            ys = lowers_under(x)
            rows.append(np.full(len(ys), r))
            cols.append(np.searchsorted(lower_codes, self._code(ys)))
            vals.append(harmonic_h_many(self.f, ys) * np.prod(inv[ys], axis=1) / h_up[r])
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(len(upper), len(lower)),
        )

    def level_law(self, n: int) -> np.ndarray:
        v = self.top
        for m in range(self.N - 1, n - 1, -1):
            v = self.links[m].T @ v
        return v

    def rho(self, points: Iterable) -> float:
        pts = [as_point(z) for z in points]
        if len(set(pts)) != len(pts):
            raise ConfigError("correlation points must be pairwise distinct")
        if any(z.n > self.N for z in pts):
            raise ConfigError(f"points must have level <= {self.N}")
        if any(z.x > self.cutoff for z in pts):
            return 0.0 if self.tail < BRUTEFORCE_TAIL else self._too_far()
        by_level: dict[int, list[int]] = {}
        for z in pts:
            by_level.setdefault(z.n, []).append(z.x)
        low = min(by_level, default=self.N)
        v = self.top.copy()
        for n in range(self.N, low - 1, -1):
            if n < self.N:
                v = self.links[n].T @ v
            for x in by_level.get(n, ()):
                v = v * np.any(self.states[n] == x, axis=1)
        return float(v.sum())

    def _too_far(self) -> float:
        raise TruncationTooTight("point lies beyond the truncation cutoff")


_GIBBS_CACHE: dict[tuple, GibbsLevels] = {}


def gibbs_levels(f: RateField, t: float, N: int, cutoff: int | None = None) -> GibbsLevels:
    key = (f, float(t), N, cutoff)
    g = _GIBBS_CACHE.get(key)
    if g is None:
        g = _GIBBS_CACHE.setdefault(key, GibbsLevels(f, t, N, cutoff))
    return g


def correlation_bruteforce(
    f: RateField, t: float, N: int, points: Sequence, cutoff: int | None = None
) -> float:
    """``rho_k`` of the evolved Gibbs measure by summation over truncated level marginals.

    Without ``cutoff`` the truncation is chosen so that the dropped mass is
    below ``1e-10``.
    """
    return gibbs_levels(f, t, N, cutoff).rho(points)


# ----------------------------------------------------------------------------
# Eynard-Mehta identities


def _psi_bound(f: RateField, t: float, m: int, x: int) -> float:
    """``|Psi_m(x)| <= (2M)^m P(Poisson(Mt) >= x - m)`` for ``m >= 0``."""
    return (2 * f.M) ** m * poisson_tail(f.M * t, x - m - 1)


def _phi_bound(f: RateField, t: float, j: int, x: int) -> float:
    return sum(math.comb(x, a) * f.s ** (-a) * t ** (j - a) / math.factorial(j - a) for a in range(min(j, x) + 1))


def _series_tail(term, start: int) -> float:
    total = 0.0
    for x in range(start, start + 2000):
        v = term(x)
        total += v
        if x > start + 10 and v < 1e-18 * max(total, 1e-300):
            break
    return total


def biorthogonality_residual(
    ctx: KernelContext, n: int, i: int, j: int, x_cut: int | None = None, max_tail: float = 1e-9
) -> tuple[float, float]:
    """``(|sum_{x <= x_cut} Psi_i(x) Phi_j(x) - 1(i = j)|, tail bound)`` for ``0 <= i, j <= n-1``."""
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("indices must lie in 0..n-1")
    f, t = ctx.f, ctx.t

    def term(x: int) -> float:
        return _psi_bound(f, t, i, x) * _phi_bound(f, t, j, x)

    if x_cut is None:
        x_cut = i + 1
        while _series_tail(term, x_cut + 1) > 1e-14:
            x_cut += 1
    tail = _series_tail(term, x_cut + 1)
    if tail > max_tail:
        raise TruncationTooTight(f"certified tail {tail:.3g} exceeds {max_tail:.3g}")
    total = sum(psi_m(ctx, i, x) * phi_cap(ctx, n, j, x) for x in range(x_cut + 1))
    return abs(total - (1.0 if i == j else 0.0)), tail


def pushdown_residual(ctx: KernelContext, m: int, y: int, x_cut: int | None = None) -> tuple[float, float]:
    """``(|sum_x phi^{(1)}(y, x) Psi_m(x) - Psi_{m-1}(y)|, tail bound)`` for ``m >= 0``."""
    f, t = ctx.f, ctx.t

    def term(x: int) -> float:
        return _psi_bound(f, t, m, x) / f.s

    if x_cut is None:
        x_cut = y + m + 1
        while _series_tail(term, x_cut + 1) > 1e-14:
            x_cut += 1
    tail = _series_tail(term, x_cut + 1)
    total = sum(phi_conv(ctx, 1, y, x) * psi_m(ctx, m, x) for x in range(y + 1, x_cut + 1))
    return abs(total - psi_m(ctx, m - 1, y)), tail


def convolution_residual(ctx: KernelContext, k: int, y: int, x: int) -> float:
    """``|phi^{(k+1)}(y, x) - sum_z phi^{(1)}(y, z) phi^{(k)}(z, x)|``; the sum is finite."""
    total = sum(phi_conv(ctx, 1, y, z) * phi_conv(ctx, k, z, x) for z in range(y + 1, x))
    return abs(phi_conv(ctx, k + 1, y, x) - total)


def span_ranks(ctx: KernelContext, n: int, sites: Sequence[int]) -> tuple[int, int]:
    """Ranks of ``[Phi^n_j(x_m)]`` and ``[phi^{(j+1)}(virt, x_m)]`` over the given sites."""
    A = np.array([[phi_cap(ctx, n, j, x) for j in range(n)] for x in sites])
    B = np.array([[phi_virt(ctx, j + 1, x) for j in range(n)] for x in sites])
    return int(np.linalg.matrix_rank(A)), int(np.linalg.matrix_rank(B))
