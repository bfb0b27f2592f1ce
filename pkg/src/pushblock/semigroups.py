"""Karlin-McGregor determinants, Doob transforms and the two-level block kernel.

Every intertwining identity is checked on a truncated state space. Truncated
mass is bounded by Poisson tails: a particle that only moves when one of ``c``
clocks of rate at most ``M`` rings makes at most ``Poisson(c M t)`` moves.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .birth_chain import TransitionTable, poisson_tail
from .errors import LengthMismatch, NotAChamberPoint, TruncationTooTight
from .interlacing import interlaces, interlacing_rows
from .rates import RateField
from .spectral import check_chamber, harmonic_h, harmonic_h_many

DEFAULT_TAIL_TARGET = 1e-12
MAX_TAIL = 1e-8


@dataclass(frozen=True)
class TwoLevelState:
    y: tuple[int, ...]
    x: tuple[int, ...]

    def __post_init__(self) -> None:
        y = tuple(int(v) for v in self.y)
        x = tuple(int(v) for v in self.x)
        if len(x) != len(y) + 1:
            raise LengthMismatch(f"need len(x) = len(y) + 1, got {len(y)} and {len(x)}")
        check_chamber(x)
        if y:
            check_chamber(y)
        if not interlaces(y, x):
            raise NotAChamberPoint(f"{y} and {x} do not interlace")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def N(self) -> int:
        return len(self.y)


class Residual(NamedTuple):
    """Absolute residual of a truncated identity with its certified tail bound."""

    value: float
    tail: float

    def ok(self, tol: float) -> bool:
        return self.value < tol + self.tail


# ----------------------------------------------------------------------------
# tables and truncation


_TABLES: dict[tuple, TransitionTable] = {}


def transition_table(f: RateField, t: float, size: int) -> TransitionTable:
    """Shared table of transition densities, grown on demand."""
    key = (f, float(t))
    tab = _TABLES.get(key)
    if tab is None or tab.size < size:
        tab = TransitionTable(f, t, size)
        _TABLES[key] = tab
    return tab


def auto_cutoff(mu: float, start: int, target: float = DEFAULT_TAIL_TARGET) -> int:
    """Smallest ``K >= start`` with ``P(Poisson(mu) > K - start) <= target``."""
    k = 0
    while poisson_tail(mu, k) > target:
        k += 1
    return start + k


def _checked_tail(tail: float, max_tail: float) -> float:
    if tail > max_tail:
        raise TruncationTooTight(f"certified tail {tail:.3g} exceeds {max_tail:.3g}; raise the cutoff")
    return tail


# ----------------------------------------------------------------------------
# densities


def _as_points(x: Sequence[int], y: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    x, y = tuple(int(v) for v in x), tuple(int(v) for v in y)
    if len(x) != len(y):
        raise LengthMismatch(f"lengths {len(x)} and {len(y)} differ")
    return check_chamber(x), check_chamber(y)


def km_batch(table: TransitionTable, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``det(e^{tL}(X[b,i], Y[b,j]))`` for each batch row ``b``."""
    X = np.atleast_2d(np.asarray(X, dtype=int))
    Y = np.atleast_2d(np.asarray(Y, dtype=int))
    if X.shape[1] == 0:
        return np.ones(max(len(X), len(Y)))
    mats = table.dens[X[:, :, None], Y[:, None, :]]
    return np.linalg.det(mats)


def km_density(f: RateField, t: float, x: Sequence[int], y: Sequence[int]) -> float:
    """Karlin-McGregor density ``det(e^{tL}(x_i, y_j))``."""
    x, y = _as_points(x, y)
    if not x:
        return 1.0
    tab = transition_table(f, t, max(max(x), max(y)))
    return float(km_batch(tab, np.array([x]), np.array([y]))[0])


def doob_km_density(f: RateField, t: float, x: Sequence[int], y: Sequence[int]) -> float:
    """Doob transform ``(h(y)/h(x)) det(e^{tL}(x_i, y_j))`` of the Karlin-McGregor semigroup."""
    x, y = _as_points(x, y)
    if not x:
        return 1.0
    return harmonic_h(f, y) / harmonic_h(f, x) * km_density(f, t, x, y)


def _block_batch(
    table: TransitionTable, frm: TwoLevelState, Yp: np.ndarray, Xp: np.ndarray
) -> np.ndarray:
    """Block determinants from one state to a batch of target states."""
    N = frm.N
    B = len(Xp)
    x = np.asarray(frm.x)
    y = np.asarray(frm.y, dtype=int)
    Xp = np.asarray(Xp, dtype=int).reshape(B, N + 1)
    Yp = np.asarray(Yp, dtype=int).reshape(B, N)
    mat = np.empty((B, 2 * N + 1, 2 * N + 1))
    mat[:, : N + 1, : N + 1] = table.dens[x[None, :, None], Xp[:, None, :]]
    if N:
        upper = (np.arange(N)[None, :] >= np.arange(N + 1)[:, None]).astype(float)
        lam_yp = table.lam[Yp]
        mat[:, : N + 1, N + 1 :] = (table.cum[x[None, :, None], Yp[:, None, :]] - upper[None]) / lam_yp[:, None, :]
        lam_y = table.lam[y]
        grad = table.dens[(y + 1)[None, :, None], Xp[:, None, :]] - table.dens[y[None, :, None], Xp[:, None, :]]
        mat[:, N + 1 :, : N + 1] = -lam_y[None, :, None] * grad
        mat[:, N + 1 :, N + 1 :] = table.dens[y[None, :, None], Yp[:, None, :]]
    return np.linalg.det(mat)


def two_level_block_kernel(f: RateField, t: float, frm: TwoLevelState, to: TwoLevelState) -> float:
    """Transition density of the two-level dynamics killed at the first ``Y`` collision."""
    if frm.N != to.N:
        raise LengthMismatch("states live on different levels")
    size = max(max(frm.x), max(to.x)) + 1
    tab = transition_table(f, t, size)
    return float(_block_batch(tab, frm, np.array([to.y], dtype=int), np.array([to.x]))[0])


# ----------------------------------------------------------------------------
# enumeration helpers


def chamber_array(n: int, max_coord: int) -> np.ndarray:
    pts = list(itertools.combinations(range(max_coord + 1), n))
    return np.array(pts, dtype=int).reshape(len(pts), n)


def uppers_over(y: Sequence[int], max_last: int) -> np.ndarray:
    """All ``x`` with ``y < x`` and ``x_{N+1} <= max_last``."""
    N = len(y)
    ranges = [range(0, y[0] + 1)] if N else []
    ranges += [range(y[i - 1] + 1, y[i] + 1) for i in range(1, N)]
    ranges.append(range(y[-1] + 1 if N else 0, max_last + 1))
    pts = list(itertools.product(*ranges))
    return np.array(pts, dtype=int).reshape(len(pts), N + 1)


def lowers_under(x: Sequence[int]) -> np.ndarray:
    pts = list(interlacing_rows(x))
    return np.array(pts, dtype=int).reshape(len(pts), len(x) - 1)


def two_level_states(N: int, max_coord: int) -> Iterator[TwoLevelState]:
    """All states of ``W^{N,N+1}`` with coordinates ``<= max_coord``."""
    for y in itertools.combinations(range(max_coord + 1), N):
        for x in uppers_over(y, max_coord):
            yield TwoLevelState(y, tuple(int(v) for v in x))


def _lambda_weight(table: TransitionTable, Y: np.ndarray) -> np.ndarray:
    Y = np.atleast_2d(Y)
    return np.prod(1.0 / table.lam[Y], axis=1)


# ----------------------------------------------------------------------------
# identities


def intertwining_residual_KM(
    f: RateField,
    t: float,
    N: int,
    x: Sequence[int],
    y: Sequence[int],
    cutoff: int | None = None,
    max_tail: float = MAX_TAIL,
) -> Residual:
    """``|(P^{N+1} Lambda)(x, y) - (Lambda P^N)(x, y)|``, summing over ``x'_{N+1} <= cutoff``.

    Dropped terms carry total Karlin-McGregor mass at most the probability that
    the top chain started at ``x_{N+1}`` passes ``cutoff``, times ``s^{-N}``.
    """
    x, y = check_chamber(x), check_chamber(y)
    if len(x) != N + 1 or len(y) != N:
        raise LengthMismatch("expected x of length N+1 and y of length N")
    mu = f.M * t
    if cutoff is None:
        cutoff = max(auto_cutoff(mu, x[-1]), max(y) + 1)
    tail = _checked_tail(f.s ** (-N) * poisson_tail(mu, cutoff - x[-1]), max_tail)
    tab = transition_table(f, t, max(cutoff, max(x)))
    Xp = uppers_over(y, cutoff)
    lam_y = _lambda_weight(tab, np.array([y]))[0] if N else 1.0
    lhs = float(np.sum(km_batch(tab, np.repeat([x], len(Xp), axis=0), Xp))) * lam_y
    Yl = lowers_under(x)
    if N:
        rhs = float(np.sum(_lambda_weight(tab, Yl) * km_batch(tab, Yl, np.repeat([y], len(Yl), axis=0))))
    else:
        rhs = 1.0
    return Residual(abs(lhs - rhs), tail)


def intertwining_residual_U(
    f: RateField,
    t: float,
    side: str,
    *,
    frm: TwoLevelState | None = None,
    y_to: Sequence[int] | None = None,
    x_from: Sequence[int] | None = None,
    to: TwoLevelState | None = None,
    cutoff: int | None = None,
    max_tail: float = MAX_TAIL,
) -> Residual:
    """Residual of one of the two intertwinings of the two-level kernel.

    ``side="projection"`` takes ``frm`` and ``y_to`` and compares
    ``sum_{x'} U[(y,x),(y',x')]`` with ``P^N(y, y')``; the sum over ``x'_{N+1}`` is
    truncated at ``cutoff``. ``side="link"`` takes ``x_from`` and ``to`` and compares
    ``P^{N+1}(x, x') Lambda(x', y')`` with ``sum_y Lambda(x, y) U[(y,x),(y',x')]``,
    which is a finite sum.
    """
    if side in ("projection", "pi", "Pi"):
        if frm is None or y_to is None:
            raise ValueError("projection side needs frm and y_to")
        yp = check_chamber(y_to) if len(y_to) else ()
        if len(yp) != frm.N:
            raise LengthMismatch("y_to has the wrong length")
        # the top X particle moves on its own clock or when pushed by Y_N
        mu = 2 * f.M * t
        if cutoff is None:
            cutoff = max(auto_cutoff(mu, frm.x[-1]), max(yp, default=0) + 1)
        tail = _checked_tail(poisson_tail(mu, cutoff - frm.x[-1]), max_tail)
        tab = transition_table(f, t, cutoff + 1)
        Xp = uppers_over(yp, cutoff)
        Yp = np.repeat(np.array([yp], dtype=int).reshape(1, frm.N), len(Xp), axis=0)
        lhs = float(np.sum(_block_batch(tab, frm, Yp, Xp)))
        if frm.N:
            rhs = float(km_batch(tab, np.array([frm.y]), np.array([yp]))[0])
        else:
            rhs = 1.0
        return Residual(abs(lhs - rhs), tail)
    if side in ("link", "lambda", "Lambda"):
        if x_from is None or to is None:
            raise ValueError("link side needs x_from and to")
        x = check_chamber(x_from)
        if len(x) != to.N + 1:
            raise LengthMismatch("x_from has the wrong length")
        tab = transition_table(f, t, max(max(x), max(to.x)) + 1)
        lam_to = _lambda_weight(tab, np.array([to.y]))[0] if to.N else 1.0
        lhs = float(km_batch(tab, np.array([x]), np.array([to.x]))[0]) * lam_to
        rhs = 0.0
        for y in interlacing_rows(x):
            st = TwoLevelState(y, x)
            w = _lambda_weight(tab, np.array([y]))[0] if to.N else 1.0
            rhs += w * float(_block_batch(tab, st, np.array([to.y], dtype=int), np.array([to.x]))[0])
        return Residual(abs(lhs - rhs), 0.0)
    raise ValueError(f"unknown side {side!r}")


def total_mass_U(f: RateField, t: float, frm: TwoLevelState, cutoff: int) -> float:
    """``sum_{(y',x')} U[frm, (y',x')]`` over targets with coordinates ``<= cutoff``."""
    tab = transition_table(f, t, cutoff + 1)
    total = 0.0
    for yp in itertools.combinations(range(cutoff + 1), frm.N):
        Xp = uppers_over(yp, cutoff)
        Yp = np.repeat(np.array([yp], dtype=int).reshape(1, frm.N), len(Xp), axis=0)
        total += float(np.sum(_block_batch(tab, frm, Yp, Xp)))
    return total


def harmonic_bound_constant(f: RateField, N: int) -> tuple[float, int]:
    """``(C, d)`` with ``h_N(y) <= C * y_N^d`` on the chamber."""
    C = math.factorial(N)
    for i in range(N):
        C *= f.s ** (-i) / math.factorial(i)
    return C, N * (N - 1) // 2


def harmonicity_residual(
    f: RateField,
    t: float,
    x: Sequence[int],
    cutoff: int | None = None,
    max_tail: float = MAX_TAIL,
) -> Residual:
    """``|sum_y P^N(x, y) h_N(y) - h_N(x)|`` summed over ``y_N <= cutoff``."""
    x = check_chamber(x)
    N = len(x)
    mu = f.M * t
    C, d = harmonic_bound_constant(f, N)

    def tail_at(K: int) -> float:
        tot = 0.0
        for m in range(K + 1, K + 400):
            term = C * float(m) ** d * poisson_tail(mu, m - x[-1] - 1)
            tot += term
            if term < 1e-300 or (m > K + 20 and term < tot * 1e-17):
                break
        return tot

    if cutoff is None:
        cutoff = x[-1]
        while tail_at(cutoff) > DEFAULT_TAIL_TARGET:
            cutoff += 1
    tail = _checked_tail(tail_at(cutoff), max_tail)
    tab = transition_table(f, t, cutoff)
    Y = chamber_array(N, cutoff)
    Y = Y[np.all(Y >= np.array(x)[None, :], axis=1)]
    vals = km_batch(tab, np.repeat([x], len(Y), axis=0), Y) * harmonic_h_many(f, Y)
    return Residual(abs(float(np.sum(vals)) - harmonic_h(f, x)), tail)


def plancherel_law(f: RateField, t: float, N: int, cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """Points of ``W^N`` with coordinates ``<= cutoff`` and their ``P^N_t(Delta_N, .)`` masses."""
    tab = transition_table(f, t, cutoff)
    X = chamber_array(N, cutoff)
    delta = np.arange(N)
    dens = km_batch(tab, np.repeat(delta[None, :], len(X), axis=0), X)
    mass = harmonic_h_many(f, X) / harmonic_h(f, tuple(delta)) * dens
    return X, mass


def plancherel_consistency_residual(
    f: RateField,
    t: float,
    N: int,
    y: Sequence[int],
    cutoff: int | None = None,
    max_tail: float = MAX_TAIL,
) -> Residual:
    """``|(P^{N+1}(Delta, .) L)(y) - P^N(Delta, y)|`` with the top row summed up to ``cutoff``.

    The link weight is at most one and the top particle of level ``N+1`` moves
    only when one of the ``N+1`` right-edge clocks rings.
    """
    y = check_chamber(y)
    if len(y) != N:
        raise LengthMismatch("y must have length N")
    mu = (N + 1) * f.M * t
    if cutoff is None:
        cutoff = max(auto_cutoff(mu, N), max(y, default=0) + 1)
    tail = _checked_tail(poisson_tail(mu, cutoff - N), max_tail)
    tab = transition_table(f, t, cutoff)
    Xp = uppers_over(y, cutoff)
    delta = np.arange(N + 1)
    dens = km_batch(tab, np.repeat(delta[None, :], len(Xp), axis=0), Xp)
    # P^{N+1}(Delta, x) L(x, y) = h_N(y) Lambda(x, y) det / h_{N+1}(Delta)
    lam_y = _lambda_weight(tab, np.array([y]))[0] if N else 1.0
    hy = harmonic_h(f, y) if N else 1.0
    lhs = float(np.sum(dens)) * lam_y * hy / harmonic_h(f, tuple(delta))
    if N:
        rhs = hy / harmonic_h(f, tuple(range(N))) * float(
            km_batch(tab, np.array([np.arange(N)]), np.array([y]))[0]
        )
    else:
        rhs = 1.0
    return Residual(abs(lhs - rhs), tail)
