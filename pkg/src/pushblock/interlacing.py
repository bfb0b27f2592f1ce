"""Chambers, Gelfand-Tsetlin patterns, the links between levels and Gibbs measures.

Interlacing convention: ``y`` (length N) and ``x`` (length N+1) interlace,
written ``y < x``, when ``x_1 <= y_1 < x_2 <= ... <= y_N < x_{N+1}``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import LengthMismatch, NotAChamberPoint, SupportTooLarge
from .rates import RateField
from .spectral import check_chamber, harmonic_h

ChamberPoint = tuple[int, ...]

DEFAULT_PATTERN_CAP = 10**7


def densely_packed_row(n: int) -> ChamberPoint:
    return tuple(range(n))


def chamber_points(n: int, max_coord: int) -> Iterator[ChamberPoint]:
    """All points of the chamber of length ``n`` with coordinates ``<= max_coord``, lexicographically."""
    return itertools.combinations(range(max_coord + 1), n)


def interlaces(y: Sequence[int], x: Sequence[int]) -> bool:
    if len(x) != len(y) + 1:
        raise LengthMismatch(f"cannot interlace lengths {len(y)} and {len(x)}")
    return all(x[i] <= y[i] < x[i + 1] for i in range(len(y)))


def interlace_indicator_det(y: Sequence[int], x: Sequence[int]) -> float:
    """Determinant form of the interlacing indicator.

    The ``n x n`` matrix has entries ``-1(x_i > y_j)`` for ``j < n`` and a final
    column of ones standing for the virtual variable.
    """
    n = len(x)
    if n != len(y) + 1:
        raise LengthMismatch(f"cannot interlace lengths {len(y)} and {len(x)}")
    mat = np.ones((n, n))
    if n > 1:
        mat[:, :-1] = -(np.asarray(x)[:, None] > np.asarray(y)[None, :]).astype(float)
    return float(round(np.linalg.det(mat))) + 0.0


def interlacing_rows(x: Sequence[int]) -> Iterator[ChamberPoint]:
    """Every ``y`` with ``y < x``; ``y_i`` ranges over ``[x_i, x_{i+1} - 1]``."""
    return itertools.product(*(range(x[i], x[i + 1]) for i in range(len(x) - 1)))


def link_Lambda(f: RateField, x: Sequence[int], y: Sequence[int]) -> float:
    """``prod 1/lambda(y_i) * 1(y < x)``."""
    if not interlaces(y, x):
        return 0.0
    return float(np.prod(1.0 / np.array([f(v) for v in y]))) if y else 1.0


def link_L(f: RateField, x: Sequence[int], y: Sequence[int]) -> float:
    """Markov link ``(h_N(y)/h_{N+1}(x)) Lambda(x, y)`` from level N+1 down to level N."""
    lam = link_Lambda(f, x, y)
    if lam == 0.0:
        return 0.0
    return harmonic_h(f, y) / harmonic_h(f, x) * lam


class GTPattern:
    """A Gelfand-Tsetlin pattern; level ``k`` (1-based) holds ``k`` particles.

    Coordinates are stored contiguously, level 1 first, so level ``k`` lives
    at ``coords[k(k-1)/2 : k(k+1)/2]``.
    """

    __slots__ = ("coords", "N")

    def __init__(self, levels: Iterable[Sequence[int]], validate: bool = True):
        levels = [tuple(int(v) for v in lev) for lev in levels]
        self.N = len(levels)
        self.coords = tuple(itertools.chain.from_iterable(levels))
        if validate:
            self.validate(levels)

    @classmethod
    def from_flat(cls, coords: Sequence[int], validate: bool = True) -> "GTPattern":
        n = int(round((np.sqrt(8 * len(coords) + 1) - 1) / 2))
        if n * (n + 1) // 2 != len(coords):
            raise LengthMismatch(f"{len(coords)} coordinates do not form a triangular array")
        levels = [coords[k * (k - 1) // 2 : k * (k + 1) // 2] for k in range(1, n + 1)]
        return cls(levels, validate)

    @staticmethod
    def validate(levels: Sequence[Sequence[int]]) -> None:
        for k, lev in enumerate(levels, start=1):
            if len(lev) != k:
                raise LengthMismatch(f"level {k} has {len(lev)} particles")
            check_chamber(lev)
        for lo, hi in zip(levels, levels[1:]):
            if not interlaces(lo, hi):
                raise NotAChamberPoint(f"levels {lo} and {hi} do not interlace")

    def level(self, k: int) -> ChamberPoint:
        return self.coords[k * (k - 1) // 2 : k * (k + 1) // 2]

    @property
    def levels(self) -> list[ChamberPoint]:
        return [self.level(k) for k in range(1, self.N + 1)]

    def left_edge(self) -> ChamberPoint:
        return tuple(self.level(k)[0] for k in range(1, self.N + 1))

    def right_edge(self) -> ChamberPoint:
        return tuple(self.level(k)[-1] for k in range(1, self.N + 1))

    def to_json(self) -> str:
        return json.dumps([list(lev) for lev in self.levels])

    @classmethod
    def from_json(cls, text: str) -> "GTPattern":
        return cls(json.loads(text))

    def __eq__(self, other) -> bool:
        return isinstance(other, GTPattern) and self.coords == other.coords

    def __hash__(self) -> int:
        return hash(self.coords)

    def __repr__(self) -> str:
        return f"GTPattern({self.levels})"


def densely_packed(N: int) -> GTPattern:
    return GTPattern([densely_packed_row(k) for k in range(1, N + 1)])


def count_patterns(top: Sequence[int]) -> int:
    """Number of patterns with top row ``top`` (``h_N`` for unit rates)."""
    from .rates import homogeneous

    return int(round(harmonic_h(homogeneous(1.0), top)))


@dataclass(frozen=True)
class EvolvedGibbsMeasure:
    """A finite-support law on ``GT_N``: top-row law pushed down through the links."""

    N: int
    support: tuple[GTPattern, ...]
    weights: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.support):
            raise ValueError("support and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
            raise ValueError("weights must be non-negative and sum to 1")
        object.__setattr__(self, "weights", w)

    def marginal(self, levels: int) -> dict[tuple[int, ...], float]:
        """Law of the sub-pattern formed by levels ``1..levels`` (flat coordinate keys)."""
        out: dict[tuple[int, ...], float] = {}
        cut = levels * (levels + 1) // 2
        for pat, w in zip(self.support, self.weights):
            key = pat.coords[:cut]
            out[key] = out.get(key, 0.0) + float(w)
        return out

    def top_law(self) -> dict[ChamberPoint, float]:
        out: dict[ChamberPoint, float] = {}
        for pat, w in zip(self.support, self.weights):
            key = pat.level(self.N)
            out[key] = out.get(key, 0.0) + float(w)
        return out


def _patterns_below(f: RateField, top: ChamberPoint) -> Iterator[tuple[list[ChamberPoint], float]]:
    if len(top) == 1:
        yield [top], 1.0
        return
    for y in interlacing_rows(top):
        w = link_L(f, top, y)
        for levels, wb in _patterns_below(f, y):
            yield levels + [top], w * wb


def gibbs_measure(
    f: RateField,
    top: Mapping[Sequence[int], float],
    cap: int = DEFAULT_PATTERN_CAP,
) -> EvolvedGibbsMeasure:
    """Enumerate the Gibbs measure with top-row law ``top`` (finite support)."""
    tops = {tuple(int(v) for v in k): float(p) for k, p in top.items() if p > 0}
    if not tops:
        raise ValueError("top law has empty support")
    lengths = {len(k) for k in tops}
    if len(lengths) != 1:
        raise LengthMismatch("top-row points have different lengths")
    N = lengths.pop()
    for k in tops:
        check_chamber(k)
    total = sum(count_patterns(k) for k in tops)
    if total > cap:
        raise SupportTooLarge(f"{total} patterns exceed the cap of {cap}")
    support, weights = [], []
    for k, p in tops.items():
        for levels, w in _patterns_below(f, k):
            support.append(GTPattern(levels, validate=False))
            weights.append(p * w)
    weights = np.asarray(weights)
    weights = weights / weights.sum()
    return EvolvedGibbsMeasure(N, tuple(support), weights)


def point_mass(pattern: GTPattern) -> EvolvedGibbsMeasure:
    return EvolvedGibbsMeasure(pattern.N, (pattern,), np.ones(1))


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator for substream ``stream`` of ``seed``."""
    key = np.array([seed % 2**64, stream % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_gibbs(g: EvolvedGibbsMeasure, seed: int | np.random.Generator) -> GTPattern:
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    cdf = np.cumsum(g.weights)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return g.support[min(idx, len(g.support) - 1)]
