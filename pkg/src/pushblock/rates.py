"""Space-inhomogeneous jump rates.

A rate field is a finite prefix of positive rates followed by a constant tail,
so that the infimum ``s`` and supremum ``M`` are attained and checkable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonPositiveRate

# Two rates are treated as equal below this relative difference.
RATE_EQUALITY_RTOL = 1e-12


def rates_equal(a: float, b: float) -> bool:
    return abs(a - b) <= RATE_EQUALITY_RTOL * max(abs(a), abs(b))


@dataclass(frozen=True)
class RateField:
    """Rates ``lambda(x)`` on the non-negative integers.

    ``prefix[x]`` is the rate at site ``x < len(prefix)``; every later site
    has rate ``tail``.
    """

    prefix: tuple[float, ...]
    tail: float
    s: float = field(init=False)
    M: float = field(init=False)

    def __post_init__(self) -> None:
        prefix = tuple(float(r) for r in self.prefix)
        tail = float(self.tail)
        for r in prefix + (tail,):
            if not math.isfinite(r) or r <= 0.0:
                raise NonPositiveRate(f"rates must be positive and finite, got {r!r}")
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "tail", tail)
        object.__setattr__(self, "s", min(prefix + (tail,)))
        object.__setattr__(self, "M", max(prefix + (tail,)))

    @property
    def x_cut(self) -> int:
        return len(self.prefix)

    def __call__(self, x: int) -> float:
        return rate_at(self, x)

    def rates(self, lo: int, hi: int) -> np.ndarray:
        """Rates at sites ``lo..hi`` inclusive (empty if ``hi < lo``)."""
        if hi < lo:
            return np.empty(0)
        out = np.full(hi - lo + 1, self.tail)
        stop = min(hi + 1, self.x_cut)
        if lo < stop:
            out[: stop - lo] = self.prefix[lo:stop]
        return out

    def to_json(self) -> dict:
        return {"prefix": list(self.prefix), "tail": self.tail}

    @classmethod
    def from_json(cls, data: dict) -> "RateField":
        return make_rate_field(data.get("prefix", []), data["tail"])


def make_rate_field(prefix: Sequence[float], tail: float) -> RateField:
    try:
        return RateField(tuple(prefix), tail)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, NonPositiveRate):
            raise
        raise NonPositiveRate(str(exc)) from exc


def homogeneous(rate: float = 1.0) -> RateField:
    return RateField((), rate)


def rate_at(f: RateField, x: int) -> float:
    if x < 0:
        raise ValueError(f"site must be non-negative, got {x}")
    return f.prefix[x] if x < len(f.prefix) else f.tail
