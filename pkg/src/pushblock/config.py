"""Run configuration: one JSON document, unknown keys rejected."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .interlacing import DEFAULT_PATTERN_CAP, EvolvedGibbsMeasure, GTPattern, gibbs_measure
from .kernel import KernelPoint
from .rates import RateField, make_rate_field
from .semigroups import TwoLevelState
from .spectral import QuadratureSettings


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RatesSpec(_Strict):
    prefix: list[float] = Field(default_factory=list)
    tail: float = 1.0

    def build(self) -> RateField:
        return make_rate_field(self.prefix, self.tail)


class QuadratureSpec(_Strict):
    nodes: int = Field(default=256, ge=8, multiple_of=2)
    tol: float = Field(default=1e-12, gt=0)
    cap: int = Field(default=16384, ge=8)

    def build(self) -> QuadratureSettings:
        try:
            return QuadratureSettings(nodes=self.nodes, cap=self.cap, tol=self.tol)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


class CutoffSpec(_Strict):
    x_max: Optional[int] = Field(default=None, ge=0)
    pattern_cap: int = Field(default=DEFAULT_PATTERN_CAP, ge=1)


class TopMass(_Strict):
    point: list[int]
    prob: float = Field(ge=0)


class TwoLevelSpec(_Strict):
    y: list[int]
    x: list[int]


class InitialSpec(_Strict):
    """Exactly one of ``pattern``, ``top`` or ``two_level``."""

    pattern: Optional[list[list[int]]] = None
    top: Optional[list[TopMass]] = None
    two_level: Optional[TwoLevelSpec] = None


class RunConfig(_Strict):
    rates: RatesSpec = Field(default_factory=RatesSpec)
    t: float = Field(default=0.0, ge=0)
    N: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    trajectories: int = Field(default=1000, ge=1)
    threads: int = Field(default=1, ge=1)
    points: list[tuple[int, int]] = Field(default_factory=list)
    point_sets: Optional[list[list[tuple[int, int]]]] = None
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    cutoffs: CutoffSpec = Field(default_factory=CutoffSpec)
    method: Literal["auto", "residue", "quadrature", "ode"] = "auto"
    starts: list[int] = Field(default_factory=lambda: [0])
    kernel_mode: Literal["single", "double"] = "single"
    record: Literal["pattern", "left", "right", "two_level"] = "pattern"
    engine: Literal["total_rate", "clocks"] = "total_rate"
    initial: Union[Literal["dp"], InitialSpec] = "dp"
    top: Optional[list[TopMass]] = None
    samples: int = Field(default=1, ge=1)

    @field_validator("starts")
    @classmethod
    def _non_negative(cls, v: list[int]) -> list[int]:
        if any(x < 0 for x in v):
            raise ValueError("start sites must be non-negative")
        return v

    def rate_field(self) -> RateField:
        return self.rates.build()

    def kernel_points(self) -> list[KernelPoint]:
        return [KernelPoint(n, x) for n, x in self.points]

    def initial_condition(self, f: RateField):
        init = self.initial
        if init == "dp":
            return "dp"
        given = [v is not None for v in (init.pattern, init.top, init.two_level)]
        if sum(given) != 1:
            raise ConfigError("initial needs exactly one of pattern, top, two_level")
        if init.pattern is not None:
            return GTPattern(init.pattern)
        if init.top is not None:
            return top_measure(f, init.top, self.cutoffs.pattern_cap)
        return TwoLevelState(tuple(init.two_level.y), tuple(init.two_level.x))


def top_measure(f: RateField, top: list[TopMass], cap: int) -> EvolvedGibbsMeasure:
    law = {tuple(m.point): m.prob for m in top}
    total = sum(law.values())
    if total <= 0:
        raise ConfigError("top law has no mass")
    return gibbs_measure(f, {k: v / total for k, v in law.items()}, cap)


DESK_SCALE = {"rates": {"prefix": [1, 2, 1]}, "t": 0.5, "N": 2, "trajectories": 4000}


def load_config(path: str | Path | None, overrides: dict | None = None, default: dict | None = None) -> RunConfig:
    """Parse the JSON document at ``path`` and apply flag overrides.

    Without ``path`` the document is ``default`` (or empty).
    """
    data: dict = dict(default or {})
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
