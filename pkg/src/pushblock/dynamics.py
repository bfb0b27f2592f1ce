"""Event-driven simulation of the push-block dynamics and its projections.

Every particle carries an exponential clock of rate ``lambda(position)``. The
engine draws the next ring from the total rate, picks the ringing particle
proportionally to its rate, then applies the move. Rings of blocked particles
are no-ops, so the total rate never needs a blocked/unblocked split.

Trajectory ``i`` of a run with seed ``s`` uses its own Philox stream keyed by
``(s, i)``, so results do not depend on how trajectories are spread over workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError
from .interlacing import EvolvedGibbsMeasure, GTPattern, make_rng, sample_gibbs
from .rates import RateField
from .semigroups import TwoLevelState

RECORDS = ("pattern", "left", "right", "two_level")
ENGINES = ("total_rate", "clocks")
_BATCH = 256


@dataclass(frozen=True)
class SimConfig:
    """One simulation run.

    ``initial`` is ``"dp"`` for the densely packed pattern, an
    :class:`EvolvedGibbsMeasure`, a :class:`GTPattern`, or (two-level mode) a
    :class:`TwoLevelState`. ``record`` selects the observable; ``"left"`` and
    ``"right"`` run the autonomous edge systems without the full array.
    """

    f: RateField
    N: int
    t_end: float
    initial: object = "dp"
    seed: int = 0
    trajectories: int = 1
    record: str = "pattern"
    engine: str = "total_rate"
    threads: int = 1

    def __post_init__(self) -> None:
        if self.t_end < 0:
            raise ConfigError("t_end must be non-negative")
        if self.trajectories < 1:
            raise ConfigError("need at least one trajectory")
        if self.N < 1:
            raise ConfigError("need at least one level")
        if self.record not in RECORDS:
            raise ConfigError(f"record must be one of {RECORDS}")
        if self.engine not in ENGINES:
            raise ConfigError(f"engine must be one of {ENGINES}")
        if self.record == "two_level" and not isinstance(self.initial, TwoLevelState):
            raise ConfigError("two-level runs need a TwoLevelState initial condition")


@dataclass
class SimResult:
    """Terminal states, one row per trajectory.

    ``states`` holds flattened coordinates: the full pattern level by level,
    an edge, or ``y`` followed by ``x`` in two-level mode. ``events`` counts
    clock rings. ``killed`` and ``kill_time`` are only meaningful in two-level
    mode, where the recorded state of a killed trajectory is the state at death.
    """

    states: np.ndarray
    events: np.ndarray
    killed: np.ndarray
    kill_time: np.ndarray
    record: str = "pattern"
    meta: dict = field(default_factory=dict)

    def patterns(self) -> list[GTPattern]:
        if self.record != "pattern":
            raise ValueError("only full-pattern runs hold GT patterns")
        return [GTPattern.from_flat(row) for row in self.states]

    def level(self, n: int) -> np.ndarray:
        """Columns of level ``n`` in a full-pattern run."""
        return self.states[:, n * (n - 1) // 2 : n * (n + 1) // 2]


# ----------------------------------------------------------------------------
# single-trajectory engines


class _Uniforms:
    """Buffered uniforms from a per-trajectory generator."""

    __slots__ = ("rng", "buf", "i")

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.buf = rng.random(_BATCH).tolist()
        self.i = 0

    def __call__(self) -> float:
        if self.i == _BATCH:
            self.buf = self.rng.random(_BATCH).tolist()
            self.i = 0
        u = self.buf[self.i]
        self.i += 1
        return u


def _rate_lookup(f: RateField) -> Callable[[int], float]:
    prefix, tail, cut = f.prefix, f.tail, len(f.prefix)

    def lam(x: int) -> float:
        return prefix[x] if x < cut else tail

    return lam


def _pattern_moves(N: int):
    """Per-particle (blocker index or -1, push chain) for the flat pattern layout."""
    idx = lambda n, k: n * (n - 1) // 2 + (k - 1)  # noqa: E731
    blockers, chains = [], []
    for n in range(1, N + 1):
        for k in range(1, n + 1):
            blockers.append(idx(n - 1, k) if k <= n - 1 else -1)
            chains.append([idx(m, k + m - n) for m in range(n + 1, N + 1)])
    return blockers, chains


def _apply_pattern(pos: list, i: int, blockers: list, chains: list) -> bool:
    """Move particle ``i`` if not blocked, then cascade pushes upward."""
    b = blockers[i]
    if b >= 0 and pos[b] == pos[i]:
        return False
    pos[i] += 1
    prev = pos[i]
    for j in chains[i]:
        if pos[j] == prev:
            pos[j] += 1
            prev = pos[j]
        else:
            break
    return True


def _apply_left(pos: list, i: int) -> bool:
    # left edge: z_n = X^n_1 with z_n <= z_{n-1}
    if i > 0 and pos[i] == pos[i - 1]:
        return False
    pos[i] += 1
    return True


def _apply_right(pos: list, i: int) -> bool:
    # right edge: r_n = X^n_n strictly increasing; jumps push the next particle
    pos[i] += 1
    for j in range(i + 1, len(pos)):
        if pos[j] == pos[j - 1]:
            pos[j] += 1
        else:
            break
    return True


def _two_level_mover(N: int):
    """Moves for the two-level state laid out as ``[y_1..y_N, x_1..x_{N+1}]``.

    Returns ``apply(pos, i) -> killed``.
    """

    def apply(pos: list, i: int) -> bool:
        if i < N:  # y_i: autonomous, pushes x_{i+1}
            pos[i] += 1
            xi = N + i + 1
            if pos[xi] == pos[i]:
                pos[xi] += 1
            return i + 1 < N and pos[i] == pos[i + 1]
        k = i - N  # x_{k+1}, blocked by y_{k+1}
        if k < N and pos[i] == pos[k]:
            return False
        pos[i] += 1
        return False

    return apply


def _run_total_rate(pos: list, lam, t_end: float, move, draw: _Uniforms, killing: bool):
    """Competing exponentials through one total rate; returns (events, kill time or nan)."""
    rates = [lam(p) for p in pos]
    total = math.fsum(rates)
    t = 0.0
    events = 0
    n = len(pos)
    while True:
        t -= math.log(1.0 - draw()) / total
        if t > t_end:
            return events, math.nan
        events += 1
        target = draw() * total
        i = 0
        acc = rates[0]
        while acc <= target and i < n - 1:
            i += 1
            acc += rates[i]
        if move(pos, i) and killing:
            return events, t
        # refresh rates of moved particles
        changed = False
        for j in range(n):
            r = lam(pos[j])
            if r != rates[j]:
                rates[j] = r
                changed = True
        if changed:
            total = math.fsum(rates)


def _run_clocks(pos: list, lam, t_end: float, move, draw: _Uniforms, killing: bool):
    """Independent clocks per particle, resampled whenever a particle's rate changes."""
    n = len(pos)
    rates = [lam(p) for p in pos]
    clocks = [-math.log(1.0 - draw()) / r for r in rates]
    events = 0
    while True:
        i = min(range(n), key=clocks.__getitem__)
        t = clocks[i]
        if t > t_end:
            return events, math.nan
        events += 1
        old = list(pos)
        res = move(pos, i)
        if killing and res:
            return events, t
        for j in range(n):
            if j == i or pos[j] != old[j]:
                rates[j] = lam(pos[j])
                clocks[j] = t - math.log(1.0 - draw()) / rates[j]


# ----------------------------------------------------------------------------
# batch drivers


def _initial_state(cfg: SimConfig, rng: np.random.Generator) -> list:
    init = cfg.initial
    if cfg.record == "two_level":
        return list(init.y) + list(init.x)
    if isinstance(init, str):
        if init != "dp":
            raise ConfigError(f"unknown initial condition {init!r}")
        pat = None
    elif isinstance(init, EvolvedGibbsMeasure):
        pat = sample_gibbs(init, rng)
    elif isinstance(init, GTPattern):
        pat = init
    else:
        raise ConfigError("unsupported initial condition")
    if pat is not None and pat.N != cfg.N:
        raise ConfigError("initial pattern has the wrong number of levels")
    if cfg.record == "left":
        return [0] * cfg.N if pat is None else list(pat.left_edge())
    if cfg.record == "right":
        return list(range(cfg.N)) if pat is None else list(pat.right_edge())
    if pat is None:
        return [k for n in range(1, cfg.N + 1) for k in range(n)]
    return list(pat.coords)


def _run_chunk(cfg: SimConfig, start: int, stop: int):
    lam = _rate_lookup(cfg.f)
    killing = cfg.record == "two_level"
    if cfg.record == "pattern":
        blockers, chains = _pattern_moves(cfg.N)
        move = lambda pos, i: _apply_pattern(pos, i, blockers, chains)  # noqa: E731
    elif cfg.record == "left":
        move = _apply_left
    elif cfg.record == "right":
        move = _apply_right
    else:
        move = _two_level_mover(cfg.N)
    engine = _run_total_rate if cfg.engine == "total_rate" else _run_clocks
    states, events, ktime = [], [], []
    for traj in range(start, stop):
        rng = make_rng(cfg.seed, traj)
        pos = _initial_state(cfg, rng)
        ev, tk = engine(pos, lam, cfg.t_end, move, _Uniforms(rng), killing)
        states.append(pos)
        events.append(ev)
        ktime.append(tk)
    return states, events, ktime


def simulate(cfg: SimConfig) -> SimResult:
    """Run ``cfg.trajectories`` independent trajectories up to ``cfg.t_end``."""
    T = cfg.trajectories
    threads = max(1, min(cfg.threads, os.cpu_count() or 1, T))
    if threads == 1:
        parts = [_run_chunk(cfg, 0, T)]
    else:
        bounds = np.linspace(0, T, 4 * threads + 1).astype(int)
        with ProcessPoolExecutor(max_workers=threads) as ex:
            futs = [ex.submit(_run_chunk, cfg, int(a), int(b)) for a, b in zip(bounds, bounds[1:]) if b > a]
            parts = [fu.result() for fu in futs]
    states = np.array([s for p in parts for s in p[0]], dtype=np.int64)
    events = np.array([e for p in parts for e in p[1]], dtype=np.int64)
    ktime = np.array([k for p in parts for k in p[2]], dtype=float)
    return SimResult(states, events, ~np.isnan(ktime), ktime, cfg.record)


def simulate_two_level(cfg: SimConfig) -> SimResult:
    if cfg.record != "two_level":
        raise ConfigError("simulate_two_level needs record='two_level'")
    return simulate(cfg)


def simulate_edges(cfg: SimConfig) -> SimResult:
    if cfg.record not in ("left", "right"):
        raise ConfigError("simulate_edges needs record 'left' or 'right'")
    return simulate(cfg)


def step_pattern(pattern: GTPattern, n: int, k: int) -> GTPattern:
    """Force the clock of particle ``X^n_k`` once and return the resulting pattern."""
    blockers, chains = _pattern_moves(pattern.N)
    pos = list(pattern.coords)
    _apply_pattern(pos, n * (n - 1) // 2 + (k - 1), blockers, chains)
    return GTPattern.from_flat(pos)


def empirical_law(rows: np.ndarray) -> dict[tuple[int, ...], float]:
    """Relative frequencies of the distinct rows of an integer array."""
    uniq, counts = np.unique(np.asarray(rows), axis=0, return_counts=True)
    n = counts.sum()
    return {tuple(int(v) for v in u): c / n for u, c in zip(uniq, counts)}


def one_point_counts(res: SimResult, N: int, x_max: int) -> np.ndarray:
    """``counts[n-1, x]``: number of trajectories with a level-``n`` particle at ``x``."""
    out = np.zeros((N, x_max + 1))
    for n in range(1, N + 1):
        lev = res.level(n)
        for x in range(x_max + 1):
            out[n - 1, x] = np.count_nonzero(np.any(lev == x, axis=1))
    return out


def occupied(res: SimResult, n: int, x: int) -> np.ndarray:
    return np.any(res.level(n) == x, axis=1)


def edge_from_patterns(res: SimResult, side: str) -> np.ndarray:
    N = int(round((math.sqrt(8 * res.states.shape[1] + 1) - 1) / 2))
    cols = [n * (n - 1) // 2 + (0 if side == "left" else n - 1) for n in range(1, N + 1)]
    return res.states[:, cols]


def pattern_rows(patterns: Sequence[GTPattern]) -> np.ndarray:
    return np.array([p.coords for p in patterns], dtype=np.int64)
