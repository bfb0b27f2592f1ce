from __future__ import annotations

import itertools

import numpy as np
import pytest

from pushblock.birth_chain import transition_density
from pushblock.dynamics import (
    SimConfig,
    _apply_pattern,
    _pattern_moves,
    edge_from_patterns,
    empirical_law,
    simulate,
    simulate_edges,
    simulate_two_level,
    step_pattern,
)
from pushblock.errors import ConfigError
from pushblock.interlacing import GTPattern, densely_packed, gibbs_measure, interlacing_rows, link_L
from pushblock.rates import homogeneous, make_rate_field
from pushblock.semigroups import (
    TwoLevelState,
    doob_km_density,
    total_mass_U,
    two_level_block_kernel,
)
from pushblock.stats import chi2_gof, chi2_two_sample, within_sigmas

UNIT = homogeneous(1.0)
ZIGZAG = make_rate_field([1, 2, 1, 3], 1.0)
MIXED = make_rate_field([1, 3, 2], 1.0)

# worked cascade: moving the second particle of level two pushes levels three and four
FIGURE = GTPattern([(2,), (1, 3), (1, 2, 4), (0, 2, 3, 5)])


def test_forced_push_cascade():
    after = step_pattern(FIGURE, 2, 2)
    assert after.levels == [(2,), (1, 4), (1, 2, 5), (0, 2, 3, 6)]


def test_forced_blocked_move():
    assert step_pattern(FIGURE, 3, 1) == FIGURE


def test_config_validation():
    with pytest.raises(ConfigError):
        SimConfig(UNIT, 2, 1.0, trajectories=0)
    with pytest.raises(ConfigError):
        SimConfig(UNIT, 2, -1.0)
    with pytest.raises(ConfigError):
        SimConfig(UNIT, 2, 1.0, record="two_level")
    with pytest.raises(ConfigError):
        simulate_edges(SimConfig(UNIT, 2, 1.0))


def test_interlacing_preserved_after_every_event():
    rng = np.random.default_rng(0)
    for N in range(1, 6):
        blockers, chains = _pattern_moves(N)
        for _ in range(200):
            pos = list(densely_packed(N).coords)
            for _ in range(60):
                _apply_pattern(pos, int(rng.integers(len(pos))), blockers, chains)
                GTPattern.from_flat(pos)


def test_terminal_patterns_valid():
    res = simulate(SimConfig(ZIGZAG, 5, 1.0, seed=3, trajectories=10_000))
    for row in res.states:
        GTPattern.from_flat(row.tolist())


def test_level_one_is_birth_chain():
    T = 100_000
    res = simulate(SimConfig(ZIGZAG, 1, 0.8, seed=11, trajectories=T))
    counts = {k: int(round(v * T)) for k, v in empirical_law(res.states).items()}
    probs = {(y,): transition_density(ZIGZAG, 0.8, 0, y) for y in range(30)}
    assert chi2_gof(counts, probs) > 0.001


@pytest.mark.parametrize("record", ["left", "right"])
def test_single_level_edges(record):
    T = 50_000
    res = simulate_edges(SimConfig(MIXED, 1, 0.6, seed=5, trajectories=T, record=record))
    counts = {k: int(round(v * T)) for k, v in empirical_law(res.states).items()}
    probs = {(y,): transition_density(MIXED, 0.6, 0, y) for y in range(30)}
    assert chi2_gof(counts, probs) > 0.001


@pytest.mark.parametrize("side", ["left", "right"])
def test_edges_match_array_projection(side):
    T = 30_000
    full = simulate(SimConfig(ZIGZAG, 3, 0.5, seed=21, trajectories=T))
    edge = simulate_edges(SimConfig(ZIGZAG, 3, 0.5, seed=22, trajectories=T, record=side))
    assert chi2_two_sample(edge_from_patterns(full, side), edge.states) > 0.001


def test_engines_agree():
    T = 30_000
    a = simulate(SimConfig(ZIGZAG, 2, 0.7, seed=1, trajectories=T))
    b = simulate(SimConfig(ZIGZAG, 2, 0.7, seed=2, trajectories=T, engine="clocks"))
    assert chi2_two_sample(a.states, b.states) > 0.001


def test_two_level_matches_block_kernel():
    T = 100_000
    start = TwoLevelState((1,), (0, 3))
    res = simulate_two_level(SimConfig(MIXED, 1, 0.3, initial=start, seed=8, trajectories=T, record="two_level"))
    assert not res.killed.any()
    law = empirical_law(res.states)
    for y in range(1, 6):
        for x1 in range(0, y + 1):
            for x2 in range(max(y + 1, 3), 6):
                p = two_level_block_kernel(MIXED, 0.3, start, TwoLevelState((y,), (x1, x2)))
                assert within_sigmas(law.get((y, x1, x2), 0.0), p, T)


def test_two_level_survival():
    T = 100_000
    start = TwoLevelState((0, 1), (0, 1, 2))
    res = simulate_two_level(SimConfig(MIXED, 2, 0.3, initial=start, seed=9, trajectories=T, record="two_level"))
    survival = 1 - res.killed.mean()
    assert within_sigmas(survival, total_mass_U(MIXED, 0.3, start, 16), T)
    killed = res.killed
    assert np.all(res.states[killed, 0] == res.states[killed, 1])
    assert np.all(res.kill_time[killed] <= 0.3)


def test_markov_functions_property():
    # y drawn from L(x, .) at time 0 gives y | X_T distributed as L(X_T, .)
    f, t, T = MIXED, 0.5, 60_000
    x0 = (0, 3)
    rows = []
    for i, y in enumerate(interlacing_rows(x0)):
        n = int(round(T * link_L(f, x0, y)))
        start = TwoLevelState(y, x0)
        rows.append(simulate(SimConfig(f, 1, t, initial=start, seed=100 + i, trajectories=n, record="two_level")).states)
    states = np.vstack(rows)
    stat_p = []
    for x in {tuple(r[1:]) for r in states}:
        sel = states[(states[:, 1] == x[0]) & (states[:, 2] == x[1])]
        if len(sel) < 500:
            continue
        counts = {(int(v),): int(c) for v, c in zip(*np.unique(sel[:, 0], return_counts=True))}
        probs = {y: link_L(f, x, y) for y in interlacing_rows(x)}
        stat_p.append(chi2_gof(counts, probs))
    assert len(stat_p) >= 3
    # Bonferroni over the tested conditionings
    assert min(stat_p) > 0.001 / len(stat_p)


def test_level_marginal_is_doob_law():
    T = 60_000
    res = simulate(SimConfig(ZIGZAG, 3, 0.5, seed=31, trajectories=T))
    counts = {k: int(round(v * T)) for k, v in empirical_law(res.level(2)).items()}
    probs = {y: doob_km_density(ZIGZAG, 0.5, (0, 1), y) for y in itertools.combinations(range(14), 2)}
    assert chi2_gof(counts, probs) > 0.001


def test_gibbs_initial_condition():
    g = gibbs_measure(MIXED, {(0, 2): 1.0})
    res = simulate(SimConfig(MIXED, 2, 0.0, initial=g, seed=4, trajectories=2000))
    tops = {tuple(r) for r in res.states[:, 1:]}
    assert tops == {(0, 2)}
    assert set(res.states[:, 0]) == {0, 1}


def test_deterministic_across_threads():
    cfg = SimConfig(ZIGZAG, 3, 0.5, seed=77, trajectories=3000)
    a = simulate(cfg)
    b = simulate(SimConfig(ZIGZAG, 3, 0.5, seed=77, trajectories=3000, threads=3))
    assert np.array_equal(a.states, b.states) and np.array_equal(a.events, b.events)
    c = simulate(SimConfig(ZIGZAG, 3, 0.5, seed=78, trajectories=3000))
    assert not np.array_equal(a.states, c.states)


def test_zero_horizon():
    res = simulate(SimConfig(ZIGZAG, 3, 0.0, trajectories=5))
    assert (res.states == np.array(densely_packed(3).coords)).all()
    assert res.events.sum() == 0
