from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy.linalg import expm

from pushblock.birth_chain import transition_density
from pushblock.errors import LengthMismatch, NotAChamberPoint, TruncationTooTight
from pushblock.rates import homogeneous, make_rate_field
from pushblock.semigroups import (
    TwoLevelState,
    chamber_array,
    doob_km_density,
    harmonicity_residual,
    intertwining_residual_KM,
    intertwining_residual_U,
    km_density,
    plancherel_consistency_residual,
    total_mass_U,
    two_level_block_kernel,
    two_level_states,
)
from pushblock.spectral import harmonic_h

UNIT = homogeneous(1.0)
MIXED = make_rate_field([1, 3, 2], 1.0)


def killed_generator_expm(f, t, N, K):
    """Oracle: expm of the two-level generator with killing, on states with coordinates <= K."""
    states = list(two_level_states(N, K))
    idx = {(s.y, s.x): i for i, s in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        y, x = list(s.y), list(s.x)
        for k in range(N + 1):
            if k < N and x[k] == y[k]:
                continue
            Q[i, i] -= f(x[k])
            nx = x.copy()
            nx[k] += 1
            j = idx.get((tuple(y), tuple(nx)))
            if j is not None:
                Q[i, j] += f(x[k])
        for k in range(N):
            Q[i, i] -= f(y[k])
            ny, nx = y.copy(), x.copy()
            ny[k] += 1
            if ny[k] == nx[k + 1]:
                nx[k + 1] += 1
            if k < N - 1 and ny[k] == ny[k + 1]:
                continue
            j = idx.get((tuple(ny), tuple(nx)))
            if j is not None:
                Q[i, j] += f(y[k])
    return states, expm(t * Q)


def test_state_validation():
    TwoLevelState((1,), (0, 3))
    with pytest.raises(NotAChamberPoint):
        TwoLevelState((3,), (0, 3))
    with pytest.raises(LengthMismatch):
        TwoLevelState((1,), (0,))


def test_km_identity_at_zero():
    assert km_density(MIXED, 0.0, (0, 2), (0, 2)) == pytest.approx(1.0)
    assert km_density(MIXED, 0.0, (0, 2), (1, 2)) == 0.0


def test_km_single_particle():
    assert km_density(MIXED, 0.4, (1,), (3,)) == pytest.approx(transition_density(MIXED, 0.4, 1, 3), rel=1e-15)


def test_km_two_poisson():
    # P(1, 0) = 0 for a pure-birth chain, so the determinant is the diagonal product
    expected = math.exp(-0.5) * math.exp(-0.5)
    assert km_density(UNIT, 0.5, (0, 1), (0, 1)) == pytest.approx(expected, abs=1e-15)
    expected = math.exp(-1.0) * (0.5 * 0.5 - 0.125)
    assert km_density(UNIT, 0.5, (0, 1), (1, 2)) == pytest.approx(expected, abs=1e-15)


def test_doob_examples():
    assert doob_km_density(MIXED, 0.3, (2,), (4,)) == pytest.approx(transition_density(MIXED, 0.3, 2, 4), rel=1e-15)
    assert doob_km_density(MIXED, 0.0, (0, 3), (0, 3)) == pytest.approx(1.0)
    x = (0, 2)
    assert doob_km_density(MIXED, 0.7, x, (1, 4)) == pytest.approx(
        harmonic_h(MIXED, (1, 4)) / harmonic_h(MIXED, x) * km_density(MIXED, 0.7, x, (1, 4))
    )


def test_doob_row_sum():
    total = sum(doob_km_density(UNIT, 0.4, (0, 1), y) for y in itertools.combinations(range(31), 2))
    assert total == pytest.approx(1.0, abs=1e-6)


def test_block_kernel_identity_at_zero():
    states = list(two_level_states(1, 4)) + list(two_level_states(2, 4))[:20]
    for a in states:
        for b in states:
            if a.N == b.N:
                assert two_level_block_kernel(MIXED, 0.0, a, b) == pytest.approx(float(a == b), abs=1e-14)


@pytest.mark.parametrize("N, K, f", [(1, 8, MIXED), (2, 6, MIXED), (1, 8, make_rate_field([2, 1], 1.5))])
def test_block_kernel_is_killed_transition_density(N, K, f):
    t = 0.4
    states, E = killed_generator_expm(f, t, N, K)
    start = 0
    for j, b in enumerate(states):
        if max(b.x) <= K - 3:
            assert abs(E[start, j] - two_level_block_kernel(f, t, states[start], b)) < 1e-12


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_block_kernel_positive_and_substochastic(t):
    states = list(two_level_states(1, 6))
    for a in states:
        for b in states:
            assert two_level_block_kernel(UNIT, t, a, b) >= -1e-10
    for a in states[::3]:
        assert total_mass_U(UNIT, t, a, 14) <= 1 + 1e-8


def test_total_mass_small():
    st = TwoLevelState((1,), (0, 3))
    mass = total_mass_U(UNIT, 0.3, st, 12)
    assert 0.99 < mass <= 1 + 1e-8


def test_marginalization_to_km():
    st = TwoLevelState((1,), (0, 3))
    for yp in range(1, 6):
        r = intertwining_residual_U(UNIT, 0.4, "projection", frm=st, y_to=(yp,))
        assert r.value < 1e-9


def test_survival_equals_total_mass_at_N2():
    st = TwoLevelState((0, 1), (0, 1, 2))
    mass = total_mass_U(MIXED, 0.3, st, 16)
    survival = sum(km_density(MIXED, 0.3, st.y, y) for y in itertools.combinations(range(17), 2))
    assert mass == pytest.approx(survival, abs=1e-9)


def test_km_intertwining_examples():
    assert intertwining_residual_KM(UNIT, 0.0, 1, (0, 2), (1,)).value == 0.0
    r = intertwining_residual_KM(UNIT, 0.5, 1, (0, 2), (1,))
    assert r.ok(1e-7)
    rng = np.random.default_rng(1)
    for _ in range(5):
        x = tuple(sorted(rng.choice(7, 3, replace=False).tolist()))
        y = tuple(sorted(rng.choice(7, 2, replace=False).tolist()))
        assert intertwining_residual_KM(MIXED, 0.3, 2, x, y).ok(1e-7)


def test_km_intertwining_tight_cutoff():
    with pytest.raises(TruncationTooTight):
        intertwining_residual_KM(UNIT, 0.5, 1, (0, 2), (1,), cutoff=4)


def test_u_intertwinings():
    st = TwoLevelState((2,), (1, 4))
    assert intertwining_residual_U(UNIT, 0.0, "projection", frm=st, y_to=(2,)).value < 1e-15
    rng = np.random.default_rng(4)
    states = list(two_level_states(1, 6))
    for _ in range(6):
        a = states[int(rng.integers(len(states)))]
        yp = a.y[0] + int(rng.integers(0, 4))
        assert intertwining_residual_U(UNIT, 0.4, "projection", frm=a, y_to=(yp,)).ok(1e-7)
    f = make_rate_field([2, 1], 1.0)
    for to in states[::4]:
        assert intertwining_residual_U(f, 0.4, "link", x_from=(0, 2), to=to).value < 1e-7
        assert intertwining_residual_U(f, 0.0, "link", x_from=(0, 2), to=to).value < 1e-15
    with pytest.raises(ValueError):
        intertwining_residual_U(f, 0.4, "sideways")


@pytest.mark.parametrize("t", [0.1, 0.5])
def test_harmonicity(t):
    for x in [(0, 1), (1, 4), (0, 2, 3)]:
        assert harmonicity_residual(MIXED, t, x).ok(1e-7)


def test_plancherel_consistency():
    assert plancherel_consistency_residual(UNIT, 0.0, 1, (0,)).value < 1e-15
    assert plancherel_consistency_residual(UNIT, 0.5, 1, (2,)).ok(1e-7)
    assert plancherel_consistency_residual(make_rate_field([1, 2, 1], 1), 0.3, 2, (0, 2)).ok(1e-7)


def test_chamber_array_lexicographic():
    arr = chamber_array(2, 3)
    assert arr.tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]
