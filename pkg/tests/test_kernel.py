from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from pushblock.birth_chain import transition_density, transition_row_ode
from pushblock.errors import ConfigError, NoConvergence, SupportTooLarge
from pushblock.kernel import (
    GibbsLevels,
    KernelContext,
    KernelPoint,
    biorthogonality_residual,
    convolution_residual,
    correlation_bruteforce,
    correlation_det,
    correlation_kernel,
    phi_cap,
    phi_conv,
    phi_virt,
    psi_bi,
    psi_m,
    pushdown_residual,
    span_ranks,
)
from pushblock.rates import homogeneous, make_rate_field
from pushblock.spectral import QuadratureSettings

UNIT = homogeneous(1.0)
KERNEL_FIELDS = [UNIT, make_rate_field([1, 2], 1.0), make_rate_field([1, 3, 2], 1.0)]


def forward_powers(f, t, m, x_max):
    """Oracle for Psi_m, m >= 0: (-1)^m (P_t L^m)(0, .) with the forward action of L."""
    mu = transition_row_ode(f, t, 0, x_max + 40)[: x_max + m + 2]
    lam = f.rates(0, len(mu) - 1)
    for _ in range(m):
        new = -lam * mu
        new[1:] += lam[:-1] * mu[:-1]
        mu = -new
    return mu[: x_max + 1]


def test_kernel_point_validation():
    with pytest.raises(ConfigError):
        KernelPoint(0, 1)
    with pytest.raises(ConfigError):
        KernelPoint(1, -1)


@pytest.mark.parametrize("f", KERNEL_FIELDS + [make_rate_field([0.5, 2.5, 1.5, 0.8], 1.2)])
def test_psi_zero_power_is_transition_density(f):
    ctx = KernelContext(f, 0.6)
    for n in (1, 3):
        for x in range(10):
            assert psi_bi(ctx, n, n, x) == pytest.approx(transition_density(f, 0.6, 0, x), abs=1e-13)


@pytest.mark.parametrize("f", KERNEL_FIELDS)
def test_psi_positive_powers_against_forward_equation(f):
    ctx = KernelContext(f, 0.45)
    for m in range(4):
        oracle = forward_powers(f, 0.45, m, 10)
        for x in range(11):
            assert psi_m(ctx, m, x) == pytest.approx(oracle[x], abs=1e-9)


@pytest.mark.parametrize("f", KERNEL_FIELDS)
def test_psi_minus_one_is_scaled_survival(f):
    ctx = KernelContext(f, 0.8)
    for y in range(8):
        above = 1 - sum(transition_density(f, 0.8, 0, z) for z in range(y + 1))
        assert psi_m(ctx, -1, y) == pytest.approx(-above / f(y), abs=1e-12)


def test_psi_single_pole():
    t = 0.7
    ctx = KernelContext(UNIT, t)
    quad = KernelContext(UNIT, t, method="quadrature")
    assert psi_bi(ctx, 2, 1, 0) == pytest.approx(math.exp(-t), abs=1e-14)
    assert psi_bi(quad, 2, 1, 0) == pytest.approx(math.exp(-t), abs=1e-12)


def test_psi_at_zero_time_residue_vs_quadrature():
    f = make_rate_field([1, 3, 2, 0.5], 1.5)
    res, quad = KernelContext(f, 0.0), KernelContext(f, 0.0, method="quadrature")
    for x in range(4):
        for m in range(x + 1, x + 4):
            assert abs(psi_m(res, m, x) - psi_m(quad, m, x)) < 1e-10


def test_phi_conv_examples():
    f = make_rate_field([1, 3, 2], 1.0)
    ctx = KernelContext(f, 0.5)
    for y in range(5):
        for x in range(8):
            assert phi_conv(ctx, 1, y, x) == pytest.approx(-(x > y) / f(y))
    # k=2 against the direct convolution
    u = KernelContext(UNIT, 0.5)
    direct = sum(phi_conv(u, 1, 0, z) * phi_conv(u, 1, z, 2) for z in range(1, 2))
    assert phi_conv(u, 2, 0, 2) == pytest.approx(direct)
    assert phi_conv(u, 1, 3, 0) == 0.0


def test_phi_conv_exact_vs_contour():
    f = make_rate_field([1, 3, 2, 0.5], 1.5)
    ctx = KernelContext(f, 0.3)
    for k, y, x in itertools.product(range(1, 4), range(5), range(9)):
        assert abs(phi_conv(ctx, k, y, x) - phi_conv(ctx, k, y, x, method="contour")) < 1e-11


def test_phi_virt_examples():
    ctx = KernelContext(UNIT, 0.3)
    assert all(phi_virt(ctx, 1, x) == 1 for x in range(6))
    assert phi_virt(ctx, 2, 3) == pytest.approx(-3)
    assert phi_virt(ctx, 6, 3) == 0.0


def test_phi_cap_examples():
    f = make_rate_field([1, 3, 2], 1.0)
    ctx = KernelContext(f, 0.8)
    assert all(phi_cap(ctx, 3, 0, x) == 1 for x in range(6))
    zero = KernelContext(f, 0.0)
    for j in range(3):
        for x in range(6):
            assert phi_cap(zero, 3, j, x) == pytest.approx(phi_virt(zero, j + 1, x))
    assert phi_cap(KernelContext(UNIT, 1.0), 2, 1, 1) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        phi_cap(ctx, 2, 2, 0)


def test_taylor_order_limit():
    ctx = KernelContext(UNIT, 0.5, taylor_order=2)
    with pytest.raises(NoConvergence):
        phi_cap(ctx, 4, 3, 1)


@pytest.mark.parametrize("f", KERNEL_FIELDS)
def test_kernel_diagonal_level_one(f):
    ctx = KernelContext(f, 0.5)
    for x in range(8):
        assert correlation_kernel(ctx, (1, x), (1, x)) == pytest.approx(transition_density(f, 0.5, 0, x), abs=1e-13)


def test_kernel_at_time_zero_is_packed():
    ctx = KernelContext(make_rate_field([1, 3, 2], 1.0), 0.0)
    for n in range(1, 5):
        for x in range(7):
            assert correlation_kernel(ctx, (n, x), (n, x)) == pytest.approx(float(x <= n - 1), abs=1e-12)


def test_kernel_single_vs_double_quadrature():
    f = make_rate_field([1, 3, 2], 1.0)
    ctx = KernelContext(f, 0.5, QuadratureSettings(nodes=64, cap=4096, tol=1e-13))
    for z1, z2 in [((1, 2), (1, 2)), ((2, 1), (3, 4)), ((3, 5), (1, 0)), ((2, 3), (2, 1))]:
        assert correlation_kernel(ctx, z1, z2) == pytest.approx(correlation_kernel(ctx, z1, z2, mode="double"), abs=1e-11)


def test_correlation_det_rejects_duplicates():
    ctx = KernelContext(UNIT, 0.5)
    assert correlation_det(ctx, [(2, 1)]) == correlation_kernel(ctx, (2, 1), (2, 1))
    with pytest.raises(ConfigError):
        correlation_det(ctx, [(2, 1), (2, 1)])


def test_det_vs_bruteforce_two_levels():
    f = make_rate_field([1, 2, 1], 1.0)
    ctx = KernelContext(f, 0.5)
    pts = [KernelPoint(n, x) for n in (1, 2) for x in range(6)]
    for k in (1, 2, 3):
        for combo in itertools.combinations(pts, k):
            assert abs(correlation_det(ctx, combo) - correlation_bruteforce(f, 0.5, 2, combo)) < 1e-8


@pytest.mark.parametrize("f", KERNEL_FIELDS)
@pytest.mark.parametrize("t", [0.2, 0.5])
def test_main_theorem_small(f, t):
    ctx = KernelContext(f, t)
    pts = [KernelPoint(n, x) for n in (1, 2, 3) for x in range(0, 8, 2)]
    for k in (1, 2, 3):
        for combo in itertools.combinations(pts, k):
            val = correlation_det(ctx, combo)
            assert -1e-8 <= val <= 1 + 1e-8
            assert abs(val - correlation_bruteforce(f, t, 3, combo)) < 1e-6


def test_bruteforce_examples():
    f = make_rate_field([1, 3, 2], 1.0)
    zero = GibbsLevels(f, 0.0, 3)
    for n in (1, 2, 3):
        for x in range(6):
            assert zero.rho([(n, x)]) == pytest.approx(float(x <= n - 1))
    g = GibbsLevels(f, 0.5, 3)
    for x in range(8):
        assert g.rho([(1, x)]) == pytest.approx(transition_density(f, 0.5, 0, x), abs=1e-12)
    for n in (1, 2, 3):
        assert sum(g.rho([(n, x)]) for x in range(g.cutoff + 1)) == pytest.approx(n, abs=1e-9)
    assert g.tail < 1e-10


def test_bruteforce_level_laws_are_plancherel():
    from pushblock.semigroups import plancherel_law

    f = make_rate_field([1, 3, 2], 1.0)
    g = GibbsLevels(f, 0.5, 3)
    X, law = plancherel_law(f, 0.5, 2, g.cutoff)
    assert np.allclose(g.level_law(2), law, atol=1e-9)


def test_bruteforce_support_cap():
    with pytest.raises(SupportTooLarge):
        GibbsLevels(UNIT, 0.5, 3, cutoff=40, cap=100)


def test_biorthogonality_examples():
    assert biorthogonality_residual(KernelContext(UNIT, 0.5), 1, 0, 0)[0] < 1e-12
    r, tail = biorthogonality_residual(KernelContext(UNIT, 0.5), 2, 0, 1)
    assert r < 1e-8 + tail
    r, tail = biorthogonality_residual(KernelContext(make_rate_field([1, 2], 1.0), 0.3), 3, 2, 2)
    assert r < 1e-8 + tail


@pytest.mark.parametrize("f", KERNEL_FIELDS)
def test_biorthogonality_all_indices(f):
    ctx = KernelContext(f, 0.5)
    for n in range(1, 5):
        for i, j in itertools.product(range(n), repeat=2):
            r, tail = biorthogonality_residual(ctx, n, i, j)
            assert r < 1e-8 + tail


def test_pushdown_and_convolution():
    f = make_rate_field([1, 3, 2], 1.0)
    ctx = KernelContext(f, 0.5)
    for m in range(4):
        for y in range(5):
            r, tail = pushdown_residual(ctx, m, y)
            assert r < 1e-9 + tail
    for k, y, x in itertools.product(range(1, 4), range(5), range(10)):
        assert convolution_residual(ctx, k, y, x) < 1e-9


def test_span_ranks():
    ctx = KernelContext(make_rate_field([1, 3, 2], 1.0), 0.5)
    for n in range(1, 5):
        sites = list(range(0, 2 * n, 2))
        a, b = span_ranks(ctx, n, sites)
        assert a == b == n
