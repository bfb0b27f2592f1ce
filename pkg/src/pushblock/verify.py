"""Desk-scale verification report: every identity residual with its tolerance.

Each check compares an engine value with an independent oracle. ``corrupt``
perturbs ``lambda(0)`` of the field handed to the oracle side only, which
gives the harness a mutation test.
"""
from __future__ import annotations

import itertools

from .birth_chain import duality_residual, transition_density, transition_row_ode
from .config import RunConfig
from .dynamics import SimConfig, one_point_counts, simulate
from .kernel import (
    KernelContext,
    KernelPoint,
    biorthogonality_residual,
    convolution_residual,
    correlation_bruteforce,
    correlation_det,
    correlation_kernel,
    pushdown_residual,
)
from .rates import RateField, make_rate_field
from .semigroups import (
    harmonicity_residual,
    intertwining_residual_KM,
    intertwining_residual_U,
    plancherel_consistency_residual,
    total_mass_U,
    two_level_block_kernel,
    two_level_states,
)
from .stats import within_sigmas


def corrupted(f: RateField, eps: float) -> RateField:
    if eps == 0.0:
        return f
    prefix = list(f.prefix) or [f.tail]
    prefix[0] *= 1.0 + eps
    return make_rate_field(prefix, f.tail)


def _entry(name: str, value: float, tol: float, tail: float = 0.0, *, upper: bool = True) -> dict:
    value = float(value)
    ok = value < tol + tail if upper else value >= tol
    return {"name": name, "value": value, "tol": tol, "tail": float(tail), "pass": bool(ok)}


def run_checks(cfg: RunConfig, corrupt: float = 0.0) -> dict:
    f = cfg.rate_field()
    fo = corrupted(f, corrupt)
    t = cfg.t
    checks = []

    checks.append(_entry(
        "duality",
        max(duality_residual(f, t, x, y) for x in range(4) for y in range(x, 9)),
        1e-9,
    ))

    worst = 0.0
    for x in range(4):
        row = transition_row_ode(fo, t, x, x + 40)
        for y in range(x, x + 11):
            worst = max(worst, abs(transition_density(f, t, x, y) - row[y - x]))
    checks.append(_entry("oracle_triangle", worst, 1e-8))

    val, tail = 0.0, 0.0
    for x, y in [((0, 2), (1,)), ((0, 1, 3), (0, 2)), ((1, 2, 5), (1, 4))]:
        r = intertwining_residual_KM(f, t, len(y), x, y)
        val, tail = max(val, r.value), max(tail, r.tail)
    checks.append(_entry("intertwining_KM", val, 1e-7, tail))

    states = list(two_level_states(1, 5))
    val, tail = 0.0, 0.0
    for st in states[::4]:
        for yp in range(st.y[0], 6):
            r = intertwining_residual_U(f, t, "projection", frm=st, y_to=(yp,))
            val, tail = max(val, r.value), max(tail, r.tail)
    checks.append(_entry("intertwining_U_projection", val, 1e-7, tail))

    val = 0.0
    for x in [(0, 2), (1, 3)]:
        for to in states[::3]:
            val = max(val, intertwining_residual_U(f, t, "link", x_from=x, to=to).value)
    checks.append(_entry("intertwining_U_link", val, 1e-7))

    lo = min(two_level_block_kernel(f, t, a, b) for a in states[::5] for b in states)
    checks.append(_entry("positivity", lo, -1e-10, upper=False))
    mass = max(total_mass_U(f, t, st, 10) for st in states[::5])
    checks.append(_entry("substochasticity", mass, 1.0 + 1e-8))

    val, tail = 0.0, 0.0
    for x in [(0, 1), (0, 3), (1, 2, 4)]:
        r = harmonicity_residual(f, t, x)
        val, tail = max(val, r.value), max(tail, r.tail)
    checks.append(_entry("harmonicity", val, 1e-7, tail))

    val, tail = 0.0, 0.0
    for N, y in [(1, (0,)), (1, (2,)), (2, (0, 2)), (2, (1, 3))]:
        r = plancherel_consistency_residual(f, t, N, y)
        val, tail = max(val, r.value), max(tail, r.tail)
    checks.append(_entry("plancherel_consistency", val, 1e-7, tail))

    ctx = KernelContext(f, t, cfg.quadrature.build())
    val, tail = 0.0, 0.0
    for n in range(1, 5):
        for i, j in itertools.product(range(n), repeat=2):
            v, tl = biorthogonality_residual(ctx, n, i, j)
            val, tail = max(val, v), max(tail, tl)
    checks.append(_entry("biorthogonality", val, 1e-8, tail))
    val, tail = 0.0, 0.0
    for m in range(3):
        for y in range(4):
            v, tl = pushdown_residual(ctx, m, y)
            val, tail = max(val, v), max(tail, tl)
    checks.append(_entry("psi_pushdown", val, 1e-9, tail))
    val = max(convolution_residual(ctx, k, y, x) for k in range(1, 4) for y in range(4) for x in range(8))
    checks.append(_entry("phi_convolution", val, 1e-9))

    N = min(cfg.N, 3)
    pts = [KernelPoint(n, x) for n in range(1, N + 1) for x in range(6)]
    worst = 0.0
    for k in (1, 2):
        for combo in itertools.combinations(pts, k):
            worst = max(worst, abs(correlation_det(ctx, combo) - correlation_bruteforce(fo, t, N, combo)))
    checks.append(_entry("kernel_vs_bruteforce", worst, 1e-6))

    T = cfg.trajectories
    res = simulate(SimConfig(f, N, t, seed=cfg.seed, trajectories=T, threads=cfg.threads))
    octx = KernelContext(fo, t, cfg.quadrature.build())
    emp = one_point_counts(res, N, 8) / T
    hits, total = 0, 0
    for n in range(1, N + 1):
        for x in range(9):
            p = correlation_kernel(octx, (n, x), (n, x))
            hits += within_sigmas(emp[n - 1, x], p, T)
            total += 1
    checks.append(_entry("mc_vs_kernel", hits / total, 0.95, upper=False))

    return {
        "config": cfg.model_dump(mode="json"),
        "corrupt": corrupt,
        "checks": checks,
        "all_pass": all(c["pass"] for c in checks),
    }
