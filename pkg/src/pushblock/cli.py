"""Command line entry point.

Exit codes: 0 success, 1 verification checks failed, 2 configuration or
validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .birth_chain import default_x_max, transition_density, transition_row_ode
from .config import DESK_SCALE, RunConfig, load_config, top_measure
from .dynamics import SimConfig, simulate
from .errors import ConfigError, NumericalError
from .interlacing import make_rng, sample_gibbs
from .kernel import KernelContext, KernelPoint, correlation_det, correlation_kernel

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_transition(cfg: RunConfig, out: str | None) -> int:
    f, t = cfg.rate_field(), cfg.t
    settings = cfg.quadrature.build()
    rows = []
    for x in cfg.starts:
        x_max = cfg.cutoffs.x_max if cfg.cutoffs.x_max is not None else default_x_max(f, t, x)
        if cfg.method == "ode":
            dens = transition_row_ode(f, t, x, max(x_max, default_x_max(f, t, x)))[: x_max - x + 1]
        else:
            dens = [transition_density(f, t, x, y, method=cfg.method, settings=settings) for y in range(x, x_max + 1)]
        rows += [(x, x + i, fmt(d)) for i, d in enumerate(dens) if d != 0.0]
    _write(_csv(["x", "y", "density"], rows), out)
    return EXIT_OK


def _context(cfg: RunConfig) -> KernelContext:
    method = cfg.method if cfg.method != "ode" else "auto"
    return KernelContext(cfg.rate_field(), cfg.t, cfg.quadrature.build(), method)


def cmd_kernel(cfg: RunConfig, out: str | None) -> int:
    ctx = _context(cfg)
    pts = cfg.kernel_points()
    if not pts:
        raise ConfigError("kernel needs at least one point")
    rows = [
        (a.n, a.x, b.n, b.x, fmt(correlation_kernel(ctx, a, b, mode=cfg.kernel_mode)))
        for a in pts
        for b in pts
    ]
    _write(_csv(["n1", "x1", "n2", "x2", "K"], rows), out)
    return EXIT_OK


def cmd_correlate(cfg: RunConfig, out: str | None) -> int:
    ctx = _context(cfg)
    sets = cfg.point_sets if cfg.point_sets is not None else [cfg.points]
    rows = []
    for s in sets:
        pts = [KernelPoint(n, x) for n, x in s]
        if len(set(pts)) != len(pts):
            raise ConfigError(f"duplicate points in {s}")
        label = ";".join(f"{p.n}:{p.x}" for p in pts)
        rows.append((len(pts), label, fmt(correlation_det(ctx, pts))))
    _write(_csv(["k", "points", "value"], rows), out)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: str | None) -> int:
    f = cfg.rate_field()
    sim = SimConfig(
        f,
        cfg.N,
        cfg.t,
        initial=cfg.initial_condition(f),
        seed=cfg.seed,
        trajectories=cfg.trajectories,
        record=cfg.record,
        engine=cfg.engine,
        threads=cfg.threads,
    )
    res = simulate(sim)
    ncol = res.states.shape[1]
    rows = [
        [i, int(k), *row.tolist()]
        for i, (k, row) in enumerate(zip(res.killed, res.states))
    ]
    _write(_csv(["trajectory", "killed", *[f"c{j}" for j in range(ncol)]], rows), out)
    hist = []
    for j in range(ncol):
        vals, counts = np.unique(res.states[:, j], return_counts=True)
        hist.append({str(int(v)): int(c) for v, c in zip(vals, counts)})
    summary = {
        "trajectories": cfg.trajectories,
        "record": cfg.record,
        "means": [float(m) for m in res.states.mean(axis=0)],
        "histograms": hist,
        "mean_events": float(res.events.mean()),
        "killed_fraction": float(res.killed.mean()),
    }
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stderr.write(text)
    else:
        Path(str(out) + ".summary.json").write_text(text, encoding="utf-8")
    return EXIT_OK


def cmd_gibbs_sample(cfg: RunConfig, out: str | None) -> int:
    if not cfg.top:
        raise ConfigError("gibbs-sample needs a 'top' law")
    g = top_measure(cfg.rate_field(), cfg.top, cfg.cutoffs.pattern_cap)
    draws = [sample_gibbs(g, make_rng(cfg.seed, i)).levels for i in range(cfg.samples)]
    _write(json.dumps([[list(lev) for lev in d] for d in draws]) + "\n", out)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: str | None, corrupt: float = 0.0) -> int:
    from .verify import run_checks

    report = run_checks(cfg, corrupt)
    _write(json.dumps(report, indent=2) + "\n", out)
    return EXIT_OK if report["all_pass"] else EXIT_FAILED


COMMANDS = {
    "transition": cmd_transition,
    "kernel": cmd_kernel,
    "correlate": cmd_correlate,
    "simulate": cmd_simulate,
    "gibbs-sample": cmd_gibbs_sample,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pushblock", description="Push-block dynamics on interlacing arrays.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output file (default: stdout)")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--threads", type=int, help="worker processes")
        if name == "verify":
            sp.add_argument("--corrupt-rate", type=float, default=0.0, help=argparse.SUPPRESS)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        default = DESK_SCALE if args.command == "verify" else None
        cfg = load_config(args.config, {"seed": args.seed, "threads": args.threads}, default)
        if args.command == "verify":
            return cmd_verify(cfg, args.out, args.corrupt_rate)
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
