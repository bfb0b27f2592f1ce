"""Goodness-of-fit helpers for Monte Carlo checks (thin wrappers over scipy)."""
from __future__ import annotations

from typing import Mapping

import numpy as np
from scipy.stats import chi2_contingency, chisquare


def chi2_gof(counts: Mapping, probs: Mapping, min_expected: float = 5.0) -> float:
    """p-value of observed ``counts`` against model ``probs``.

    Categories with expected count below ``min_expected`` are pooled, as is
    all mass outside ``probs``.
    """
    n = sum(counts.values())
    keys = list(probs)
    exp = np.array([n * probs[k] for k in keys])
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    small = exp < min_expected
    obs_rest = n - obs.sum() + obs[small].sum()
    exp_rest = n - exp.sum() + exp[small].sum()
    obs, exp = list(obs[~small]), list(exp[~small])
    if exp_rest > 1e-9 * n:
        obs.append(obs_rest)
        exp.append(exp_rest)
    elif obs_rest > 0:
        return 0.0
    if len(exp) < 2:
        return 1.0
    exp = np.array(exp) * (n / np.sum(exp))
    return float(chisquare(obs, exp).pvalue)


def chi2_two_sample(a: np.ndarray, b: np.ndarray, min_expected: float = 5.0) -> float:
    """p-value that two samples of integer rows share one law (contingency test).

    Rows seen fewer than ``2 * min_expected`` times in total are pooled.
    """
    a, b = np.asarray(a), np.asarray(b)
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    uniq, inv = np.unique(np.vstack([a, b]), axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    ca = np.bincount(inv[: len(a)], minlength=len(uniq))
    cb = np.bincount(inv[len(a) :], minlength=len(uniq))
    total = ca + cb
    keep = total >= 2 * min_expected
    table = np.array([ca[keep], cb[keep]])
    rest = np.array([[ca[~keep].sum()], [cb[~keep].sum()]])
    if rest.sum() > 0:
        table = np.hstack([table, rest])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    return float(chi2_contingency(table, correction=False).pvalue)


def within_sigmas(emp: float, p: float, n: int, k: float = 4.0) -> bool:
    """``|emp - p| <= k`` binomial standard errors, with a floor of one count."""
    se = np.sqrt(max(p * (1 - p), 1.0 / n) / n)
    return bool(abs(emp - p) <= k * se)
