"""Regression metrics and the Mann-Whitney U rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Coefficient of determination, 1 - SS_res/SS_tot (unbounded below)."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or len(y_true) < 2:
        raise ValueError("r2 needs two equal 1-D arrays of length >= 2")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot <= 0:
        raise ValueError("r2 is undefined for a constant y_true")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError("shape mismatch")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def overall_score(per_target) -> float:
    """Arithmetic mean of the per-target scores."""
    values = np.asarray(per_target, dtype=np.float64)
    if values.shape != (3,):
        raise ValueError(f"expected 3 per-target values, got shape {values.shape}")
    return float(values.mean())


@dataclass(frozen=True)
class ComparisonResult:
    u: float
    p_value: float
    n: int
    m: int
    method: str  # "exact" | "normal"


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..N with ties assigned the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _u_counts(n: int, m: int) -> np.ndarray:
    """counts[u] = number of rank arrangements of n vs m with statistic u.

    Classic recurrence f(n, m, u) = f(n-1, m, u-m) + f(n, m-1, u).  Counts
    stay below 2^53 for min(n, m) <= 10, so float64 holds them exactly.
    """
    prev = [np.zeros(n * m + 1) for _ in range(m + 1)]
    for row in prev:
        row[0] = 1.0
    for ni in range(1, n + 1):
        cur = [np.zeros(n * m + 1) for _ in range(m + 1)]
        cur[0][0] = 1.0
        for mi in range(1, m + 1):
            cur[mi] = cur[mi - 1].copy()
            cur[mi][mi:] += prev[mi][: n * m + 1 - mi]
        prev = cur
    return prev[m]


def _exact_p(u: float, n: int, m: int) -> float:
    counts = _u_counts(n, m)
    total = counts.sum()
    k = int(round(u))
    lower = counts[: k + 1].sum() / total
    upper = counts[k:].sum() / total
    return min(1.0, 2.0 * min(lower, upper))


def mann_whitney_u(a, b) -> ComparisonResult:
    """Two-sided Mann-Whitney U test.

    U is computed from rank sums with midranks for ties.  The p-value is
    exact (full enumeration of the U distribution) when min(n, m) <= 10 and
    there are no ties; otherwise a normal approximation with tie and
    continuity corrections is used.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    n, m = len(a), len(b)
    combined = np.concatenate([a, b])
    ranks = _midranks(combined)
    r1 = float(ranks[:n].sum())
    u1 = r1 - n * (n + 1) / 2.0

    _, tie_counts = np.unique(combined, return_counts=True)
    has_ties = np.any(tie_counts > 1)

    if not has_ties and min(n, m) <= 10:
        return ComparisonResult(u1, _exact_p(u1, n, m), n, m, "exact")

    nm = n * m
    big_n = n + m
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    var = nm / 12.0 * ((big_n + 1) - tie_term / (big_n * (big_n - 1)))
    if var <= 0:
        return ComparisonResult(u1, 1.0, n, m, "normal")
    z = max(0.0, abs(u1 - nm / 2.0) - 0.5) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))  # two-sided
    return ComparisonResult(u1, min(1.0, max(p, np.nextafter(0, 1))), n, m, "normal")
