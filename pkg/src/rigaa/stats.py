"""Suite metrics, the Mann-Whitney U test and Cliff's delta."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .diversity import suite_diversity
from .errors import SampleTooSmall, SuiteTooSmall

EXACT_LIMIT = 8  # both samples below this size -> exact permutation test
MAGNITUDES = ((0.147, "N"), (0.33, "S"), (0.474, "M"))
RESULT_FIELDS = ("metric", "A", "B", "p_value", "effect_size", "magnitude")


@dataclass(frozen=True)
class SuiteMetrics:
    f_av: float
    f_avs: float
    d_av: float
    best_f1: float


@dataclass(frozen=True)
class TestResult:
    p_value: float
    delta: float
    magnitude: str


def suite_metrics(suite: Sequence, th) -> SuiteMetrics:
    """Metrics of an evaluated suite (objects with ``fitness`` and ``chromosome``).

    ``f_av`` and ``f_avs`` coincide here because surrogate fitness is the
    only fitness available.
    """
    if len(suite) < 2:
        raise SuiteTooSmall(f"need at least 2 scenarios, got {len(suite)}")
    fit = np.abs([s.fitness for s in suite])
    f = float(np.mean(fit))
    return SuiteMetrics(f, f, suite_diversity([s.chromosome for s in suite], th), float(fit.max()))


def magnitude(delta: float) -> str:
    d = abs(delta)
    for cut, label in MAGNITUDES:
        if d < cut:
            return label
    return "L"


def cliffs_delta(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    diff = a[:, None] - b[None, :]
    return float((np.sum(diff > 0) - np.sum(diff < 0)) / (a.size * b.size))


def _u_statistic(a, b) -> float:
    ranks = _ranks(np.concatenate([a, b]))
    return float(ranks[: len(a)].sum() - len(a) * (len(a) + 1) / 2)


def _ranks(x):
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def mann_whitney_exact(a, b) -> float:
    """Two-sided p-value by enumerating every split of the pooled ranks."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n = len(a), len(a) + len(b)
    ranks = _ranks(np.concatenate([a, b]))
    mean_u = n1 * (n - n1) / 2
    observed = abs(ranks[:n1].sum() - n1 * (n1 + 1) / 2 - mean_u)
    hits = total = 0
    for idx in combinations(range(n), n1):
        u = ranks[list(idx)].sum() - n1 * (n1 + 1) / 2
        total += 1
        if abs(u - mean_u) >= observed - 1e-9:
            hits += 1
    return hits / total


def mann_whitney_normal(a, b) -> float:
    """Two-sided p-value from the tie-corrected normal approximation with continuity correction."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n1, n2 = len(a), len(b)
    n = n1 + n2
    u = _u_statistic(a, b)
    mu = n1 * n2 / 2
    _, counts = np.unique(np.concatenate([a, b]), return_counts=True)
    tie = float(np.sum(counts**3 - counts))
    var = n1 * n2 / 12 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return 1.0
    z = (abs(u - mu) - 0.5) / math.sqrt(var)
    z = max(z, 0.0)
    return float(min(1.0, math.erfc(z / math.sqrt(2))))


def mann_whitney_u(a, b) -> float:
    """Two-sided Mann-Whitney U p-value (exact for small samples)."""
    if len(a) < 3 or len(b) < 3:
        raise SampleTooSmall("both samples need at least 3 observations")
    if len(a) < EXACT_LIMIT and len(b) < EXACT_LIMIT:
        return mann_whitney_exact(a, b)
    return mann_whitney_normal(a, b)


def compare(a, b) -> TestResult:
    delta = cliffs_delta(a, b)
    return TestResult(mann_whitney_u(a, b), delta, magnitude(delta))


def pairwise_table(samples: dict, metric: str) -> list[tuple]:
    """Compare every ordered pair (i < j) of named samples."""
    rows = []
    names = list(samples)
    for i, j in combinations(range(len(names)), 2):
        res = compare(samples[names[i]], samples[names[j]])
        rows.append((metric, names[i], names[j], repr(res.p_value), repr(res.delta), res.magnitude))
    return rows


def table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_FIELDS)
    w.writerows(rows)
    return buf.getvalue()
