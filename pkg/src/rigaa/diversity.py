"""Jaccard distance between scenarios and the diversity measures built on it."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numba import njit

from .errors import SchemaMismatch, SuiteTooSmall

ELITE_SIZE = 5
DEDUPE_THRESHOLD = 0.2


@njit(cache=True)
def _intersection(a, b, th):
    # greedy: each row of a takes the first unmatched similar row of b
    used = np.zeros(b.shape[0], dtype=np.bool_)
    count = 0
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            if used[j]:
                continue
            similar = True
            for k in range(a.shape[1]):
                if abs(a[i, k] - b[j, k]) > th[k]:
                    similar = False
                    break
            if similar:
                used[j] = True
                count += 1
                break
    return count


@njit(cache=True)
def _distance(a, b, th):
    inter = _intersection(a, b, th)
    union = a.shape[0] + b.shape[0] - inter
    if union == 0:
        return 0.0
    return 1.0 - inter / union


def _prep(x) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.int64)


def jaccard_distance(ts1, ts2, th) -> float:
    """``1 - |ts1 ∩ ts2| / |ts1 ∪ ts2|`` with thresholded element similarity.

    Elements are similar when every attribute differs by at most its
    threshold.  The intersection uses greedy one-to-one matching in
    ``ts1`` order, so the result can depend on argument order.
    """
    a, b, t = _prep(ts1), _prep(ts2), _prep(th)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1] or t.shape != (a.shape[1],):
        raise SchemaMismatch(f"incompatible shapes {a.shape}, {b.shape} with thresholds {t.shape}")
    return float(_distance(a, b, t))


def novelty_objective(candidate, elite: Sequence, th) -> float:
    """Mean distance from ``candidate`` to the elite chromosomes (1.0 if none)."""
    if len(elite) == 0:
        return 1.0
    return float(np.mean([jaccard_distance(candidate, e, th) for e in elite]))


def _chromosome(item):
    return getattr(item, "chromosome", item)


def dedupe(population: Sequence, threshold: float = DEDUPE_THRESHOLD, th=None) -> list:
    """Drop every item closer than ``threshold`` to an earlier retained one.

    Items may be chromosomes or objects with a ``chromosome`` attribute.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    if th is None:
        raise ValueError("per-attribute thresholds are required")
    kept: list = []
    for item in population:
        c = _chromosome(item)
        if all(jaccard_distance(_chromosome(k), c, th) >= threshold for k in kept):
            kept.append(item)
    return kept


def suite_diversity(suite: Sequence, th) -> float:
    """Mean pairwise distance over all unordered pairs (i < j)."""
    n = len(suite)
    if n < 2:
        raise SuiteTooSmall(f"need at least 2 scenarios, got {n}")
    t = _prep(th)
    chroms = [_prep(_chromosome(s)) for s in suite]
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            total += _distance(chroms[i], chroms[j], t)
    return total / (n * (n - 1) / 2)


def distance_matrix(chromosomes: Sequence, th) -> np.ndarray:
    """Full ordered distance matrix, ``out[i, j] = D(c_i, c_j)``."""
    t = _prep(th)
    chroms = [_prep(c) for c in chromosomes]
    n = len(chroms)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                out[i, j] = _distance(chroms[i], chroms[j], t)
    return out
