"""Entropy and complexity estimators for event logs.

Discrete measures use the natural log. The nearest-neighbour estimators work
on one-hot trace vectors under the Euclidean distance.
"""

from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma, gammaln


def shannon(counts: Iterable[int]) -> float:
    c = np.sort(np.asarray([x for x in counts if x > 0], dtype=float))
    if c.size <= 1:
        return 0.0
    p = c / c.sum()
    return float(-(p * np.log(p)).sum())


def _weighted_counter(variant_counts: Counter, substrings) -> Counter:
    pooled = Counter()
    for seq, n in variant_counts.items():
        for sub in substrings(seq):
            pooled[sub] += n
    return pooled


def trace_entropy(variant_counts: Counter) -> float:
    return shannon(variant_counts.values())


def prefix_entropy(variant_counts: Counter) -> float:
    pooled = _weighted_counter(
        variant_counts, lambda s: (s[:i] for i in range(1, len(s) + 1))
    )
    return shannon(pooled.values())


def block_entropy(variant_counts: Counter, k: int) -> float:
    """Entropy of all length-``k`` contiguous blocks pooled over traces; H(0) = 0."""
    if k == 0:
        return 0.0
    pooled = _weighted_counter(
        variant_counts, lambda s: (s[i:i + k] for i in range(len(s) - k + 1))
    )
    return shannon(pooled.values())


def global_block_entropy(variant_counts: Counter) -> float:
    def all_blocks(s):
        n = len(s)
        return (s[i:j] for i in range(n) for j in range(i + 1, n + 1))

    return shannon(_weighted_counter(variant_counts, all_blocks).values())


def lz76_phrase_count(symbols: Sequence) -> int:
    """Number of phrases in the Lempel-Ziv (1976) exhaustive-history parse.

    Each phrase is the shortest substring starting after the previous phrase
    that cannot be copied from earlier text (overlap allowed). A trailing
    incomplete phrase is counted.
    """
    n = len(symbols)
    if n == 0:
        return 0
    # Map to a str so that substring search runs in C.
    codes = {}
    s = "".join(chr(0x100 + codes.setdefault(x, len(codes))) for x in symbols)
    count = 0
    i = 0
    while i < n:
        length = 1
        while i + length <= n and s.find(s[i:i + length], 0, i + length - 1) != -1:
            length += 1
        count += 1
        i += length
    return count


SEPARATOR = object()


def lempel_ziv(sequences: Sequence[Sequence[str]]) -> float:
    """Normalised LZ76 complexity of all traces concatenated in sorted order."""
    stream = []
    for idx, seq in enumerate(sorted(sequences)):
        if idx:
            stream.append(SEPARATOR)
        stream.extend(seq)
    n = len(stream)
    if n < 2:
        return 0.0
    return lz76_phrase_count(stream) * math.log2(n) / n


def _log_unit_ball_volume(d: int) -> float:
    return d / 2 * math.log(math.pi) - gammaln(d / 2 + 1)


def knn_entropy(points: np.ndarray, k: int) -> float:
    """Kozachenko-Leonenko estimate using the distance to the k-th neighbour.

    Points whose k-th neighbour is at distance zero contribute nothing to the
    log-distance sum. ``k`` is clamped to ``N - 1``; a single point gives 0.
    """
    x = np.asarray(points, dtype=float)
    n, d = x.shape
    if n < 2 or d == 0:
        return 0.0
    k = min(k, n - 1)
    dist, _ = cKDTree(x).query(x, k=k + 1)
    eps = dist[:, k]
    logs = np.sort(np.log(eps[eps > 0])).sum()
    return float(digamma(n) - digamma(k) + _log_unit_ball_volume(d) + d * logs / n)
