"""dbscan, k-means and Ward agglomerative clustering over encoded traces.

All three use Euclidean distance and return labels renumbered by first
appearance so that non-noise labels are ``0..n_clusters-1``. Noise (dbscan
only) is ``-1``.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import ConfigError

ALGORITHMS = ("dbscan", "kmeans", "agglomerative")
EPS_GRID = (0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0)
K_GRID = tuple(range(2, 11))
DBSCAN_MIN_SAMPLES = 5
KMEANS_RESTARTS = 10
KMEANS_MAX_ITER = 300
KMEANS_TOL = 1e-6


@dataclass(frozen=True)
class ClusteringConfig:
    algorithm: str
    eps: float | None = None
    k: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm == "dbscan":
            if self.eps is None or self.eps <= 0 or self.k is not None:
                raise ConfigError("dbscan takes exactly one positive eps")
        elif self.k is None or self.k < 2 or self.eps is not None:
            raise ConfigError(f"{self.algorithm} takes exactly one k >= 2")

    @property
    def label(self) -> str:
        if self.algorithm == "dbscan":
            return f"dbscan_eps{self.eps:g}"
        return f"{self.algorithm}_k{self.k}"

    @classmethod
    def from_label(cls, label: str, seed: int = 0) -> "ClusteringConfig":
        algorithm, _, param = label.rpartition("_")
        try:
            if algorithm == "dbscan" and param.startswith("eps"):
                return cls("dbscan", eps=float(param[3:]), seed=seed)
            if param.startswith("k"):
                return cls(algorithm, k=int(param[1:]), seed=seed)
        except ValueError:
            pass
        raise ConfigError(f"cannot parse clustering label {label!r}")


def clustering_grid(seed: int = 0) -> list[ClusteringConfig]:
    grid = [ClusteringConfig("dbscan", eps=e, seed=seed) for e in EPS_GRID]
    grid += [ClusteringConfig("kmeans", k=k, seed=seed) for k in K_GRID]
    grid += [ClusteringConfig("agglomerative", k=k, seed=seed) for k in K_GRID]
    return grid


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int
    elapsed: float
    info: dict = field(default_factory=dict, compare=False, repr=False)


def _as_array(X) -> np.ndarray:
    return np.asarray(getattr(X, "rows", X), dtype=float)


def _canonical(labels: np.ndarray) -> tuple[np.ndarray, int]:
    out = np.full(labels.shape, -1, dtype=int)
    mapping: dict[int, int] = {}
    for i, lab in enumerate(labels):
        if lab >= 0:
            out[i] = mapping.setdefault(int(lab), len(mapping))
    return out, len(mapping)


def _elapsed(t0: float) -> float:
    # perf_counter can return equal readings on very fast calls
    return max(time.perf_counter() - t0, 1e-9)


def dbscan(X, eps: float, min_samples: int = DBSCAN_MIN_SAMPLES) -> ClusterAssignment:
    """Density clustering; core points have >= ``min_samples`` points (self
    included) within distance ``eps``. Clusters grow breadth-first in row order.
    """
    if eps <= 0 or min_samples < 1:
        raise ConfigError("dbscan needs eps > 0 and min_samples >= 1")
    t0 = time.perf_counter()
    x = _as_array(X)
    n = len(x)
    if n == 1:
        dist = np.zeros((1, 1))
    else:
        dist = squareform(pdist(x))
    neighbours = [np.flatnonzero(row <= eps) for row in dist]
    core = np.array([len(nb) >= min_samples for nb in neighbours])
    labels = np.full(n, -1, dtype=int)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            p = queue.popleft()
            if not core[p]:
                continue
            for q in neighbours[p]:
                if labels[q] == -1:
                    labels[q] = cluster
                    queue.append(q)
        cluster += 1
    labels, k = _canonical(labels)
    return ClusterAssignment(labels, k, _elapsed(t0))


def _sq_dists(x, centers):
    return ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _lloyd(x, centers, max_iter=KMEANS_MAX_ITER, tol=KMEANS_TOL):
    """One k-means run. Returns labels, centres and the WCSS after every assignment."""
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(x, centers)
        labels = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(x)), labels].sum()))
        new = centers.copy()
        closest = d2[np.arange(len(x)), labels]
        taken = set()
        for c in range(len(centers)):
            members = labels == c
            if members.any():
                new[c] = x[members].mean(axis=0)
            else:
                # reseed on the point farthest from its centre
                order = np.argsort(-closest, kind="stable")
                far = next((int(i) for i in order if int(i) not in taken), int(order[0]))
                taken.add(far)
                new[c] = x[far]
        shift = np.sqrt(((new - centers) ** 2).sum(axis=1)).max()
        centers = new
        if shift < tol:
            break
    d2 = _sq_dists(x, centers)
    labels = d2.argmin(axis=1)
    history.append(float(d2[np.arange(len(x)), labels].sum()))
    return labels, centers, history


def kmeans(X, k: int, seed: int = 0, n_init: int = KMEANS_RESTARTS) -> ClusterAssignment:
    """Lloyd's algorithm from randomly chosen rows; best of ``n_init`` runs by WCSS."""
    x = _as_array(X)
    if k > len(x):
        raise ConfigError(f"k={k} exceeds the number of rows ({len(x)})")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        init = x[rng.choice(len(x), size=k, replace=False)]
        labels, centers, history = _lloyd(x, init)
        if best is None or history[-1] < best[2][-1]:
            best = (labels, centers, history)
    labels, n_clusters = _canonical(best[0])
    return ClusterAssignment(labels, n_clusters, _elapsed(t0),
                             info={"wcss": best[2][-1], "wcss_history": best[2]})


def agglomerative(X, k: int) -> ClusterAssignment:
    """Bottom-up Ward clustering until ``k`` clusters remain.

    Merge costs are kept as Lance-Williams-updated squared Ward distances.
    Ties go to the lexicographically smallest (slot, slot) pair; the merged
    cluster keeps the smaller slot.
    """
    x = _as_array(X)
    n = len(x)
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of rows ({n})")
    t0 = time.perf_counter()
    d = squareform(pdist(x, "sqeuclidean")) if n > 1 else np.zeros((1, 1))
    np.fill_diagonal(d, np.inf)
    d[np.tril_indices(n)] = np.inf
    full = squareform(pdist(x, "sqeuclidean")) if n > 1 else np.zeros((1, 1))
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    owner = np.arange(n)
    merges = 0
    for _ in range(n - k):
        flat = int(np.argmin(d))
        i, j = divmod(flat, n)
        ni, nj = size[i], size[j]
        nk = size
        dij = full[i, j]
        new = ((ni + nk) * full[i] + (nj + nk) * full[j] - nk * dij) / (ni + nj + nk)
        full[i, :] = new
        full[:, i] = new
        full[i, i] = 0.0
        size[i] = ni + nj
        active[j] = False
        owner[owner == j] = i
        # rebuild the upper-triangular search rows/cols touched by the merge
        d[j, :] = np.inf
        d[:, j] = np.inf
        upper = np.arange(n) > i
        d[i, :] = np.where(active & upper, new, np.inf)
        lower = np.arange(n) < i
        d[:, i] = np.where(active & lower, new, np.inf)
        merges += 1
    labels, n_clusters = _canonical(owner)
    return ClusterAssignment(labels, n_clusters, _elapsed(t0), info={"merges": merges})


def run_clustering(X, config: ClusteringConfig) -> ClusterAssignment:
    if config.algorithm == "dbscan":
        return dbscan(X, config.eps)
    if config.algorithm == "kmeans":
        return kmeans(X, config.k, config.seed)
    return agglomerative(X, config.k)
