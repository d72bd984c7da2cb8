"""Pipeline quality metrics (silhouette, variant score, time) and rank aggregation."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import rankdata

from .clustering import ClusteringConfig
from .encoding import ENCODINGS
from .errors import ConfigError, SchemaMismatchError
from .event_log import EventLog

SILHOUETTE_MAX_SAMPLES = 2000
METRICS_SCHEMA_VERSION = "metrics/1"


@dataclass(frozen=True, order=True)
class PipelineId:
    encoding: str
    clustering: str  # canonical clustering label, e.g. "agglomerative_k10"

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ConfigError(f"unknown encoding {self.encoding!r}")

    def __str__(self):
        return f"{self.encoding}_{self.clustering}"

    @classmethod
    def of(cls, encoding: str, config: ClusteringConfig) -> "PipelineId":
        return cls(encoding, config.label)

    @classmethod
    def parse(cls, text: str) -> "PipelineId":
        # longest prefix first: "position_profile" contains an underscore
        for enc in sorted(ENCODINGS, key=len, reverse=True):
            if text.startswith(enc + "_"):
                clustering = text[len(enc) + 1:]
                ClusteringConfig.from_label(clustering)
                return cls(enc, clustering)
        raise ConfigError(f"cannot parse pipeline id {text!r}")


@dataclass(frozen=True)
class MetricTriple:
    s: float
    v: float
    t: float


def _labels(assignment) -> np.ndarray:
    return np.asarray(getattr(assignment, "labels", assignment))


def silhouette_samples(X, labels) -> np.ndarray:
    """Per-sample silhouette with dbscan noise (-1) pooled as one extra cluster.

    Samples alone in their cluster, and samples with a = b = 0, score 0.
    """
    x = np.asarray(getattr(X, "rows", X), dtype=float)
    labels = _labels(labels)
    uniq, inv = np.unique(labels, return_inverse=True)
    n = len(x)
    dist = squareform(pdist(x)) if n > 1 else np.zeros((1, 1))
    onehot = np.zeros((n, len(uniq)))
    onehot[np.arange(n), inv] = 1.0
    sizes = onehot.sum(axis=0)
    sums = dist @ onehot  # distance from each sample to each cluster, summed
    own_size = sizes[inv]
    a = np.where(own_size > 1, sums[np.arange(n), inv] / np.maximum(own_size - 1, 1), 0.0)
    means = sums / sizes
    means[np.arange(n), inv] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own_size <= 1] = 0.0
    return s


def silhouette(X, labels, seed: int = 0, max_samples: int = SILHOUETTE_MAX_SAMPLES) -> float:
    """Mean silhouette; -1 when fewer than two clusters (noise counts as one)."""
    x = np.asarray(getattr(X, "rows", X), dtype=float)
    labels = _labels(labels)
    if len(np.unique(labels)) < 2:
        return -1.0
    if len(x) > max_samples:
        idx = np.sort(np.random.default_rng(seed).choice(len(x), max_samples, replace=False))
        x, labels = x[idx], labels[idx]
        if len(np.unique(labels)) < 2:
            return -1.0
    return float(silhouette_samples(x, labels).mean())


def variant_score(log: EventLog, labels) -> float:
    """Sum over clusters of (distinct variants - 1), divided by the number of traces.

    Noise traces are singleton clusters and add nothing.
    """
    labels = _labels(labels)
    if len(labels) != len(log):
        raise ValueError(f"{len(labels)} labels for {len(log)} traces")
    variants: dict[int, set] = defaultdict(set)
    for lab, seq in zip(labels, log.sequences):
        if lab >= 0:
            variants[int(lab)].add(seq)
    return sum(len(v) - 1 for v in variants.values()) / len(log)


@dataclass(frozen=True)
class RankRow:
    pipeline: PipelineId
    metrics: MetricTriple
    r_s: float
    r_v: float
    r_t: float

    @property
    def r(self) -> float:
        return (self.r_s + self.r_v + self.r_t) / 3

    def sort_key(self):
        # compare the rank sum rather than the float mean to keep ties exact
        return (self.r_s + self.r_v + self.r_t, self.metrics.v, self.metrics.t, str(self.pipeline))


@dataclass(frozen=True)
class RankTable:
    rows: tuple[RankRow, ...]

    @property
    def winner(self) -> RankRow:
        return min(self.rows, key=RankRow.sort_key)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)


def rank_pipelines(results: Sequence[tuple[PipelineId, MetricTriple]]) -> RankTable:
    """Average-tie ranks per metric (s descending, v and t ascending) and their mean."""
    if not results:
        raise ValueError("no pipeline results to rank")
    s = np.array([m.s for _, m in results])
    v = np.array([m.v for _, m in results])
    t = np.array([m.t for _, m in results])
    r_s, r_v, r_t = rankdata(-s), rankdata(v), rankdata(t)
    rows = tuple(
        RankRow(pid, m, float(a), float(b), float(c))
        for (pid, m), a, b, c in zip(results, r_s, r_v, r_t)
    )
    return RankTable(rows)


# ----------------------------------------------------------------------------
# Metrics CSV
# ----------------------------------------------------------------------------

METRICS_COLUMNS = ["log", "pipeline", "s", "v", "t", "R_s", "R_v", "R_t", "R", "winner"]


def write_metrics_csv(tables: Iterable[tuple[str, RankTable]], sink: IO[str]) -> None:
    sink.write(f"# schema_version={METRICS_SCHEMA_VERSION}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(METRICS_COLUMNS)
    for log_name, table in tables:
        win = table.winner.pipeline
        for row in table:
            m = row.metrics
            writer.writerow([log_name, str(row.pipeline), repr(m.s), repr(m.v), repr(m.t),
                             repr(row.r_s), repr(row.r_v), repr(row.r_t), f"{row.r:.6f}",
                             int(row.pipeline == win)])


def read_metrics_csv(source: IO[str]) -> dict[str, list[tuple[PipelineId, MetricTriple]]]:
    """Raw (s, v, t) per log, in file order; ranks are recomputed by the caller."""
    from .featurization import read_schema_header

    version = read_schema_header(source.readline())
    if version != METRICS_SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"metrics schema {version!r} does not match {METRICS_SCHEMA_VERSION!r}"
        )
    out: dict[str, list] = {}
    for row in csv.DictReader(source):
        triple = MetricTriple(float(row["s"]), float(row["v"]), float(row["t"]))
        out.setdefault(row["log"], []).append((PipelineId.parse(row["pipeline"]), triple))
    return out
