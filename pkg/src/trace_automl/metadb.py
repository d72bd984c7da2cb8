"""Grid evaluation of trace clustering pipelines and meta-database assembly."""

from __future__ import annotations

import csv
import logging
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import IO, Sequence

from .clustering import ClusteringConfig, clustering_grid, run_clustering
from .encoding import ENCODINGS, encode
from .errors import ConfigError, SchemaMismatchError, TraceAutoMLError
from .event_log import EventLog
from .featurization import (
    FEATURE_NAMES,
    SCHEMA_VERSION,
    MetaFeatureVector,
    extract_all,
    read_schema_header,
)
from .ranking import MetricTriple, PipelineId, RankTable, rank_pipelines, silhouette, variant_score

logger = logging.getLogger(__name__)

METADB_SCHEMA_VERSION = f"metadb/1+{SCHEMA_VERSION}"
TIMING_REPEATS = 3


class NoValidPipelines(TraceAutoMLError):
    pass


def pipeline_grid(seed: int = 0) -> list[tuple[str, ClusteringConfig]]:
    """The 4 x 28 = 112 (encoding, clustering) pairs, in canonical order."""
    return [(enc, cfg) for enc in ENCODINGS for cfg in clustering_grid(seed)]


@dataclass(frozen=True)
class PipelineResult:
    pipeline: PipelineId
    metrics: MetricTriple

    def __iter__(self):
        return iter((self.pipeline, self.metrics))


def _time_call(x, cfg, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_clustering(x, cfg)
        best = min(best, time.perf_counter() - t0)
    return max(best, 1e-9)


def evaluate_grid(
    log: EventLog,
    seed: int = 0,
    threads: int = 1,
    timing_repeats: int = TIMING_REPEATS,
) -> list[PipelineResult]:
    """Score every pipeline of the grid on ``log``.

    ``s`` and ``v`` come from a quality pass that may use ``threads`` workers.
    ``t`` is measured afterwards, one pipeline at a time, as the minimum wall
    time over ``timing_repeats`` calls. Pipelines that cannot run on this log
    (k larger than the trace count) are logged and left out.
    """
    matrices = {enc: encode(log, enc).rows for enc in ENCODINGS}
    grid = pipeline_grid(seed)

    def quality(item):
        enc, cfg = item
        try:
            assignment = run_clustering(matrices[enc], cfg)
        except ConfigError as exc:
            logger.info("log %s: pipeline %s skipped: %s", log.name, PipelineId.of(enc, cfg), exc)
            return None
        return (silhouette(matrices[enc], assignment, seed=seed),
                variant_score(log, assignment))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            scores = list(pool.map(quality, grid))
    else:
        scores = [quality(item) for item in grid]

    results = []
    for (enc, cfg), sv in zip(grid, scores):
        if sv is None:
            continue
        t = _time_call(matrices[enc], cfg, timing_repeats)
        results.append(PipelineResult(PipelineId.of(enc, cfg), MetricTriple(sv[0], sv[1], t)))
    return results


def select_meta_target(results: Sequence) -> tuple[str, str]:
    """(encoding, clustering label) of the pipeline with the lowest final rank."""
    results = [tuple(r) for r in results]
    if not results:
        raise NoValidPipelines("no valid pipeline results")
    winner = rank_pipelines(results).winner.pipeline
    return winner.encoding, winner.clustering


@dataclass(frozen=True)
class MetaInstance:
    log_name: str
    features: MetaFeatureVector
    encoding_target: str
    clustering_target: str

    @property
    def pair(self) -> tuple[str, str]:
        return self.encoding_target, self.clustering_target


@dataclass(frozen=True)
class MetaDatabase:
    instances: tuple[MetaInstance, ...]
    schema_version: str = METADB_SCHEMA_VERSION

    feature_names = FEATURE_NAMES

    def __len__(self):
        return len(self.instances)

    def pair_counts(self) -> Counter:
        return Counter(inst.pair for inst in self.instances)

    def X(self):
        import numpy as np

        return np.array([inst.features.values for inst in self.instances], dtype=float)

    def targets(self, output: str) -> list[str]:
        attr = {"encoding": "encoding_target", "clustering": "clustering_target"}[output]
        return [getattr(inst, attr) for inst in self.instances]

    def subset(self, indices) -> "MetaDatabase":
        return replace(self, instances=tuple(self.instances[i] for i in indices))


def filter_minority(db: MetaDatabase, threshold: int = 5) -> MetaDatabase:
    """Drop instances whose (encoding, clustering) pair occurs fewer than ``threshold`` times."""
    counts = db.pair_counts()
    kept = tuple(inst for inst in db.instances if counts[inst.pair] >= threshold)
    if not kept:
        raise NoValidPipelines("no classes survive filtering")
    dropped = {p: c for p, c in counts.items() if c < threshold}
    if dropped:
        logger.info("filtered %d minority pairs (%d instances)", len(dropped), sum(dropped.values()))
    return replace(db, instances=kept)


def build_metadb(
    features: Sequence[tuple[str, MetaFeatureVector]],
    metrics: dict[str, Sequence],
    threshold: int = 5,
) -> MetaDatabase:
    """Join per-log features with the winner of each log's recomputed rank table."""
    instances = []
    for name, vec in features:
        results = metrics.get(name)
        if not results:
            logger.warning("log %s has no valid pipeline results; excluded", name)
            continue
        enc, clu = select_meta_target(results)
        instances.append(MetaInstance(name, vec, enc, clu))
    if not instances:
        raise NoValidPipelines("no log produced a meta-target")
    return filter_minority(MetaDatabase(tuple(instances)), threshold)


def assemble(
    logs: Sequence[EventLog],
    seed: int = 0,
    threshold: int = 5,
    threads: int = 1,
    timing_repeats: int = TIMING_REPEATS,
    return_tables: bool = False,
):
    """Featurise and evaluate every log, then build the filtered meta-database.

    With ``return_tables`` the per-log rank tables are returned alongside.
    """
    if not logs:
        raise ConfigError("assemble needs at least one log")
    features, metrics, tables = [], {}, []
    for log in logs:
        features.append((log.name, extract_all(log)))
        results = [tuple(r) for r in evaluate_grid(log, seed, threads, timing_repeats)]
        metrics[log.name] = results
        if results:
            tables.append((log.name, rank_pipelines(results)))
    db = build_metadb(features, metrics, threshold)
    return (db, tables) if return_tables else db


def rank_tables(metrics: dict[str, Sequence]) -> list[tuple[str, RankTable]]:
    return [(name, rank_pipelines(list(res))) for name, res in metrics.items() if res]


# ----------------------------------------------------------------------------
# Meta-database CSV
# ----------------------------------------------------------------------------

def write_metadb_csv(db: MetaDatabase, sink: IO[str]) -> None:
    sink.write(f"# schema_version={db.schema_version}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["log_name", *FEATURE_NAMES, "encoding_target", "clustering_target"])
    for inst in db.instances:
        writer.writerow([inst.log_name, *(repr(v) for v in inst.features.values),
                         inst.encoding_target, inst.clustering_target])


def read_metadb_csv(source: IO[str]) -> MetaDatabase:
    version = read_schema_header(source.readline())
    if version != METADB_SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"meta-database schema {version!r} does not match {METADB_SCHEMA_VERSION!r}"
        )
    reader = csv.reader(source)
    header = next(reader)
    if tuple(header[1:-2]) != FEATURE_NAMES:
        raise SchemaMismatchError("meta-database feature columns differ from the schema")
    instances = []
    for r in reader:
        if not r:
            continue
        vec = MetaFeatureVector(tuple(float(v) for v in r[1:-2]))
        instances.append(MetaInstance(r[0], vec, r[-2], r[-1]))
    return MetaDatabase(tuple(instances), version)
