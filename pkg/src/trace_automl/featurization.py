"""Fixed-order meta-feature vector describing an event log.

Five groups, concatenated in this order:

* activity statistics for all, start and end activities (3 x 12)
* trace-length statistics (29)
* variant statistics (11)
* log size (4)
* entropy measures (14)

for 94 values in total. Undefined statistics are imputed so that every value
is finite: skewness/kurtosis of constant data and coefficients of variation
with zero mean become 0, geometric/harmonic means over data containing a zero
(or over nothing) become 0.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np
from scipy import stats

from . import entropy as ent
from .errors import SchemaMismatchError
from .event_log import EventLog

SCHEMA_VERSION = "meta-features/1"

_STATS = ["min", "max", "mean", "median", "std", "variance", "p25", "p75", "iqr",
          "skewness", "kurtosis"]
_TOP_FRACTIONS = (0.01, 0.05, 0.10, 0.20, 0.50, 0.75)
_BLOCK_KS = (1, 3, 5)
_KNN_KS = (3, 5, 7)


def _activity_names(prefix):
    return [f"{prefix}_n"] + [f"{prefix}_{s}" for s in _STATS]


ACTIVITY_GROUPS = {"all": "activities", "start": "start_activities", "end": "end_activities"}

TRACE_LENGTH_NAMES = (
    [f"trace_len_{s}" for s in ("min", "max", "mean", "median", "mode", "std", "variance",
                                "p25", "p75", "iqr", "geometric_mean", "geometric_std",
                                "harmonic_mean", "coefficient_variation", "entropy")]
    + [f"trace_len_hist{i}" for i in range(1, 11)]
    + ["trace_len_hist_skewness", "trace_len_hist_kurtosis",
       "trace_len_skewness", "trace_len_kurtosis"]
)
VARIANT_NAMES = (
    ["trace_variants_mean", "trace_variants_std", "trace_variants_skewness",
     "trace_variants_kurtosis", "ratio_most_common_variant"]
    + [f"ratio_top_{round(f * 100)}_variants" for f in _TOP_FRACTIONS]
)
LOG_NAMES = ["n_traces", "n_unique_traces", "ratio_unique_traces_per_trace", "n_events"]
ENTROPY_NAMES = (
    ["entropy_trace", "entropy_prefix"]
    + [f"entropy_k_block_diff_{k}" for k in _BLOCK_KS]
    + [f"entropy_k_block_ratio_{k}" for k in _BLOCK_KS]
    + ["entropy_global_block"]
    + [f"entropy_knn_{k}" for k in _KNN_KS]
    + ["entropy_lempel_ziv", "entropy_kozachenko_leonenko"]
)

FEATURE_NAMES: tuple[str, ...] = tuple(
    sum((_activity_names(p) for p in ACTIVITY_GROUPS.values()), [])
    + TRACE_LENGTH_NAMES + VARIANT_NAMES + LOG_NAMES + ENTROPY_NAMES
)
N_FEATURES = len(FEATURE_NAMES)


@dataclass(frozen=True)
class DescriptiveStats:
    count: int
    min: float
    max: float
    mean: float
    median: float
    std: float
    variance: float
    p25: float
    p75: float
    iqr: float
    skewness: float
    kurtosis: float

    @classmethod
    def of(cls, values) -> "DescriptiveStats":
        # sorted so float reductions do not depend on input order
        x = np.sort(np.asarray(values, dtype=float))
        if x.size == 0:
            return cls(0, *([0.0] * 11))
        p25, med, p75 = np.percentile(x, [25, 50, 75])
        std = float(x.std())
        return cls(
            count=int(x.size),
            min=float(x.min()),
            max=float(x.max()),
            mean=float(x.mean()),
            median=float(med),
            std=std,
            variance=std * std,
            p25=float(p25),
            p75=float(p75),
            iqr=float(p75 - p25),
            skewness=skewness(x),
            kurtosis=kurtosis(x),
        )

    def as_list(self) -> list[float]:
        return [self.min, self.max, self.mean, self.median, self.std, self.variance,
                self.p25, self.p75, self.iqr, self.skewness, self.kurtosis]


def _is_constant(x):
    return x.size < 2 or np.ptp(x) == 0


def skewness(x) -> float:
    x = np.sort(np.asarray(x, dtype=float))
    return 0.0 if _is_constant(x) else float(stats.skew(x))


def kurtosis(x) -> float:
    """Excess kurtosis (0 for a normal distribution)."""
    x = np.sort(np.asarray(x, dtype=float))
    return 0.0 if _is_constant(x) else float(stats.kurtosis(x, fisher=True))


@dataclass(frozen=True)
class MetaFeatureVector:
    values: tuple[float, ...]
    schema_version: str = SCHEMA_VERSION

    names = FEATURE_NAMES

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} values, got {len(self.values)}")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]

    def to_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


# ----------------------------------------------------------------------------
# Groups
# ----------------------------------------------------------------------------

def activity_features(log: EventLog, group: str = "all") -> list[float]:
    """Distinct-activity count followed by statistics of per-activity occurrence counts."""
    if group == "all":
        counts = Counter(a for seq in log.sequences for a in seq)
    elif group == "start":
        counts = Counter(seq[0] for seq in log.sequences)
    elif group == "end":
        counts = Counter(seq[-1] for seq in log.sequences)
    else:
        raise ValueError(f"unknown activity group {group!r}")
    st = DescriptiveStats.of(list(counts.values()))
    return [float(len(counts))] + st.as_list()


def _mode(x: np.ndarray) -> float:
    values, freq = np.unique(x, return_counts=True)
    return float(values[np.argmax(freq)])  # np.unique sorts, so ties pick the smallest


def trace_length_features(log: EventLog) -> list[float]:
    x = np.sort(np.asarray([len(t) for t in log.traces], dtype=float))
    st = DescriptiveStats.of(x)
    if x.size and np.all(x > 0):
        logs = np.log(x)
        gmean = float(np.exp(logs.mean()))
        gstd = float(np.exp(logs.std()))
        hmean = float(x.size / np.sum(1.0 / x))
    else:
        gmean = gstd = hmean = 0.0
    cv = st.std / st.mean if st.mean != 0 else 0.0
    _, len_counts = np.unique(x, return_counts=True)
    hist, _ = np.histogram(x, bins=10)
    hist = hist / hist.sum()
    return (
        [st.min, st.max, st.mean, st.median, _mode(x), st.std, st.variance,
         st.p25, st.p75, st.iqr, gmean, gstd, hmean, cv, ent.shannon(len_counts)]
        + [float(h) for h in hist]
        + [skewness(hist), kurtosis(hist), st.skewness, st.kurtosis]
    )


def variant_features(log: EventLog) -> list[float]:
    counts = np.asarray(sorted(Counter(log.sequences).values(), reverse=True), dtype=float)
    n_traces = counts.sum()
    out = [float(counts.mean()), float(counts.std()), skewness(counts), kurtosis(counts),
           float(counts[0] / n_traces)]
    for frac in _TOP_FRACTIONS:
        top = max(1, math.ceil(frac * counts.size))
        out.append(float(counts[:top].sum() / n_traces))
    return out


def log_features(log: EventLog) -> list[float]:
    n_traces = len(log)
    n_variants = len(set(log.sequences))
    return [float(n_traces), float(n_variants), n_variants / n_traces, float(log.n_events)]


def _onehot_rows(log: EventLog) -> np.ndarray:
    index = {a: i for i, a in enumerate(log.alphabet)}
    x = np.zeros((len(log), len(index)))
    for r, seq in enumerate(log.sequences):
        x[r, [index[a] for a in seq]] = 1.0
    return x


def entropy_features(log: EventLog) -> list[float]:
    vc = Counter(log.sequences)
    out = [ent.trace_entropy(vc), ent.prefix_entropy(vc)]
    blocks = {k: ent.block_entropy(vc, k) for k in {0, *_BLOCK_KS, *(k - 1 for k in _BLOCK_KS)}}
    out += [blocks[k] - blocks[k - 1] for k in _BLOCK_KS]
    out += [blocks[k] / k for k in _BLOCK_KS]
    out.append(ent.global_block_entropy(vc))
    onehot = _onehot_rows(log)
    out += [ent.knn_entropy(onehot, k) for k in _KNN_KS]
    out.append(ent.lempel_ziv(log.sequences))
    out.append(ent.knn_entropy(onehot, 1))
    return out


def extract_all(log: EventLog) -> MetaFeatureVector:
    values = []
    for group in ACTIVITY_GROUPS:
        values += activity_features(log, group)
    values += trace_length_features(log)
    values += variant_features(log)
    values += log_features(log)
    values += entropy_features(log)
    return MetaFeatureVector(tuple(float(v) for v in values))


# ----------------------------------------------------------------------------
# Feature CSV
# ----------------------------------------------------------------------------

def write_schema(sink: IO[str]) -> None:
    """Plain-text schema document: version line, then one feature name per line."""
    sink.write(f"# schema_version={SCHEMA_VERSION}\n")
    for i, name in enumerate(FEATURE_NAMES):
        sink.write(f"{i}\t{name}\n")


def write_feature_csv(rows: Sequence[tuple[str, MetaFeatureVector]], sink: IO[str]) -> None:
    sink.write(f"# schema_version={SCHEMA_VERSION}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["log"] + list(FEATURE_NAMES))
    for name, vec in rows:
        writer.writerow([name] + [repr(v) for v in vec.values])


def read_schema_header(line: str) -> str:
    line = line.strip()
    if not line.startswith("# schema_version="):
        raise SchemaMismatchError("missing schema_version header")
    return line.split("=", 1)[1]


def read_feature_csv(source: IO[str]) -> list[tuple[str, MetaFeatureVector]]:
    version = read_schema_header(source.readline())
    if version != SCHEMA_VERSION:
        raise SchemaMismatchError(
            f"feature schema {version!r} does not match this build's {SCHEMA_VERSION!r}"
        )
    reader = csv.reader(source)
    header = next(reader)
    if tuple(header[1:]) != FEATURE_NAMES:
        raise SchemaMismatchError("feature columns differ from the schema")
    return [(r[0], MetaFeatureVector(tuple(float(v) for v in r[1:]))) for r in reader if r]
