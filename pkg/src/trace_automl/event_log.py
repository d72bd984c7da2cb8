"""Event log model, XES/CSV ingestion and a synthetic log generator.

Only the control-flow perspective is kept: each event carries its activity
label (``concept:name``) and, when present, a raw timestamp string. Timestamps
are never used to reorder events.
"""

from __future__ import annotations

import csv
import io
import xml.etree.ElementTree as ET
from collections import Counter, OrderedDict
from dataclasses import dataclass, fields
from functools import cached_property
from typing import IO, Iterable, Sequence
from xml.sax.saxutils import quoteattr

import numpy as np

from .errors import ConfigError, EmptyLogError, LogParseError

DEFAULT_CASE_COL = "case:concept:name"
DEFAULT_ACTIVITY_COL = "concept:name"
DEFAULT_TIMESTAMP_COL = "time:timestamp"


@dataclass(frozen=True)
class Event:
    activity: str
    timestamp: str | None = None

    def __post_init__(self):
        if not self.activity:
            raise LogParseError("event activity must be a non-empty string")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if len(self.events) == 0:
            raise LogParseError(f"trace {self.case_id!r} has no events")

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class Variant:
    activity_sequence: tuple[str, ...]
    count: int


@dataclass(frozen=True, eq=True)
class EventLog:
    name: str
    traces: tuple[Trace, ...]

    def __post_init__(self):
        if len(self.traces) == 0:
            raise EmptyLogError()

    def __len__(self):
        return len(self.traces)

    @cached_property
    def alphabet(self) -> tuple[str, ...]:
        """Activity labels in lexicographic order."""
        return tuple(sorted({e.activity for t in self.traces for e in t.events}))

    @cached_property
    def sequences(self) -> tuple[tuple[str, ...], ...]:
        return tuple(t.activities for t in self.traces)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    @classmethod
    def from_sequences(cls, sequences: Iterable[Sequence[str]], name: str = "log") -> "EventLog":
        """Build a log from bare activity sequences; case ids are 0-based indices."""
        traces = tuple(
            Trace(str(i), tuple(Event(a) for a in seq)) for i, seq in enumerate(sequences)
        )
        return cls(name, traces)


def variants_of(log: EventLog) -> list[Variant]:
    """Distinct activity sequences, by descending count then lexicographically."""
    counts = Counter(log.sequences)
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [Variant(seq, n) for seq, n in ordered]


# ----------------------------------------------------------------------------
# XES
# ----------------------------------------------------------------------------

def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _concept_name(elem) -> str | None:
    for child in elem:
        if _local(child.tag) == "string" and child.get("key") == "concept:name":
            return child.get("value")
    return None


def _timestamp(elem) -> str | None:
    for child in elem:
        if _local(child.tag) == "date" and child.get("key") == DEFAULT_TIMESTAMP_COL:
            return child.get("value")
    return None


def parse_xes(source: bytes | str | IO[bytes], name: str | None = None) -> EventLog:
    """Parse the trace/event/``concept:name`` subset of an XES document.

    Parameters
    ----------
    source : bytes, str or binary file object
        The XML document. ``str`` is treated as document text, not a path.
    name : str, optional
        Log name; defaults to the log-level ``concept:name`` or ``"log"``.
    """
    if hasattr(source, "read"):
        source = source.read()
    try:
        root = ET.fromstring(source)
    except ET.ParseError as exc:
        line, col = exc.position
        raise LogParseError("malformed XML", line, col) from None
    if _local(root.tag) != "log":
        raise LogParseError(f"root element must be <log>, got <{_local(root.tag)}>")

    traces = []
    for t_idx, t_elem in enumerate(e for e in root if _local(e.tag) == "trace"):
        case_id = _concept_name(t_elem) or str(t_idx)
        events = []
        for e_idx, e_elem in enumerate(e for e in t_elem if _local(e.tag) == "event"):
            activity = _concept_name(e_elem)
            if not activity:
                raise LogParseError(
                    f"event {e_idx} of trace {case_id!r} lacks a concept:name string attribute"
                )
            events.append(Event(activity, _timestamp(e_elem)))
        if not events:
            raise LogParseError(f"trace {case_id!r} has no events")
        traces.append(Trace(case_id, tuple(events)))
    if not traces:
        raise EmptyLogError()
    return EventLog(name or _concept_name(root) or "log", tuple(traces))


def write_xes(log: EventLog, sink: IO[str]) -> None:
    sink.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    sink.write('<log xes.version="1.0" xmlns="http://www.xes-standard.org/">\n')
    sink.write(f'  <string key="concept:name" value={quoteattr(log.name)}/>\n')
    for trace in log.traces:
        sink.write("  <trace>\n")
        sink.write(f'    <string key="concept:name" value={quoteattr(trace.case_id)}/>\n')
        for ev in trace.events:
            sink.write("    <event>\n")
            sink.write(f'      <string key="concept:name" value={quoteattr(ev.activity)}/>\n')
            if ev.timestamp is not None:
                sink.write(f'      <date key="time:timestamp" value={quoteattr(ev.timestamp)}/>\n')
            sink.write("    </event>\n")
        sink.write("  </trace>\n")
    sink.write("</log>\n")


# ----------------------------------------------------------------------------
# CSV
# ----------------------------------------------------------------------------

def parse_csv(
    source: bytes | str | IO,
    case_col: str = DEFAULT_CASE_COL,
    activity_col: str = DEFAULT_ACTIVITY_COL,
    name: str = "log",
) -> EventLog:
    """Assemble traces from a UTF-8 CSV with one event per row.

    Events keep file order within their case; cases are ordered by first
    appearance. A ``time:timestamp`` column is carried along when present.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8-sig")
    reader = csv.reader(io.StringIO(source))
    header = next(reader, None)
    if header is None:
        raise EmptyLogError()
    for col in (case_col, activity_col):
        if col not in header:
            raise ConfigError(f"CSV header lacks column {col!r}; found {header}")
    ci, ai = header.index(case_col), header.index(activity_col)
    ti = header.index(DEFAULT_TIMESTAMP_COL) if DEFAULT_TIMESTAMP_COL in header else None

    cases: OrderedDict[str, list[Event]] = OrderedDict()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise LogParseError(f"expected {len(header)} fields, got {len(row)}", lineno, 1)
        activity = row[ai]
        if not activity:
            raise LogParseError("empty activity", lineno, ai + 1)
        ts = row[ti] if ti is not None and row[ti] else None
        cases.setdefault(row[ci], []).append(Event(activity, ts))
    if not cases:
        raise EmptyLogError()
    return EventLog(name, tuple(Trace(cid, tuple(evs)) for cid, evs in cases.items()))


def write_csv(
    log: EventLog,
    sink: IO[str],
    case_col: str = DEFAULT_CASE_COL,
    activity_col: str = DEFAULT_ACTIVITY_COL,
) -> None:
    has_ts = any(e.timestamp is not None for t in log.traces for e in t.events)
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow([case_col, activity_col] + ([DEFAULT_TIMESTAMP_COL] if has_ts else []))
    for trace in log.traces:
        for ev in trace.events:
            row = [trace.case_id, ev.activity]
            if has_ts:
                row.append(ev.timestamp or "")
            writer.writerow(row)


def read_log(path, name: str | None = None) -> EventLog:
    """Read a ``.xes`` or ``.csv`` file, naming the log after the file stem."""
    from pathlib import Path

    path = Path(path)
    data = path.read_bytes()
    stem = name or path.stem
    if path.suffix.lower() == ".xes":
        return parse_xes(data, name=stem)
    if path.suffix.lower() == ".csv":
        return parse_csv(data, name=stem)
    raise ConfigError(f"unsupported log format: {path.suffix!r} (expected .xes or .csv)")


def write_log(log: EventLog, path) -> None:
    from pathlib import Path

    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if path.suffix.lower() == ".xes":
            write_xes(log, fh)
        elif path.suffix.lower() == ".csv":
            write_csv(log, fh)
        else:
            raise ConfigError(f"unsupported log format: {path.suffix!r}")


# ----------------------------------------------------------------------------
# Synthetic generator
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of a synthetic log.

    The base model is a random directly-follows graph over ``alphabet_size``
    activities in which every activity has ``branching`` successors. Traces are
    random walks from a fixed start activity whose length is drawn uniformly
    from ``[min_len, max_len]``. With probability ``noise`` a trace receives one
    perturbation: a random insertion, an adjacent swap or a skipped event.
    """

    seed: int
    n_traces: int = 100
    alphabet_size: int = 10
    branching: int = 2
    noise: float = 0.0
    min_len: int = 5
    max_len: int = 15
    name: str = "synthetic"

    def validate(self) -> None:
        if self.n_traces < 1:
            raise ConfigError("n_traces must be >= 1")
        if self.alphabet_size < 1:
            raise ConfigError("alphabet_size must be >= 1")
        if not 1 <= self.branching <= self.alphabet_size:
            raise ConfigError("branching must lie in [1, alphabet_size]")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise must lie in [0, 1]")
        if self.min_len < 1 or self.max_len < self.min_len:
            raise ConfigError(f"empty trace-length range [{self.min_len}, {self.max_len}]")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator fields: {sorted(unknown)}")
        if "seed" not in d:
            raise ConfigError("generator spec requires a seed")
        try:
            spec = cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        spec.validate()
        return spec


def activity_names(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"act_{i:0{width}d}" for i in range(n)]


def generate_log(spec: GeneratorSpec) -> EventLog:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    names = activity_names(spec.alphabet_size)
    A = spec.alphabet_size
    successors = [
        rng.choice(A, size=spec.branching, replace=False) for _ in range(A)
    ]
    start = 0

    traces = []
    for i in range(spec.n_traces):
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        seq = [start]
        while len(seq) < length:
            succ = successors[seq[-1]]
            seq.append(int(succ[rng.integers(len(succ))]))
        if spec.noise > 0 and rng.random() < spec.noise:
            op = int(rng.integers(3))
            if op == 0:
                seq.insert(int(rng.integers(len(seq) + 1)), int(rng.integers(A)))
            elif op == 1 and len(seq) > 1:
                j = int(rng.integers(len(seq) - 1))
                seq[j], seq[j + 1] = seq[j + 1], seq[j]
            elif op == 2 and len(seq) > 1:
                del seq[int(rng.integers(len(seq)))]
        traces.append(Trace(f"case_{i}", tuple(Event(names[a]) for a in seq)))
    return EventLog(spec.name, tuple(traces))


def generate_corpus(spec: dict) -> list[EventLog]:
    """Generate ``n_logs`` logs spread round-robin over behavioural regimes.

    ``spec`` looks like::

        {"seed": 7, "n_logs": 30,
         "regimes": {"structured": {"alphabet_size": [4, 6], "noise": 0.0, ...}, ...}}

    Each regime parameter is either a fixed value or an inclusive ``[lo, hi]``
    range sampled per log (uniform real for ``noise``, integer otherwise).
    """
    try:
        seed = int(spec["seed"])
        n_logs = int(spec["n_logs"])
        regimes = spec["regimes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"corpus spec needs seed, n_logs and regimes ({exc})") from None
    if n_logs < 1 or not regimes:
        raise ConfigError("corpus spec needs n_logs >= 1 and at least one regime")
    names = list(regimes)
    logs = []
    for i in range(n_logs):
        regime = names[i % len(names)]
        rng = np.random.default_rng([seed, i])
        params = {}
        for key, value in regimes[regime].items():
            if isinstance(value, (list, tuple)):
                if len(value) != 2 or value[0] > value[1]:
                    raise ConfigError(f"bad range for {regime}.{key}: {value}")
                lo, hi = value
                params[key] = float(rng.uniform(lo, hi)) if key == "noise" else int(rng.integers(lo, hi + 1))
            else:
                params[key] = value
        params["branching"] = min(params.get("branching", 2), params.get("alphabet_size", 10))
        params.update(seed=int(rng.integers(2**31)), name=f"{regime}_{i:04d}")
        logs.append(generate_log(GeneratorSpec.from_dict(params)))
    return logs
