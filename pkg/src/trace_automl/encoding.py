"""Trace encoders: one-hot, n-gram occurrence and position profile.

Each encoder computes one row per distinct variant and broadcasts it back to
the traces, so identical traces always get identical rows.
"""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import IO, Callable

import numpy as np

from .event_log import EventLog

ENCODINGS = ("onehot", "bigram", "trigram", "position_profile")


@dataclass(frozen=True)
class EncodedMatrix:
    rows: np.ndarray
    columns: tuple[str, ...]
    encoder_id: str
    row_index: tuple[str, ...]  # case id of each row, in trace order

    @property
    def shape(self):
        return self.rows.shape

    def to_csv(self, sink: IO[str]) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["case_id"] + list(self.columns))
        for cid, row in zip(self.row_index, self.rows):
            writer.writerow([cid] + [repr(float(v)) for v in row])


def _broadcast(log: EventLog, encode_variant: Callable, columns, encoder_id) -> EncodedMatrix:
    variants = sorted(set(log.sequences))
    vindex = {v: i for i, v in enumerate(variants)}
    width = max(len(columns), 1)
    vrows = np.zeros((len(variants), width))
    for i, v in enumerate(variants):
        encode_variant(v, vrows[i])
    rows = vrows[[vindex[s] for s in log.sequences]]
    if not columns:
        columns = ("<none>",)
    return EncodedMatrix(rows, tuple(columns), encoder_id, tuple(t.case_id for t in log.traces))


def encode_onehot(log: EventLog) -> EncodedMatrix:
    col = {a: i for i, a in enumerate(log.alphabet)}

    def fill(seq, out):
        out[[col[a] for a in seq]] = 1.0

    return _broadcast(log, fill, log.alphabet, "onehot")


def _ngrams(seq, n):
    return {tuple(seq[i:i + n]) for i in range(len(seq) - n + 1)}


def encode_ngram(log: EventLog, n: int) -> EncodedMatrix:
    """Binary occurrence of every contiguous n-gram observed in the log.

    A log without any n-gram (all traces shorter than ``n``) yields a single
    all-zero column so the matrix keeps ``d >= 1``.
    """
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    vocab = sorted(set().union(*(_ngrams(s, n) for s in set(log.sequences))))
    col = {g: i for i, g in enumerate(vocab)}

    def fill(seq, out):
        grams = _ngrams(seq, n)
        if grams:
            out[[col[g] for g in grams]] = 1.0

    names = ["|".join(g) for g in vocab]
    return _broadcast(log, fill, names, "bigram" if n == 2 else "trigram")


@dataclass(frozen=True)
class PositionProfile:
    freq: dict[tuple[int, str], float]
    max_len: int

    def __call__(self, position: int, activity: str) -> float:
        return self.freq.get((position, activity), 0.0)


def build_position_profile(log: EventLog) -> PositionProfile:
    at_position: dict[int, Counter] = defaultdict(Counter)
    for seq in log.sequences:
        for p, a in enumerate(seq):
            at_position[p][a] += 1
    freq = {}
    for p, counter in at_position.items():
        reached = sum(counter.values())  # traces with length > p
        for a, c in counter.items():
            freq[(p, a)] = c / reached
    return PositionProfile(freq, max(len(s) for s in log.sequences))


def encode_position_profile(log: EventLog, profile: PositionProfile | None = None) -> EncodedMatrix:
    if profile is None:
        profile = build_position_profile(log)

    def fill(seq, out):
        for p, a in enumerate(seq[:profile.max_len]):
            out[p] = profile(p, a)

    names = [f"pos{p}" for p in range(profile.max_len)]
    return _broadcast(log, fill, names, "position_profile")


def encode(log: EventLog, encoding: str) -> EncodedMatrix:
    if encoding == "onehot":
        return encode_onehot(log)
    if encoding == "bigram":
        return encode_ngram(log, 2)
    if encoding == "trigram":
        return encode_ngram(log, 3)
    if encoding == "position_profile":
        return encode_position_profile(log)
    raise ValueError(f"unknown encoding {encoding!r}; choose from {ENCODINGS}")
