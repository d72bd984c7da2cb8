"""Binary Relevance meta-model with one decomposition per output."""

from __future__ import annotations

import json
import logging
from collections import Counter
from typing import IO, Mapping

import numpy as np

from ..errors import SchemaMismatchError
from ..featurization import FEATURE_NAMES, SCHEMA_VERSION
from .forest import HyperParams, RandomForest

logger = logging.getLogger(__name__)

OUTPUTS = ("encoding", "clustering")
MODEL_SCHEMA_VERSION = "meta-model/1"


def _majority(labels) -> str:
    counts = Counter(labels)
    return min(counts, key=lambda lab: (-counts[lab], lab))


class BinaryRelevance:
    """One ``label vs rest`` forest per label observed in training.

    Prediction picks the label whose forest gives the highest positive-class
    score, breaking ties lexicographically; when every score is zero the
    training majority label is returned.
    """

    def __init__(self, hyperparams: HyperParams = HyperParams(), seed: int = 0):
        self.hyperparams = hyperparams
        self.seed = seed

    def fit(self, X, y):
        y = [str(v) for v in y]
        self.labels = sorted(set(y))
        self.majority = _majority(y)
        if len(self.labels) == 1:
            logger.warning("single label %r: constant predictor", self.labels[0])
        y_arr = np.array(y, dtype=object)
        seeds = np.random.SeedSequence(self.seed).generate_state(len(self.labels))
        self.forests = {
            lab: RandomForest(self.hyperparams, int(s)).fit(X, (y_arr == lab).astype(int))
            for lab, s in zip(self.labels, seeds)
        }
        return self

    @property
    def q(self) -> int:
        return len(self.forests)

    def scores(self, X) -> np.ndarray:
        """Positive-class score of every label's forest, shape (n, q)."""
        X = np.asarray(X, dtype=float)
        cols = []
        for lab in self.labels:
            forest = self.forests[lab]
            proba = forest.predict_proba(X)
            classes = forest.classes_.tolist()
            cols.append(proba[:, classes.index(1)] if 1 in classes else np.zeros(len(X)))
        return np.column_stack(cols)

    def predict(self, X) -> np.ndarray:
        return self.predict_with_scores(X)[0]

    def predict_with_scores(self, X):
        sc = self.scores(X)
        best = sc.argmax(axis=1)
        labels = np.array(self.labels, dtype=object)[best]
        labels[sc.max(axis=1) <= 0] = self.majority
        return labels, sc

    def used_features(self) -> set[int]:
        return set().union(*(f.used_features() for f in self.forests.values()))

    def to_dict(self) -> dict:
        return {
            "hyperparams": self.hyperparams.as_dict(),
            "seed": self.seed,
            "labels": self.labels,
            "majority": self.majority,
            "forests": {lab: f.to_dict() for lab, f in self.forests.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryRelevance":
        br = cls(HyperParams(**d["hyperparams"]), d["seed"])
        br.labels = list(d["labels"])
        br.majority = d["majority"]
        br.forests = {lab: RandomForest.from_dict(f) for lab, f in d["forests"].items()}
        return br


class MultiOutputModel:
    """Independent Binary Relevance models for the encoding and clustering outputs."""

    def __init__(self, models: Mapping[str, BinaryRelevance],
                 feature_names=FEATURE_NAMES, feature_schema=SCHEMA_VERSION, meta=None):
        self.models = dict(models)
        self.feature_names = tuple(feature_names)
        self.feature_schema = feature_schema
        self.meta = dict(meta or {})

    def check_features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_names):
            raise SchemaMismatchError(
                f"model expects {len(self.feature_names)} features, got {X.shape[1]}"
            )
        return X

    def predict(self, X) -> dict[str, np.ndarray]:
        X = self.check_features(X)
        return {out: br.predict(X) for out, br in self.models.items()}

    def used_features(self) -> set[int]:
        return set().union(*(br.used_features() for br in self.models.values()))

    def save(self, sink: IO[str]) -> None:
        json.dump({
            "schema_version": MODEL_SCHEMA_VERSION,
            "feature_schema": self.feature_schema,
            "feature_names": list(self.feature_names),
            "meta": self.meta,
            "outputs": {out: br.to_dict() for out, br in self.models.items()},
        }, sink, indent=1, sort_keys=True)
        sink.write("\n")

    @classmethod
    def load(cls, source: IO[str]) -> "MultiOutputModel":
        d = json.load(source)
        if d.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise SchemaMismatchError(
                f"model file schema {d.get('schema_version')!r} != {MODEL_SCHEMA_VERSION!r}"
            )
        if d.get("feature_schema") != SCHEMA_VERSION:
            raise SchemaMismatchError(
                f"model was trained on feature schema {d.get('feature_schema')!r}, "
                f"this build extracts {SCHEMA_VERSION!r}"
            )
        models = {out: BinaryRelevance.from_dict(v) for out, v in d["outputs"].items()}
        return cls(models, d["feature_names"], d["feature_schema"], d.get("meta"))


def fit_multi_output(db, hyperparams: Mapping[str, HyperParams] | HyperParams | None = None,
                     seed: int = 0) -> MultiOutputModel:
    """Train one Binary Relevance model per output on the full feature matrix."""
    if hyperparams is None or isinstance(hyperparams, HyperParams):
        hyperparams = {out: hyperparams or HyperParams() for out in OUTPUTS}
    X = db.X()
    seeds = np.random.SeedSequence(seed).generate_state(len(OUTPUTS))
    models = {
        out: BinaryRelevance(hyperparams[out], int(s)).fit(X, db.targets(out))
        for out, s in zip(OUTPUTS, seeds)
    }
    return MultiOutputModel(models, db.feature_names)


def predict_multi_output(model: MultiOutputModel, features) -> tuple[str, str]:
    """(encoding, clustering) recommendation for a single feature vector."""
    x = np.asarray(getattr(features, "values", features), dtype=float)[None, :]
    pred = model.predict(x)
    return str(pred["encoding"][0]), str(pred["clustering"][0])
