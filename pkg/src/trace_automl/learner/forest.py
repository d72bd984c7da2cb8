"""Bagged random forest of :class:`DecisionTree` classifiers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ConfigError
from .tree import CRITERIA, DecisionTree


@dataclass(frozen=True)
class HyperParams:
    n_trees: int = 100
    criterion: str = "gini"
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: float | str = "sqrt"

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.criterion not in CRITERIA:
            raise ConfigError(f"criterion must be one of {CRITERIA}")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if self.max_features != "sqrt" and not (
            isinstance(self.max_features, (int, float)) and 0 < self.max_features <= 1
        ):
            raise ConfigError("max_features must be 'sqrt' or a fraction in (0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)

    def tree_params(self) -> dict:
        return dict(criterion=self.criterion, min_samples_split=self.min_samples_split,
                    min_samples_leaf=self.min_samples_leaf, max_features=self.max_features)


class RandomForest:
    """Each tree sees a bootstrap sample (N draws with replacement) and a fresh
    random feature subset at every split. Per-tree seeds are spawned from the
    forest seed, so results do not depend on the order trees are trained in.
    """

    def __init__(self, hyperparams: HyperParams = HyperParams(), seed: int = 0, bootstrap=True):
        self.hyperparams = hyperparams
        self.seed = seed
        self.bootstrap = bootstrap

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] == 0:
            raise ConfigError("feature matrix must be 2-D with at least one feature")
        if len(X) < 2:
            raise ConfigError("need at least 2 samples")
        y = np.asarray(y)
        self.classes_ = np.array(sorted(set(y.tolist())), dtype=object)
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        y_idx = np.array([lookup[v] for v in y.tolist()], dtype=int)
        self.n_features = X.shape[1]
        n = len(X)
        self._pack = None
        self.trees = []
        for child in np.random.SeedSequence(self.seed).spawn(self.hyperparams.n_trees):
            rng = np.random.default_rng(child)
            sample = rng.integers(0, n, size=n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(**self.hyperparams.tree_params())
            tree.fit(X[sample], y_idx[sample], len(self.classes_), rng)
            self.trees.append(tree)
        return self

    def predict_proba(self, X) -> np.ndarray:
        """Mean of the trees' normalised leaf class distributions."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected {self.n_features} features, got {X.shape[-1] if X.ndim else 0}"
            )
        feature, threshold, left, right, leaf_proba, roots = self._packed()
        rows = np.arange(len(X))[None, :]
        node = np.repeat(roots[:, None], len(X), axis=1)  # (n_trees, n_samples)
        while True:
            f = feature[node]
            internal = f >= 0
            if not internal.any():
                break
            go_left = X[rows, np.where(internal, f, 0)] <= threshold[node]
            node = np.where(internal, np.where(go_left, left[node], right[node]), node)
        return leaf_proba[node].mean(axis=0)

    def _packed(self):
        """All trees concatenated into flat node arrays with global child ids."""
        if getattr(self, "_pack", None) is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees])
            pairs = list(zip(self.trees, offsets))
            left = [np.where(t.left >= 0, t.left + off, -1) for t, off in pairs]
            right = [np.where(t.right >= 0, t.right + off, -1) for t, off in pairs]
            value = np.concatenate([t.value for t in self.trees])
            self._pack = (
                np.concatenate([t.feature for t in self.trees]),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate(left),
                np.concatenate(right),
                value / value.sum(axis=1, keepdims=True),
                offsets[:-1],
            )
        return self._pack

    def predict(self, X) -> np.ndarray:
        # argmax keeps the first maximum, i.e. the lexicographically smallest label
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def used_features(self) -> set[int]:
        return set().union(*(t.used_features() for t in self.trees))

    def to_dict(self) -> dict:
        return {
            "hyperparams": self.hyperparams.as_dict(),
            "seed": self.seed,
            "bootstrap": self.bootstrap,
            "classes": [c for c in self.classes_.tolist()],
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForest":
        hp = HyperParams(**d["hyperparams"])
        forest = cls(hp, d["seed"], d["bootstrap"])
        forest.classes_ = np.array(d["classes"], dtype=object)
        forest.n_features = d["n_features"]
        forest._pack = None
        forest.trees = [
            DecisionTree.from_dict(t, forest.n_features, len(forest.classes_), **hp.tree_params())
            for t in d["trees"]
        ]
        return forest


def fit_forest(X, y, hp: HyperParams = HyperParams(), seed: int = 0) -> RandomForest:
    return RandomForest(hp, seed).fit(X, y)


def predict_forest(model: RandomForest, X) -> tuple[np.ndarray, np.ndarray]:
    """Predicted labels and the per-class scores they were chosen from."""
    proba = model.predict_proba(X)
    return model.classes_[proba.argmax(axis=1)], proba
