"""Array-backed CART classification tree."""

from __future__ import annotations

import math

import numpy as np

CRITERIA = ("gini", "entropy")


def _impurity(counts: np.ndarray, criterion: str) -> np.ndarray:
    """Impurity along the last axis of a class-count array."""
    total = counts.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(total > 0, counts / total, 0.0)
        if criterion == "gini":
            return 1.0 - (p * p).sum(axis=-1)
        logp = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
        return -(p * logp).sum(axis=-1)


def n_candidate_features(max_features, n_features: int) -> int:
    if max_features == "sqrt":
        m = math.ceil(math.sqrt(n_features))
    else:
        m = math.ceil(float(max_features) * n_features)
    return min(max(m, 1), n_features)


class DecisionTree:
    """Binary classification tree stored as parallel node arrays.

    ``feature[i] == -1`` marks a leaf; ``value[i]`` holds the class counts of
    the training samples routed to node ``i`` (for every node, not just leaves).
    """

    def __init__(self, criterion="gini", min_samples_split=2, min_samples_leaf=1,
                 max_features=1.0):
        if criterion not in CRITERIA:
            raise ValueError(f"criterion must be one of {CRITERIA}")
        self.criterion = criterion
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features

    def fit(self, X, y, n_classes: int, rng: np.random.Generator):
        """Grow the tree on integer class indices ``y`` in ``[0, n_classes)``."""
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_features = X.shape[1]
        self.n_classes = n_classes
        self._k = n_candidate_features(self.max_features, self.n_features)
        onehot = np.eye(n_classes)[y]

        feature, threshold, left, right, value = [], [], [], [], []
        stack = [(np.arange(len(y)), -1, False)]
        while stack:
            idx, parent, is_right = stack.pop()
            node = len(feature)
            if parent >= 0:
                (right if is_right else left)[parent] = node
            counts = onehot[idx].sum(axis=0)
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(counts)
            if len(idx) < self.min_samples_split or np.count_nonzero(counts) <= 1:
                continue
            split = self._best_split(X[idx], onehot[idx], rng)
            if split is None:
                continue
            f, thr = split
            go_left = X[idx, f] <= thr
            feature[node] = f
            threshold[node] = thr
            # right first so that the left child gets the next node id
            stack.append((idx[~go_left], node, True))
            stack.append((idx[go_left], node, False))

        self.feature = np.array(feature, dtype=int)
        self.threshold = np.array(threshold, dtype=float)
        self.left = np.array(left, dtype=int)
        self.right = np.array(right, dtype=int)
        self.value = np.array(value, dtype=float).reshape(-1, n_classes)
        return self

    def _best_split(self, Xn, Yn, rng):
        n_feat = Xn.shape[1]
        order = rng.permutation(n_feat)
        best = self._search(Xn, Yn, order[: self._k])
        if best is None and self._k < n_feat:
            # every sampled feature was constant here; fall back to the rest
            best = self._search(Xn, Yn, order[self._k:])
        return best

    def _search(self, Xn, Yn, feats):
        m = len(Xn)
        leaf = self.min_samples_leaf
        if m < 2 * leaf:
            return None
        xs = Xn[:, feats]
        srt = np.argsort(xs, axis=0, kind="stable")
        xv = np.take_along_axis(xs, srt, axis=0)
        left_counts = np.cumsum(Yn[srt], axis=0)[:-1]          # (m-1, f, C)
        right_counts = Yn.sum(axis=0) - left_counts
        n_left = np.arange(1, m)[:, None]
        valid = (xv[1:] > xv[:-1]) & (n_left >= leaf) & (m - n_left >= leaf)
        if not valid.any():
            return None
        cost = (n_left * _impurity(left_counts, self.criterion)
                + (m - n_left) * _impurity(right_counts, self.criterion)) / m
        cost = np.where(valid, cost, np.inf)
        # first minimum in (feature order, position) order
        pos, fi = np.unravel_index(np.argmin(cost.T), cost.T.shape)[::-1]
        thr = 0.5 * (xv[pos, fi] + xv[pos + 1, fi])
        if not thr < xv[pos + 1, fi]:
            thr = xv[pos, fi]
        return int(feats[fi]), float(thr)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.where(internal, f, 0)] <= self.threshold[node]
            nxt = np.where(go_left, self.left[node], self.right[node])
            node = np.where(internal, nxt, node)

    def predict_proba(self, X) -> np.ndarray:
        counts = self.value[self.apply(X)]
        return counts / counts.sum(axis=1, keepdims=True)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def used_features(self) -> set[int]:
        return set(int(f) for f in self.feature if f >= 0)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, n_features: int, n_classes: int, **params) -> "DecisionTree":
        tree = cls(**params)
        tree.n_features = n_features
        tree.n_classes = n_classes
        tree.feature = np.array(d["feature"], dtype=int)
        tree.threshold = np.array(d["threshold"], dtype=float)
        tree.left = np.array(d["left"], dtype=int)
        tree.right = np.array(d["right"], dtype=int)
        tree.value = np.array(d["value"], dtype=float).reshape(-1, n_classes)
        return tree
