"""Splitting, tuning, scoring, baselines and permutation importance for the meta-model."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from ..errors import ConfigError
from .forest import HyperParams
from .multioutput import OUTPUTS, BinaryRelevance, MultiOutputModel, fit_multi_output

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------------
# Scores
# ----------------------------------------------------------------------------

def _per_class_f1(y_true, y_pred):
    y_true = [str(v) for v in y_true]
    y_pred = [str(v) for v in y_pred]
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    if not y_true:
        raise ValueError("empty input")
    labels = sorted(set(y_true) | set(y_pred))
    support = Counter(y_true)
    predicted = Counter(y_pred)
    tp = Counter(t for t, p in zip(y_true, y_pred) if t == p)
    f1 = {}
    for lab in labels:
        denom = support[lab] + predicted[lab]
        f1[lab] = 2 * tp[lab] / denom if denom else 0.0
    return f1, support


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean of per-class F1 over every label seen in either input."""
    f1, _ = _per_class_f1(y_true, y_pred)
    return float(np.mean(list(f1.values())))


def weighted_f1(y_true, y_pred) -> float:
    f1, support = _per_class_f1(y_true, y_pred)
    total = sum(support.values())
    return float(sum(f1[lab] * support[lab] for lab in f1) / total)


def micro_f1(y_true, y_pred) -> float:
    """F1 of the pooled per-class TP/FP/FN counts.

    For single-label outputs every miss is one FP and one FN, so this equals
    accuracy; it is computed from the pooled counts anyway.
    """
    y_true = [str(v) for v in y_true]
    y_pred = [str(v) for v in y_pred]
    if len(y_true) != len(y_pred):
        raise ValueError("y_true and y_pred differ in length")
    if not y_true:
        raise ValueError("empty input")
    tp = sum(t == p for t, p in zip(y_true, y_pred))
    fp = fn = len(y_true) - tp
    return 2 * tp / (2 * tp + fp + fn)


def accuracy(y_true, y_pred) -> float:
    if len(y_true) == 0:
        raise ValueError("empty input")
    return float(np.mean([str(a) == str(b) for a, b in zip(y_true, y_pred)]))


# ----------------------------------------------------------------------------
# Splitting
# ----------------------------------------------------------------------------

def _allocate(class_sizes: dict, total: int) -> dict:
    """Largest-remainder apportionment of ``total`` items across classes."""
    n = sum(class_sizes.values())
    quota = {c: s * total / n for c, s in class_sizes.items()}
    alloc = {c: min(int(math.floor(q)), class_sizes[c]) for c, q in quota.items()}
    order = sorted(class_sizes, key=lambda c: (-(quota[c] - math.floor(quota[c])), c))
    i = 0
    while sum(alloc.values()) < total:
        c = order[i % len(order)]
        if alloc[c] < class_sizes[c]:
            alloc[c] += 1
        i += 1
    return alloc


def split(db, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded train/validation/test partition of a meta-database.

    Stratified by clustering target when every class has at least 3
    instances; otherwise a plain shuffled split.
    """
    n = len(db)
    if n < 3:
        raise ConfigError(f"need at least 3 meta-instances to split, got {n}")
    n_val = max(1, round(fractions[1] * n))
    n_test = max(1, round(fractions[2] * n))
    if n - n_val - n_test < 1:
        raise ConfigError(f"too few meta-instances ({n}) for a {fractions} split")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    labels = db.targets("clustering")
    counts = Counter(labels)
    if min(counts.values()) >= 3:
        by_class = {c: [i for i in perm if labels[i] == c] for c in sorted(counts)}
        test_alloc = _allocate(counts, n_test)
        rest = {c: counts[c] - test_alloc[c] for c in counts}
        val_alloc = _allocate(rest, n_val)
        test, val, train = [], [], []
        for c, members in by_class.items():
            test += members[: test_alloc[c]]
            val += members[test_alloc[c]: test_alloc[c] + val_alloc[c]]
            train += members[test_alloc[c] + val_alloc[c]:]
        pos = {int(i): k for k, i in enumerate(perm)}
        test, val, train = (sorted(part, key=pos.get) for part in (test, val, train))
    else:
        logger.warning("some clustering target has < 3 instances; split is not stratified")
        test = list(perm[:n_test])
        val = list(perm[n_test:n_test + n_val])
        train = list(perm[n_test + n_val:])
    return db.subset(train), db.subset(val), db.subset(test)


def kfold_indices(n: int, folds: int, seed: int):
    folds = max(2, min(folds, n))
    perm = np.random.default_rng(seed).permutation(n)
    chunks = np.array_split(perm, folds)
    for k in range(folds):
        test = np.sort(chunks[k])
        train = np.sort(np.concatenate([c for j, c in enumerate(chunks) if j != k]))
        yield train, test


# ----------------------------------------------------------------------------
# Grid search
# ----------------------------------------------------------------------------

DEFAULT_GRID = {
    "n_trees": [50, 100, 200],
    "criterion": ["gini", "entropy"],
    "min_samples_split": [2, 5],
    "min_samples_leaf": [1, 3],
    "max_features": ["sqrt", 0.5, 1.0],
}

# A 6-point slice of the default grid for quick runs.
SMALL_GRID = {
    "n_trees": [50],
    "criterion": ["gini"],
    "min_samples_split": [2],
    "min_samples_leaf": [1, 3],
    "max_features": ["sqrt", 0.5, 1.0],
}


def expand_grid(grid: dict) -> list[HyperParams]:
    keys = list(grid)
    return [HyperParams(**dict(zip(keys, combo))) for combo in itertools.product(*grid.values())]


@dataclass
class GridSearchResult:
    best: dict[str, HyperParams]
    cv_scores: dict[str, list[float]]
    candidates: list[HyperParams]
    validation: dict[str, list[tuple[HyperParams, float]]] = field(default_factory=dict)


def grid_search(train, validation, grid, folds: int = 5, seed: int = 0) -> GridSearchResult:
    """Pick, per output, the combination with the best mean cross-validated macro F1.

    Ties go to the earliest combination in grid order. The validation split
    is only used to score the two best combinations for the report.
    """
    candidates = expand_grid(grid) if isinstance(grid, dict) else list(grid)
    if not candidates:
        raise ConfigError("empty hyperparameter grid")
    X = train.X()
    best, cv_scores, val_scores = {}, {}, {}
    for out in OUTPUTS:
        y = np.array(train.targets(out), dtype=object)
        scores = []
        for hp in candidates:
            fold_scores = []
            for f, (tr, te) in enumerate(kfold_indices(len(y), folds, seed)):
                br = BinaryRelevance(hp, seed + f).fit(X[tr], y[tr])
                fold_scores.append(macro_f1(y[te], br.predict(X[te])))
            scores.append(float(np.mean(fold_scores)))
        cv_scores[out] = scores
        order = sorted(range(len(candidates)), key=lambda i: (-scores[i], i))
        best[out] = candidates[order[0]]
        if validation is not None and len(validation):
            Xv, yv = validation.X(), validation.targets(out)
            val_scores[out] = [
                (candidates[i], macro_f1(yv, BinaryRelevance(candidates[i], seed).fit(X, y).predict(Xv)))
                for i in order[:2]
            ]
    return GridSearchResult(best, cv_scores, candidates, val_scores)


# ----------------------------------------------------------------------------
# Reports and baselines
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class OutputScores:
    macro_f1: float
    weighted_f1: float
    micro_f1: float
    accuracy: float
    macro_f1_std: float = 0.0
    weighted_f1_std: float = 0.0
    micro_f1_std: float = 0.0
    accuracy_std: float = 0.0

    def mean_std(self, metric: str) -> tuple[float, float]:
        return getattr(self, metric), getattr(self, f"{metric}_std")


SCORE_METRICS = ("macro_f1", "weighted_f1", "micro_f1", "accuracy")


@dataclass(frozen=True)
class ReportRow:
    name: str
    outputs: dict[str, OutputScores]

    @property
    def mean_f1(self) -> float:
        return float(np.mean([s.macro_f1 for s in self.outputs.values()]))

    @property
    def mean_weighted_f1(self) -> float:
        return self.mean("weighted_f1")

    @property
    def mean_micro_f1(self) -> float:
        return self.mean("micro_f1")

    def mean(self, metric: str) -> float:
        return float(np.mean([getattr(s, metric) for s in self.outputs.values()]))


def score_predictions(y_true, y_pred) -> OutputScores:
    return OutputScores(macro_f1(y_true, y_pred), weighted_f1(y_true, y_pred),
                        micro_f1(y_true, y_pred), accuracy(y_true, y_pred))


def evaluate_model(model: MultiOutputModel, test) -> ReportRow:
    pred = model.predict(test.X())
    return ReportRow("meta-model", {out: score_predictions(test.targets(out), pred[out])
                                    for out in OUTPUTS})


def majority_baseline(train, test) -> ReportRow:
    from .multioutput import _majority

    outputs = {}
    for out in OUTPUTS:
        label = _majority(train.targets(out))
        outputs[out] = score_predictions(test.targets(out), [label] * len(test))
    return ReportRow("majority", outputs)


def random_baseline(train, test, repeats: int = 30, seed: int = 0) -> ReportRow:
    """Uniform draws over the labels observed in training; mean and std over repeats."""
    rng = np.random.default_rng(seed)
    outputs = {}
    for out in OUTPUTS:
        labels = sorted(set(train.targets(out)))
        truth = test.targets(out)
        runs = [score_predictions(truth, [labels[i] for i in rng.integers(len(labels), size=len(test))])
                for _ in range(repeats)]
        m = np.array([[getattr(r, k) for k in SCORE_METRICS] for r in runs])
        mean, std = m.mean(axis=0), m.std(axis=0)
        outputs[out] = OutputScores(*(float(v) for v in mean), *(float(v) for v in std))
    return ReportRow("random", outputs)


@dataclass
class EvaluationReport:
    rows: list[ReportRow]
    notes: list[str] = field(default_factory=list)

    def row(self, name: str) -> ReportRow:
        return next(r for r in self.rows if r.name == name)

    def to_text(self) -> str:
        heads = {"macro_f1": "macro F1", "weighted_f1": "weighted F1", "micro_f1": "micro F1",
                 "accuracy": "accuracy"}
        lines = [f"{'predictor':<12} {'output':<11} "
                 + " ".join(f"{heads[m]:>16}" for m in SCORE_METRICS)]
        for r in self.rows:
            for out, s in r.outputs.items():
                cells = []
                for m in SCORE_METRICS:
                    v, sd = s.mean_std(m)
                    cells.append(f"{v:.3f} (+-{sd:.3f})" if r.name == "random" else f"{v:.3f}")
                lines.append(f"{r.name:<12} {out:<11} " + " ".join(f"{c:>16}" for c in cells))
            lines.append(f"{r.name:<12} {'mean':<11} "
                         + " ".join(f"{r.mean(m):>16.3f}" for m in SCORE_METRICS))
        lines += self.notes
        return "\n".join(lines) + "\n"

    def to_csv(self, sink: IO[str]) -> None:
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["predictor", "output"]
                        + [c for m in SCORE_METRICS for c in (m, f"{m}_std")])
        for r in self.rows:
            for out, s in r.outputs.items():
                writer.writerow([r.name, out]
                                + [f"{x:.6f}" for m in SCORE_METRICS for x in s.mean_std(m)])
            writer.writerow([r.name, "mean"]
                            + [c for m in SCORE_METRICS for c in (f"{r.mean(m):.6f}", "")])


@dataclass
class TrainingRun:
    model: MultiOutputModel
    report: EvaluationReport
    search: GridSearchResult
    train: object
    validation: object
    test: object


def train_and_report(db, grid=None, seed: int = 0, folds: int = 5,
                     fractions=(0.8, 0.1, 0.1), random_repeats: int = 30) -> TrainingRun:
    """Split, tune, fit on the training part and score against both baselines."""
    train, validation, test = split(db, fractions, seed)
    search = grid_search(train, validation, DEFAULT_GRID if grid is None else grid, folds, seed)
    model = fit_multi_output(train, search.best, seed)
    model.meta.update(
        seed=seed,
        split=list(fractions),
        n_instances=[len(train), len(validation), len(test)],
        hyperparams={out: hp.as_dict() for out, hp in search.best.items()},
    )
    notes = [
        "",
        f"split (train/validation/test): {len(train)}/{len(validation)}/{len(test)}, seed {seed}",
        "micro F1 pools TP/FP/FN over labels; for single-label outputs it equals accuracy",
    ]
    for out in OUTPUTS:
        notes.append(f"{out}: {search.best[out]} (cv macro F1 "
                     f"{max(search.cv_scores[out]):.3f} over {len(search.candidates)} combinations)")
    report = EvaluationReport(
        [evaluate_model(model, test), majority_baseline(train, test),
         random_baseline(train, test, random_repeats, seed)],
        notes,
    )
    return TrainingRun(model, report, search, train, validation, test)


# ----------------------------------------------------------------------------
# Permutation importance
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Importance:
    feature_names: tuple[str, ...]
    per_output: dict[str, np.ndarray]
    combined: np.ndarray
    method: str = "permutation (mean macro-F1 drop, clamped at 0, normalised)"

    def top(self, n: int = 10, output: str | None = None) -> list[tuple[str, float]]:
        vals = self.combined if output is None else self.per_output[output]
        order = sorted(range(len(vals)), key=lambda i: (-vals[i], i))[:n]
        return [(self.feature_names[i], float(vals[i])) for i in order]

    def to_csv(self, sink: IO[str]) -> None:
        sink.write(f"# method={self.method}\n")
        writer = csv.writer(sink, lineterminator="\n")
        writer.writerow(["feature", *(f"importance_{o}" for o in self.per_output), "importance_combined"])
        for i, name in enumerate(self.feature_names):
            writer.writerow([name, *(f"{v[i]:.6f}" for v in self.per_output.values()),
                             f"{self.combined[i]:.6f}"])


def _normalise(drops: np.ndarray) -> np.ndarray:
    drops = np.clip(drops, 0.0, None)
    total = drops.sum()
    return drops / total if total > 0 else drops


def permutation_importance(model: MultiOutputModel, test, repeats: int = 10,
                           seed: int = 0) -> Importance:
    """Mean drop in macro F1 when one feature column of ``test`` is shuffled.

    Features no tree splits on cannot change a prediction and are skipped.
    The combined score uses the mean F1 over outputs.
    """
    X = model.check_features(test.X())
    truth = {out: test.targets(out) for out in OUTPUTS}

    def scores(Xp):
        pred = model.predict(Xp)
        return np.array([macro_f1(truth[o], pred[o]) for o in OUTPUTS])

    base = scores(X)
    n_feat = X.shape[1]
    drops = np.zeros((n_feat, len(OUTPUTS)))
    used = model.used_features()
    rng = np.random.default_rng(seed)
    for j in range(n_feat):
        col_rng = np.random.default_rng(rng.integers(2**63))
        if j not in used or np.ptp(X[:, j]) == 0:
            continue
        acc = np.zeros(len(OUTPUTS))
        for _ in range(repeats):
            Xp = X.copy()
            Xp[:, j] = X[col_rng.permutation(len(X)), j]
            acc += base - scores(Xp)
        drops[j] = acc / repeats
    per_output = {out: _normalise(drops[:, i]) for i, out in enumerate(OUTPUTS)}
    combined = _normalise(drops.mean(axis=1))
    return Importance(tuple(model.feature_names), per_output, combined)
