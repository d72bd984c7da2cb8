import io
import json
import logging

import numpy as np
import pytest
from sklearn.metrics import f1_score

from trace_automl.errors import ConfigError, SchemaMismatchError
from trace_automl.featurization import N_FEATURES, MetaFeatureVector
from trace_automl.learner import (
    BinaryRelevance,
    DecisionTree,
    HyperParams,
    MultiOutputModel,
    RandomForest,
    accuracy,
    evaluate_model,
    fit_forest,
    fit_multi_output,
    grid_search,
    macro_f1,
    majority_baseline,
    micro_f1,
    permutation_importance,
    predict_forest,
    predict_multi_output,
    random_baseline,
    split,
    weighted_f1,
)
from trace_automl.learner.evaluation import EvaluationReport, expand_grid, kfold_indices
from trace_automl.learner.tree import n_candidate_features
from trace_automl.metadb import MetaDatabase, MetaInstance


def make_db(X, enc, clu):
    return MetaDatabase(tuple(
        MetaInstance(f"log{i:03d}", MetaFeatureVector(tuple(float(v) for v in row)), e, c)
        for i, (row, e, c) in enumerate(zip(X, enc, clu))
    ))


def separable_db(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, size=(n, N_FEATURES))
    enc = np.where(X[:, 0] > 0, "onehot", "bigram")
    clu = np.where(X[:, 1] > 0.2, "kmeans_k3", "dbscan_eps0.1")
    return make_db(X, enc, clu)


def gini(y):
    _, c = np.unique(y, return_counts=True)
    p = c / c.sum()
    return 1 - (p ** 2).sum()


class TestHyperParams:
    @pytest.mark.parametrize("kw", [dict(n_trees=0), dict(criterion="mse"), dict(min_samples_split=1),
                                    dict(min_samples_leaf=0), dict(max_features=0.0),
                                    dict(max_features=1.5), dict(max_features="log2")])
    def test_invalid(self, kw):
        with pytest.raises(ConfigError):
            HyperParams(**kw)

    def test_candidate_features(self):
        assert n_candidate_features("sqrt", 94) == 10
        assert n_candidate_features(0.5, 94) == 47
        assert n_candidate_features(1.0, 94) == 94
        assert n_candidate_features(0.001, 94) == 1


class TestTree:
    def test_stump_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(4, 21))
            x = np.sort(rng.choice(100, size=n, replace=False)).astype(float)
            cut = int(rng.integers(1, n))
            y = (np.arange(n) >= cut).astype(int)
            perm = rng.permutation(n)
            x, y = x[perm], y[perm]
            # oracle: every midpoint, weighted gini, first minimum
            xs = np.sort(x)
            cands = (xs[1:] + xs[:-1]) / 2
            costs = [(np.sum(x <= c) * gini(y[x <= c]) + np.sum(x > c) * gini(y[x > c])) / n
                     for c in cands]
            best = cands[int(np.argmin(costs))]
            forest = RandomForest(HyperParams(n_trees=1, max_features=1.0), seed=0,
                                  bootstrap=False).fit(x[:, None], y)
            tree = forest.trees[0]
            assert tree.feature[0] == 0 and tree.threshold[0] == best
            assert tree.n_nodes == 3
            assert (forest.predict(x[:, None]) == y).all()

    def test_full_growth_fits_training_data(self):
        rng = np.random.default_rng(4)
        X = np.unique(rng.integers(0, 5, size=(150, 3)).astype(float), axis=0)
        y = rng.integers(0, 3, size=len(X))
        tree = DecisionTree(max_features=1.0).fit(X, y, 3, np.random.default_rng(0))
        assert (tree.predict_proba(X).argmax(axis=1) == y).all()

    def test_leaf_counts_sum(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(60, 4))
        y = rng.integers(0, 2, size=60)
        tree = DecisionTree(min_samples_leaf=3, max_features=1.0).fit(X, y, 2, np.random.default_rng(0))
        leaves = tree.feature < 0
        assert tree.value[leaves].sum() == 60
        assert (tree.value[leaves].sum(axis=1) >= 3).all()
        internal = np.flatnonzero(~leaves)
        for i in internal:
            assert (tree.value[i] == tree.value[tree.left[i]] + tree.value[tree.right[i]]).all()

    def test_entropy_criterion(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        tree = DecisionTree(criterion="entropy").fit(X, np.array([0, 0, 1, 1]), 2, np.random.default_rng(0))
        assert tree.threshold[0] == 1.5


class TestForest:
    def test_single_class(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        f = fit_forest(X, ["a"] * 20, HyperParams(n_trees=5))
        labels, scores = predict_forest(f, X)
        assert (labels == "a").all() and (scores == 1).all()

    def test_separable_training_accuracy(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 5))
        y = np.where(X @ np.array([1.0, -2.0, 0.5, 0.0, 1.0]) > 0, "pos", "neg")
        f = fit_forest(X, y, HyperParams(), seed=0)
        assert accuracy(y, f.predict(X)) == 1.0

    def test_dimension_mismatch(self):
        f = fit_forest(np.zeros((4, 2)) + np.arange(4)[:, None], [0, 0, 1, 1], HyperParams(n_trees=2))
        with pytest.raises(ValueError):
            f.predict(np.zeros((1, 3)))

    def test_zero_features(self):
        with pytest.raises(ConfigError):
            fit_forest(np.zeros((5, 0)), [0] * 5)

    def test_deterministic_and_order_invariant(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(50, 6))
        y = rng.integers(0, 3, size=50)
        hp = HyperParams(n_trees=12)
        a = fit_forest(X, y, hp, seed=9)
        b = fit_forest(X, y, hp, seed=9)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
        proba = a.predict_proba(X)
        a.trees.reverse()
        a._pack = None
        assert np.allclose(a.predict_proba(X), proba, rtol=0, atol=1e-12)

    def test_seed_derivation_independent_of_training_order(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(40, 5))
        y = rng.integers(0, 2, size=40)
        hp = HyperParams(n_trees=6)
        forest = fit_forest(X, y, hp, seed=4)
        children = np.random.SeedSequence(4).spawn(6)
        for i in reversed(range(6)):
            r = np.random.default_rng(children[i])
            sample = r.integers(0, 40, size=40)
            tree = DecisionTree(**hp.tree_params()).fit(X[sample], y[sample], 2, r)
            assert tree.to_dict() == forest.trees[i].to_dict()

    def test_tie_goes_to_smallest_label(self):
        f = RandomForest(HyperParams(n_trees=1), 0, bootstrap=False).fit(np.array([[0.0], [0.0]]), ["b", "a"])
        assert f.predict(np.array([[0.0]]))[0] == "a"


class TestBinaryRelevance:
    def test_q(self):
        db = separable_db()
        model = fit_multi_output(db, HyperParams(n_trees=5), seed=0)
        assert model.models["encoding"].q == 2
        assert model.models["clustering"].labels == ["dbscan_eps0.1", "kmeans_k3"]

    def test_single_label_constant(self, caplog):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(20, N_FEATURES))
        db = make_db(X, ["onehot", "bigram"] * 10, ["kmeans_k2"] * 20)
        with caplog.at_level(logging.WARNING):
            model = fit_multi_output(db, HyperParams(n_trees=3))
        assert "constant predictor" in caplog.text
        assert set(model.predict(rng.normal(size=(7, N_FEATURES)))["clustering"]) == {"kmeans_k2"}

    def test_separable_generalises(self):
        train = separable_db(200, seed=1)
        test = separable_db(100, seed=2)
        model = fit_multi_output(train, HyperParams(n_trees=50, max_features=0.5), seed=0)
        pred = model.predict(test.X())
        assert macro_f1(test.targets("encoding"), pred["encoding"]) >= 0.95
        enc, clu = predict_multi_output(model, test.instances[0].features)
        assert (enc, clu) == test.instances[0].pair

    def test_zero_scores_fall_back_to_majority(self, monkeypatch):
        X = np.arange(8, dtype=float)[:, None]
        br = BinaryRelevance(HyperParams(n_trees=2)).fit(X, ["c", "b", "b", "c", "a", "a", "c", "b"])
        # b and c tie at three each; the majority tie is broken lexicographically
        assert br.majority == "b"
        monkeypatch.setattr(br, "scores", lambda X: np.zeros((len(X), 3)))
        assert br.predict(X[:2]).tolist() == ["b", "b"]

    def test_equal_scores_pick_smallest_label(self, monkeypatch):
        br = BinaryRelevance(HyperParams(n_trees=2)).fit(np.arange(6.0)[:, None], list("zzyyxx"))
        monkeypatch.setattr(br, "scores", lambda X: np.full((len(X), 3), 0.4))
        assert br.predict(np.zeros((1, 1)))[0] == "x"


class TestPersistence:
    def test_roundtrip(self):
        db = separable_db(60)
        model = fit_multi_output(db, HyperParams(n_trees=4), seed=3)
        buf = io.StringIO()
        model.save(buf)
        loaded = MultiOutputModel.load(io.StringIO(buf.getvalue()))
        X = separable_db(30, seed=5).X()
        for out in ("encoding", "clustering"):
            assert (loaded.predict(X)[out] == model.predict(X)[out]).all()
            a = loaded.models[out].scores(X)
            assert (a == model.models[out].scores(X)).all()
        again = io.StringIO()
        loaded.save(again)
        assert again.getvalue() == buf.getvalue()

    def test_schema_version(self):
        with pytest.raises(SchemaMismatchError):
            MultiOutputModel.load(io.StringIO('{"schema_version": "meta-model/0"}'))

    def test_feature_mismatch(self):
        model = fit_multi_output(separable_db(30), HyperParams(n_trees=2))
        with pytest.raises(SchemaMismatchError):
            model.predict(np.zeros((1, N_FEATURES - 1)))


class TestScores:
    def test_perfect(self):
        assert macro_f1(list("abca"), list("abca")) == 1.0

    def test_one_class_prediction(self):
        assert macro_f1(list("aabb"), list("aaaa")) == pytest.approx(1 / 3)

    def test_single_class_truth(self):
        assert macro_f1(["x"] * 3, ["x"] * 3) == 1.0

    def test_empty(self):
        for fn in (macro_f1, weighted_f1, micro_f1, accuracy):
            with pytest.raises(ValueError):
                fn([], [])

    def test_against_sklearn(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 40))
            t = rng.choice(list("abcde"), size=n)
            p = rng.choice(list("abcdef"), size=n)
            labels = sorted(set(t) | set(p))
            assert macro_f1(t, p) == pytest.approx(
                f1_score(t, p, labels=labels, average="macro", zero_division=0), abs=1e-12)
            assert weighted_f1(t, p) == pytest.approx(
                f1_score(t, p, average="weighted", zero_division=0), abs=1e-12)
            assert micro_f1(t, p) == pytest.approx(f1_score(t, p, average="micro"), abs=1e-12)
            assert micro_f1(t, p) == pytest.approx(accuracy(t, p), abs=1e-12)
            m = macro_f1(t, p)
            assert 0 <= m <= 1
            assert (m == 1) == bool((t == p).all())


class TestSplit:
    def test_counts(self):
        tr, va, te = split(separable_db(100), seed=0)
        assert (len(tr), len(va), len(te)) == (80, 10, 10)

    def test_one_class(self):
        X = np.random.default_rng(0).normal(size=(10, N_FEATURES))
        tr, va, te = split(make_db(X, ["onehot"] * 10, ["kmeans_k2"] * 10), seed=1)
        assert (len(tr), len(va), len(te)) == (8, 1, 1)

    def test_deterministic_and_disjoint(self):
        db = separable_db(57)
        a = split(db, seed=4)
        b = split(db, seed=4)
        assert a == b
        names = [i.log_name for part in a for i in part.instances]
        assert sorted(names) == sorted(i.log_name for i in db.instances)

    def test_stratified(self):
        db = separable_db(200, seed=3)
        _, _, te = split(db, seed=0)
        full = np.mean(np.array(db.targets("clustering")) == "kmeans_k3")
        part = np.mean(np.array(te.targets("clustering")) == "kmeans_k3")
        assert abs(full - part) <= 1 / len(te)

    def test_too_few(self):
        with pytest.raises(ConfigError):
            split(separable_db(2), seed=0)

    def test_kfold_partition(self):
        seen = np.concatenate([te for _, te in kfold_indices(23, 5, seed=0)])
        assert sorted(seen.tolist()) == list(range(23))


class TestGridSearch:
    def test_single_combination(self):
        hp = HyperParams(n_trees=3)
        res = grid_search(separable_db(40), None, [hp], folds=3)
        assert res.best == {"encoding": hp, "clustering": hp}

    def test_duplicates_first_wins(self):
        a = HyperParams(n_trees=3, criterion="gini")
        b = HyperParams(n_trees=3, criterion="gini")
        res = grid_search(separable_db(40), None, [a, b], folds=3)
        assert res.best["encoding"] is a

    def test_more_trees_win_on_noisy_data(self):
        rng = np.random.default_rng(7)
        X = rng.uniform(-1, 1, size=(200, N_FEATURES))
        enc = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, "onehot", "bigram")
        flip = rng.random(200) < 0.15
        enc[flip] = np.where(enc[flip] == "onehot", "bigram", "onehot")
        db = make_db(X, enc, ["kmeans_k2", "kmeans_k3"] * 100)
        grid = {"n_trees": [1, 50], "criterion": ["gini"], "min_samples_split": [2],
                "min_samples_leaf": [1], "max_features": ["sqrt"]}
        res = grid_search(db, None, grid, folds=5, seed=0)
        assert res.best["encoding"].n_trees == 50
        assert res.cv_scores["encoding"][1] > res.cv_scores["encoding"][0]

    def test_expand_grid_order(self):
        hps = expand_grid({"n_trees": [1, 2], "criterion": ["gini", "entropy"]})
        assert [(h.n_trees, h.criterion) for h in hps] == [(1, "gini"), (1, "entropy"),
                                                           (2, "gini"), (2, "entropy")]

    def test_validation_top_two(self):
        tr, va, _ = split(separable_db(60), seed=0)
        grid = [HyperParams(n_trees=2), HyperParams(n_trees=4), HyperParams(n_trees=6)]
        res = grid_search(tr, va, grid, folds=3)
        assert len(res.validation["encoding"]) == 2
        assert res.validation["encoding"][0][0] == res.best["encoding"]


class TestBaselines:
    def test_majority_balanced(self):
        X = np.zeros((4, N_FEATURES))
        db = make_db(X, list("aabb"), list("xxyy"))
        row = majority_baseline(db, db)
        assert row.outputs["encoding"].accuracy == 0.5

    def test_majority_single_class(self):
        db = make_db(np.zeros((3, N_FEATURES)), ["a"] * 3, ["x"] * 3)
        assert majority_baseline(db, db).mean_f1 == 1.0

    def test_random_single_label(self):
        db = make_db(np.zeros((3, N_FEATURES)), ["a"] * 3, ["x"] * 3)
        row = random_baseline(db, db, seed=0)
        assert row.outputs["encoding"].macro_f1 == 1.0
        assert row.outputs["encoding"].macro_f1_std == 0.0

    def test_random_accuracy_near_one_over_k(self):
        k = 4
        labels = [f"c{i % k}" for i in range(400)]
        db = make_db(np.zeros((400, N_FEATURES)), labels, labels)
        s = random_baseline(db, db, repeats=30, seed=1).outputs["encoding"]
        assert abs(s.accuracy - 1 / k) <= 3 * s.accuracy_std

    def test_random_fixed_seed(self):
        db = separable_db(30)
        assert random_baseline(db, db, seed=5) == random_baseline(db, db, seed=5)

    def test_report_lists_all_predictors(self):
        tr, _, te = split(separable_db(60), seed=0)
        model = fit_multi_output(tr, HyperParams(n_trees=5))
        report = EvaluationReport([evaluate_model(model, te), majority_baseline(tr, te),
                                   random_baseline(tr, te)])
        text = report.to_text()
        for name in ("meta-model", "majority", "random", "macro F1", "micro F1", "accuracy"):
            assert name in text
        buf = io.StringIO()
        report.to_csv(buf)
        assert len(buf.getvalue().splitlines()) == 1 + 3 * 3


@pytest.fixture(scope="module")
def fitted():
    train, test = separable_db(200, seed=11), separable_db(80, seed=12)
    X = test.X()
    X[:, 5] = 0.25  # constant column
    test = make_db(X, test.targets("encoding"), test.targets("clustering"))
    model = fit_multi_output(train, HyperParams(n_trees=30, max_features=1.0), seed=0)
    return model, test


class TestImportance:
    def test_deciding_features_dominate(self, fitted):
        model, test = fitted
        imp = permutation_importance(model, test, repeats=5, seed=0)
        assert imp.per_output["encoding"][0] >= 0.9
        assert imp.per_output["clustering"][1] >= 0.9
        assert imp.combined.sum() == pytest.approx(1.0)
        assert "permutation" in imp.method

    def test_unused_and_constant_are_zero(self, fitted):
        model, test = fitted
        imp = permutation_importance(model, test, repeats=3, seed=0)
        unused = set(range(N_FEATURES)) - model.used_features()
        assert unused
        for j in unused | {5}:
            assert imp.combined[j] == 0

    def test_deterministic(self, fitted):
        model, test = fitted
        a = permutation_importance(model, test, repeats=2, seed=3)
        b = permutation_importance(model, test, repeats=2, seed=3)
        assert (a.combined == b.combined).all()
