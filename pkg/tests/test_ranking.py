import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trace_automl.clustering import ClusteringConfig
from trace_automl.errors import ConfigError, SchemaMismatchError
from trace_automl.event_log import EventLog
from trace_automl.ranking import (
    MetricTriple,
    PipelineId,
    rank_pipelines,
    read_metrics_csv,
    silhouette,
    silhouette_samples,
    variant_score,
    write_metrics_csv,
)

TABLE = [
    (PipelineId("onehot", "kmeans_k2"), MetricTriple(0.9, 0.5, 50)),
    (PipelineId("bigram", "kmeans_k3"), MetricTriple(0.3, 0.0, 10)),
    (PipelineId("trigram", "kmeans_k4"), MetricTriple(0.8, 0.7, 15)),
]


def naive_silhouette(x, labels):
    """Per-sample textbook loop; noise pooled into its own cluster."""
    n = len(x)
    clusters = sorted(set(labels))
    if len(clusters) < 2:
        return -1.0
    total = 0.0
    for i in range(n):
        own = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not own:
            continue
        a = sum(math.dist(x[i], x[j]) for j in own) / len(own)
        b = min(
            sum(math.dist(x[i], x[j]) for j in range(n) if labels[j] == c)
            / sum(1 for j in range(n) if labels[j] == c)
            for c in clusters if c != labels[i]
        )
        if max(a, b) > 0:
            total += (b - a) / max(a, b)
    return total / n


class TestPipelineId:
    @pytest.mark.parametrize("text", ["onehot_agglomerative_k10", "onehot_dbscan_eps0.001",
                                      "position_profile_kmeans_k2", "trigram_dbscan_eps50"])
    def test_roundtrip(self, text):
        assert str(PipelineId.parse(text)) == text

    def test_of(self):
        assert str(PipelineId.of("bigram", ClusteringConfig("dbscan", eps=0.5))) == "bigram_dbscan_eps0.5"

    @pytest.mark.parametrize("text", ["word2vec_kmeans_k2", "onehot_kmeans", "onehot"])
    def test_bad(self, text):
        with pytest.raises(ConfigError):
            PipelineId.parse(text)


class TestSilhouette:
    def test_hand_case(self):
        x = np.array([[0.0], [1.0], [10.0], [11.0]])
        labels = np.array([0, 0, 1, 1])
        per = silhouette_samples(x, labels)
        assert per == pytest.approx([0.90476, 0.89474, 0.89474, 0.90476], abs=1e-5)
        assert silhouette(x, labels) == pytest.approx(0.8997, abs=1e-4)

    def test_single_cluster(self):
        assert silhouette(np.arange(4.0).reshape(-1, 1), [0, 0, 0, 0]) == -1.0

    def test_all_noise_is_one_cluster(self):
        assert silhouette(np.arange(4.0).reshape(-1, 1), [-1] * 4) == -1.0

    def test_identical_points(self):
        assert silhouette(np.zeros((4, 2)), [0, 0, 1, 1]) == 0.0

    def test_singleton_scores_zero(self):
        per = silhouette_samples(np.array([[0.0], [1.0], [5.0]]), [0, 0, 1])
        assert per[2] == 0.0

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 10**6))
    def test_matches_naive(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        x = rng.normal(size=(n, int(rng.integers(1, 6))))
        labels = rng.integers(-1, int(rng.integers(2, 5)), size=n)
        if len(set(labels.tolist())) < 2:
            labels[0], labels[-1] = 0, 1
        assert abs(silhouette(x, labels) - naive_silhouette(x, labels.tolist())) <= 1e-9

    def test_subsample_is_seeded(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(60, 2))
        labels = (x[:, 0] > 0).astype(int)
        a = silhouette(x, labels, seed=3, max_samples=20)
        assert a == silhouette(x, labels, seed=3, max_samples=20)
        assert -1 <= a <= 1


class TestVariantScore:
    def test_pure(self):
        log = EventLog.from_sequences(["ab", "ab", "ba"])
        assert variant_score(log, [0, 0, 1]) == 0

    def test_hand_case(self):
        log = EventLog.from_sequences(["A", "A", "B", "B", "C", "C"])
        assert variant_score(log, [0, 0, 0, 0, 1, 1]) == 1 / 6

    def test_one_cluster_all_variants(self):
        log = EventLog.from_sequences(["a", "b", "c", "d"])
        assert variant_score(log, [0, 0, 0, 0]) == 3 / 4

    def test_noise_is_singletons(self):
        log = EventLog.from_sequences(["a", "b", "c", "d"])
        assert variant_score(log, [-1, -1, -1, -1]) == 0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            variant_score(EventLog.from_sequences(["a"]), [0, 1])

    def test_random_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            n = int(rng.integers(1, 30))
            seqs = ["".join(rng.choice(list("abc"), size=int(rng.integers(1, 4)))) for _ in range(n)]
            log = EventLog.from_sequences(seqs)
            labels = rng.integers(-1, 4, size=n)
            v = variant_score(log, labels)
            counted = {int(c) for c in labels if c >= 0}
            assert 0 <= v <= (n - len(counted)) / n <= 1

    def test_bound_when_variants_are_not_split(self):
        rng = np.random.default_rng(2)
        for _ in range(300):
            n = int(rng.integers(1, 30))
            seqs = ["".join(rng.choice(list("abcd"), size=int(rng.integers(1, 3)))) for _ in range(n)]
            variants = sorted(set(seqs))
            cluster_of = dict(zip(variants, rng.integers(0, 4, size=len(variants))))
            labels = [int(cluster_of[s]) for s in seqs]
            v = variant_score(EventLog.from_sequences(seqs), labels)
            assert v == (len(variants) - len(set(labels))) / n


class TestRanking:
    def test_table_reproduction(self):
        table = rank_pipelines(TABLE)
        assert [round(r.r, 2) for r in table.rows] == [2.0, 1.67, 2.33]
        assert table.winner.pipeline == TABLE[1][0]

    def test_single(self):
        row = rank_pipelines(TABLE[:1]).rows[0]
        assert (row.r_s, row.r_v, row.r_t, row.r) == (1, 1, 1, 1)

    def test_identical_triples(self):
        m = MetricTriple(0.5, 0.1, 1.0)
        table = rank_pipelines([(PipelineId("trigram", "kmeans_k2"), m),
                                (PipelineId("bigram", "kmeans_k2"), m)])
        assert [r.r for r in table.rows] == [1.5, 1.5]
        assert str(table.winner.pipeline) == "bigram_kmeans_k2"

    def test_tie_break_on_v_then_t(self):
        # equal rank sums (1 + 2 + 1.5 each); lower v wins
        table = rank_pipelines([(PipelineId("onehot", "kmeans_k2"), MetricTriple(0.9, 0.2, 1)),
                                (PipelineId("onehot", "kmeans_k3"), MetricTriple(0.1, 0.1, 1))])
        assert table.rows[0].r == table.rows[1].r
        assert table.winner.pipeline.clustering == "kmeans_k3"

    def test_empty(self):
        with pytest.raises(ValueError):
            rank_pipelines([])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(-1, 1), st.floats(0, 1), st.floats(1e-3, 10)),
                    min_size=1, max_size=40))
    def test_mean_rank(self, triples):
        results = [(PipelineId("onehot", f"kmeans_k{i % 9 + 2}"), MetricTriple(*t))
                   for i, t in enumerate(triples)]
        table = rank_pipelines(results)
        p = len(triples)
        assert np.mean([r.r for r in table.rows]) == pytest.approx((p + 1) / 2, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(-1000, 1000), st.integers(0, 1000), st.integers(1, 10_000)),
                    min_size=2, max_size=30))
    def test_monotone_transform_invariance(self, ints):
        # a 1e-3 grid keeps the transformed values distinct in floating point
        triples = [(a / 1000, b / 1000, c / 1000) for a, b, c in ints]
        ids = [PipelineId("bigram", f"agglomerative_k{i % 9 + 2}") for i in range(len(triples))]
        base = rank_pipelines([(p, MetricTriple(*t)) for p, t in zip(ids, triples)])
        moved = rank_pipelines([(p, MetricTriple(s ** 3 - 5, v, t ** 2 + 1))
                                for p, (s, v, t) in zip(ids, triples)])
        # s -> s^3 - 5 keeps the order of s; t -> t^2 + 1 keeps the order of positive t
        for a, b in zip(base.rows, moved.rows):
            assert (a.r_s, a.r_v, a.r_t) == (b.r_s, b.r_v, b.r_t)


def test_metrics_csv_roundtrip():
    buf = io.StringIO()
    write_metrics_csv([("log_a", rank_pipelines(TABLE))], buf)
    text = buf.getvalue()
    assert text.splitlines()[1] == "log,pipeline,s,v,t,R_s,R_v,R_t,R,winner"
    back = read_metrics_csv(io.StringIO(text))
    assert back == {"log_a": TABLE}
    assert [line.rsplit(",", 1)[1] for line in text.splitlines()[2:]] == ["0", "1", "0"]


def test_metrics_csv_schema_check():
    with pytest.raises(SchemaMismatchError):
        read_metrics_csv(io.StringIO("# schema_version=metrics/0\nlog\n"))
