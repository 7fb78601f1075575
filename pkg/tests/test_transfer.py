from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evit.errors import DegenerateNormalConditionError, InvalidInputError
from evit.population import builtin_population
from evit.surrogate import GeneratorConfig, ModalDataset, generate_dataset, generate_population
from evit.transfer import (
    Algorithm,
    NormalStats,
    QualityVector,
    TransferRecord,
    TransferStrategy,
    knn_predict,
    normal_condition_align,
    normal_stats,
    records_from_csv,
    records_to_csv,
    run_pairwise_transfers,
    score_quality,
)


def knn_oracle(train_x, train_y, queries, k):
    """Plain-Python kNN: sort every training row by (squared distance, label)."""
    out = []
    for q in queries:
        ranked = sorted(
            ((sum((a - b) ** 2 for a, b in zip(row, q)), int(label)) for row, label in zip(train_x, train_y)),
        )
        votes = Counter(label for _, label in ranked[:k])
        top = max(votes.values())
        out.append(min(label for label, n in votes.items() if n == top))
    return out


def random_instance(rng, with_ties):
    n = int(rng.integers(5, 201))
    m = int(rng.integers(1, 21))
    if with_ties:
        # integer grid forces many equal distances
        x = rng.integers(-3, 4, size=(n, 2)).astype(float)
        q = rng.integers(-3, 4, size=(m, 2)).astype(float)
    else:
        x = rng.normal(size=(n, 2))
        q = rng.normal(size=(m, 2))
    y = rng.integers(0, 4, size=n)
    return x, y, q


class TestAlign:
    def test_identity(self):
        x = np.array([[1.0, 2.0], [3.0, 5.0]])
        stats = NormalStats(np.array([2.0, 3.0]), np.array([0.5, 4.0]))
        np.testing.assert_allclose(normal_condition_align(x, stats, stats), x, rtol=0, atol=1e-15)

    def test_worked_example(self):
        z = normal_condition_align(
            [[7.0, 5.0]],
            NormalStats(np.zeros(2), np.ones(2)),
            NormalStats(np.array([5.0, 5.0]), np.array([2.0, 2.0])),
        )
        np.testing.assert_array_equal(z, [[1.0, 0.0]])

    def test_aligned_normal_condition_matches_source(self):
        rng = np.random.default_rng(0)
        src = normal_stats(rng.normal([3, -1], [2, 0.5], size=(40, 2)))
        tgt_rows = rng.normal([10, 20], [1, 3], size=(30, 2))
        z = normal_condition_align(tgt_rows, src, normal_stats(tgt_rows))
        np.testing.assert_allclose(z.mean(axis=0), src.mean, rtol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), src.std, rtol=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(1)
        x = rng.normal(100, 5, size=(50, 2))
        a = NormalStats(np.array([1.0, -2.0]), np.array([0.3, 7.0]))
        b = NormalStats(np.array([100.0, 99.0]), np.array([5.0, 4.0]))
        back = normal_condition_align(normal_condition_align(x, a, b), b, a)
        assert np.max(np.abs(back - x)) < 1e-9

    @pytest.mark.parametrize("bad", [0.0, np.nan, np.inf])
    def test_degenerate_std(self, bad):
        ok = NormalStats(np.zeros(2), np.ones(2))
        bad_stats = NormalStats(np.zeros(2), np.array([1.0, bad]))
        with pytest.raises(DegenerateNormalConditionError):
            normal_condition_align([[1.0, 1.0]], ok, bad_stats)
        with pytest.raises(DegenerateNormalConditionError):
            normal_condition_align([[1.0, 1.0]], bad_stats, ok)


class TestKnn:
    def test_separated_clusters(self):
        x = np.vstack([np.zeros((5, 2)), np.full((5, 2), 10.0)])
        y = np.array([0] * 5 + [1] * 5)
        assert knn_predict(x, y, [[0.1, 0.0]], k=5).tolist() == [0]

    def test_query_on_training_point(self):
        x = np.array([[0, 0], [0, 1], [1, 0], [1, 1], [0.5, 0.5], [9, 9], [9, 8]], dtype=float)
        y = np.array([2, 2, 2, 2, 2, 3, 3])
        assert knn_predict(x, y, [[0.5, 0.5]], k=5).tolist() == [2]

    def test_vote_tie_goes_to_smaller_label(self):
        x = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 5.0]])
        y = np.array([3, 1, 0])
        assert knn_predict(x, y, [[0.0, 0.0]], k=2).tolist() == [1]

    def test_distance_tie_at_boundary_prefers_smaller_label(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
        y = np.array([2, 3, 1])
        # rows 1 and 2 are equidistant; only one fits in k=2
        assert knn_predict(x, y, [[0.0, 0.0]], k=2).tolist() == [1]

    def test_matches_oracle_on_random_points(self):
        rng = np.random.default_rng(2024)
        x = rng.uniform(0, 1, size=(200, 2))
        y = rng.integers(0, 4, size=200)
        q = rng.uniform(0, 1, size=(20, 2))
        assert knn_predict(x, y, q, k=5).tolist() == knn_oracle(x, y, q, 5)

    @pytest.mark.parametrize("with_ties", [False, True])
    def test_matches_oracle_many_instances(self, with_ties):
        rng = np.random.default_rng(7 + with_ties)
        for _ in range(25):
            x, y, q = random_instance(rng, with_ties)
            assert knn_predict(x, y, q, k=5).tolist() == knn_oracle(x, y, q, 5)

    def test_k_exceeds_train_size(self):
        with pytest.raises(InvalidInputError):
            knn_predict(np.zeros((4, 2)), [0, 1, 2, 3], [[0.0, 0.0]], k=5)

    def test_bad_k(self):
        with pytest.raises(InvalidInputError):
            knn_predict(np.zeros((4, 2)), [0, 1, 2, 3], [[0.0, 0.0]], k=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_knn_permutation_invariant(seed, with_ties):
    rng = np.random.default_rng(seed)
    x, y, q = random_instance(rng, with_ties)
    perm = rng.permutation(len(y))
    np.testing.assert_array_equal(knn_predict(x, y, q), knn_predict(x[perm], y[perm], q))


class TestScore:
    def test_worked_example(self):
        assert score_quality([0, 1, 2, 3], [0, 0, 2, 1]) == (0.5, 0.0, 0.25, 0.25)

    def test_perfect(self):
        assert score_quality([0, 1, 2, 3, 3], [0, 1, 2, 3, 3]) == (1.0, 0.0, 0.0, 0.0)

    def test_all_false_positive(self):
        assert score_quality([0, 0, 0], [3, 3, 3]) == (0.0, 1.0, 0.0, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            score_quality([0, 1], [0])

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            score_quality([], [])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=300))
def test_score_on_simplex(pairs):
    t, p = zip(*pairs)
    q = score_quality(t, p)
    assert all(v >= 0 for v in q)
    assert abs(sum(q) - 1.0) <= 1e-12


def test_strategy_invariants():
    assert TransferStrategy.null().source is None
    with pytest.raises(InvalidInputError):
        TransferStrategy("G1", Algorithm.NULL)
    with pytest.raises(InvalidInputError):
        TransferStrategy(None, Algorithm.NCA)


def test_record_rejects_self_transfer():
    with pytest.raises(InvalidInputError):
        TransferRecord("G1", "G1", 1.0, QualityVector(1, 0, 0, 0))


class TestPairwise:
    @pytest.fixture(scope="class")
    @classmethod
    def records(cls):
        datasets = generate_population(builtin_population(), GeneratorConfig(seed=0))
        return run_pairwise_transfers(datasets, lambda s, t: 0.5)

    def test_count_and_order(self, records):
        assert len(records) == 56
        keys = [(r.source_id, r.target_id) for r in records]
        assert keys == sorted(keys)
        assert all(s != t for s, t in keys)

    def test_quality_vectors_on_simplex(self, records):
        for r in records:
            assert min(r.quality) >= 0
            assert abs(sum(r.quality) - 1.0) <= 1e-12

    def test_deterministic(self, records):
        again = run_pairwise_transfers(generate_population(builtin_population(), GeneratorConfig(seed=0)), lambda s, t: 0.5)
        assert again == records

    def test_identical_domains_self_classify(self):
        g = builtin_population()[4]  # small aluminium, well separated classes
        cfg = GeneratorConfig(seed=42)
        a = generate_dataset(g, cfg)
        b = ModalDataset("copy", a.features.copy(), a.labels.copy())
        recs = run_pairwise_transfers([a, b], lambda s, t: 1.0)
        assert [r.quality for r in recs] == [(1.0, 0.0, 0.0, 0.0)] * 2

    def test_needs_two_structures(self):
        ds = generate_dataset(builtin_population()[0], GeneratorConfig())
        with pytest.raises(InvalidInputError):
            run_pairwise_transfers([ds], lambda s, t: 0.0)

    def test_missing_class(self):
        pop = builtin_population()
        a = generate_dataset(pop[0], GeneratorConfig())
        b = generate_dataset(pop[1], GeneratorConfig())
        keep = b.labels != 2
        b = ModalDataset(b.structure_id, b.features[keep], b.labels[keep])
        with pytest.raises(InvalidInputError):
            run_pairwise_transfers([a, b], lambda s, t: 0.0)

    def test_zero_variance_normal_condition(self):
        pop = builtin_population()
        a = generate_dataset(pop[0], GeneratorConfig())
        b = generate_dataset(pop[1], GeneratorConfig())
        feats = b.features.copy()
        feats[b.labels == 0] = feats[b.labels == 0][0]
        b = ModalDataset(b.structure_id, feats, b.labels)
        with pytest.raises(DegenerateNormalConditionError):
            run_pairwise_transfers([a, b], lambda s, t: 0.0)

    def test_csv_round_trip(self, records):
        text = records_to_csv(records)
        assert text.splitlines()[0] == "source_id,target_id,similarity,tr,fpr,fnr,fdr"
        assert records_from_csv(text) == records
