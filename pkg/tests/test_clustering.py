import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mro.clustering import (
    ClusteredSet,
    d_profile,
    elbow_select,
    from_assignments,
    kmeans,
    singletons,
)
from mro.data import Dataset, NormSpec


def brute_force_two_means(x):
    """Best 2-partition of 1-D points by mean squared deviation."""
    best = None
    for labels in itertools.product((0, 1), repeat=len(x)):
        labels = np.array(labels)
        if labels.min() == labels.max():
            continue
        D = sum(np.sum((x[labels == k] - x[labels == k].mean()) ** 2) for k in (0, 1)) / len(x)
        if best is None or D < best[0]:
            best = (D, labels)
    return best


class TestKMeans:
    def test_toy_two_clusters(self, toy_data):
        cs = kmeans(toy_data, 2, seed=0)
        D_ref, labels_ref = brute_force_two_means(toy_data.samples[:, 0])
        assert cs.D == pytest.approx(D_ref) == pytest.approx(0.25)
        assert sorted(cs.centroids[:, 0]) == pytest.approx([0.5, 4.5])
        assert cs.eta == pytest.approx(0.5)
        assert np.allclose(cs.weights, 0.5)

    def test_single_cluster_is_mean(self, rng):
        X = rng.normal(size=(20, 3))
        cs = kmeans(X, 1)
        assert np.allclose(cs.centroids[0], X.mean(axis=0))
        assert cs.weights.tolist() == [1.0]

    def test_singletons(self, rng):
        X = rng.normal(size=(6, 2))
        cs = kmeans(X, 6)
        assert cs.D == 0 and cs.eta == 0
        assert sorted(map(tuple, cs.centroids)) == sorted(map(tuple, X))
        assert singletons(X).equals(cs) or np.allclose(singletons(X).centroids, X)

    @pytest.mark.parametrize("K", [0, 5])
    def test_rejects_bad_K(self, toy_data, K):
        with pytest.raises(ValueError):
            kmeans(toy_data, K)

    def test_deterministic(self, rng):
        X = rng.normal(size=(40, 3))
        assert kmeans(X, 4, seed=3).equals(kmeans(X, 4, seed=3))

    @given(st.integers(0, 2**31 - 1), st.integers(1, 8))
    @settings(max_examples=30, deadline=None)
    def test_invariants(self, seed, K):
        X = np.random.default_rng(seed).normal(size=(12, 2))
        cs = kmeans(X, K, seed=seed, restarts=3)
        assert cs.weights.sum() == pytest.approx(1.0)
        assert np.all(cs.weights > 0)
        for k in range(K):
            assert np.allclose(cs.centroids[k], X[cs.assignments == k].mean(axis=0),
                               atol=1e-9)
        diff = X - cs.centroids[cs.assignments]
        assert cs.D == pytest.approx(np.mean(np.sum(diff**2, axis=1)), abs=1e-9)
        assert cs.eta == pytest.approx(np.max(np.linalg.norm(diff, axis=1)), abs=1e-9)

    def test_eta_uses_inner_norm(self, rng):
        X = rng.normal(size=(10, 3))
        cs = kmeans(X, 2, norm=NormSpec(1))
        diff = X - cs.centroids[cs.assignments]
        assert cs.eta == pytest.approx(np.abs(diff).sum(axis=1).max())

    def test_json_roundtrip(self, rng):
        cs = kmeans(rng.normal(size=(15, 2)), 3)
        assert ClusteredSet.from_json(cs.to_json()).equals(cs)

    def test_from_assignments_rejects_empty(self):
        with pytest.raises(ValueError):
            from_assignments([[0.0], [1.0]], [0, 2])


class TestProfile:
    def test_toy_values(self, toy_data):
        prof = d_profile(toy_data, [1, 2, 4])
        assert [K for K, _, _ in prof] == [1, 2, 4]
        assert prof[0][1] == pytest.approx(4.25)
        assert prof[1][1] == pytest.approx(0.25)
        assert prof[2][1] == 0.0

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=15, deadline=None)
    def test_nonincreasing(self, seed):
        X = np.random.default_rng(seed).normal(size=(15, 2))
        D = [d for _, d, _ in d_profile(X, range(1, 16), seed=seed, restarts=2)]
        assert all(a >= b - 1e-12 for a, b in zip(D, D[1:]))

    def test_rejects_unsorted(self, toy_data):
        with pytest.raises(ValueError):
            d_profile(toy_data, [2, 1])


class TestElbow:
    @pytest.mark.parametrize("profile, expected", [
        ((4.25, 0.25, 0.2, 0.19), 2),
        ((1.0, 1.0, 1.0), 1),
        ((1.0, 0.5, 0.25, 0.0), 4),
    ])
    def test_rule(self, profile, expected):
        assert elbow_select(profile, 0.1) == expected

    def test_accepts_profile_tuples(self, toy_data):
        assert elbow_select(d_profile(toy_data, [1, 2, 3, 4])) == 2

    def test_empty(self):
        with pytest.raises(ValueError):
            elbow_select([])
