import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mro.data import (
    Dataset,
    NormSpec,
    SupportSet,
    UncertaintySpec,
    ball_membership,
    box_to_polyhedron,
    support_function_box,
)

INF = math.inf


class TestDataset:
    def test_shape_and_immutability(self):
        d = Dataset([[1, 2], [3, 4], [5, 6]])
        assert (d.N, d.m) == (3, 2)
        with pytest.raises(ValueError):
            d.samples[0, 0] = 9.0

    @pytest.mark.parametrize("bad", [[], [[np.nan, 1.0]], [[np.inf]]])
    def test_rejects_bad_samples(self, bad):
        with pytest.raises(ValueError):
            Dataset(bad)

    def test_csv_roundtrip_with_and_without_header(self, tmp_path):
        d = Dataset(np.random.default_rng(0).normal(size=(5, 3)))
        assert np.array_equal(Dataset.from_csv(d.to_csv()).samples, d.samples)
        plain = "\n".join(",".join(repr(float(v)) for v in row) for row in d.samples)
        assert np.array_equal(Dataset.from_csv(plain).samples, d.samples)
        path = tmp_path / "d.csv"
        d.save(path)
        assert np.array_equal(Dataset.load(path).samples, d.samples)

    def test_json_roundtrip(self, tmp_path):
        d = Dataset([[0.1, 0.2], [0.3, 0.4]])
        assert np.array_equal(Dataset.from_json(d.to_json()).samples, d.samples)
        path = tmp_path / "d.json"
        d.save(path)
        assert np.array_equal(Dataset.load(path).samples, d.samples)


class TestBoxToPolyhedron:
    def test_unit_box(self):
        C, b = box_to_polyhedron([0, 0], [1, 1])
        assert np.array_equal(C, np.vstack([np.eye(2), -np.eye(2)]))
        assert np.array_equal(b, [1, 1, 0, 0])

    def test_orthant(self):
        C, b = box_to_polyhedron([0, 0], [INF, INF])
        assert np.array_equal(C, -np.eye(2))
        assert np.array_equal(b, [0, 0])

    def test_full_space_has_no_rows(self):
        C, b = box_to_polyhedron([-INF, -INF], [INF, INF])
        assert C.shape == (0, 2) and b.shape == (0,)

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            box_to_polyhedron([1.0], [0.0])

    @given(st.lists(st.tuples(st.floats(-5, 5), st.floats(0, 5)), min_size=1, max_size=4),
           st.integers(0, 2**31 - 1))
    @settings(max_examples=40, deadline=None)
    def test_membership_matches_box(self, bounds, seed):
        lb = np.array([a for a, _ in bounds])
        ub = lb + np.array([w for _, w in bounds])
        C, b = box_to_polyhedron(lb, ub)
        u = np.random.default_rng(seed).uniform(lb - 1, ub + 1)
        in_box = bool(np.all((lb <= u) & (u <= ub)))
        assert bool(np.all(C @ u <= b)) == in_box


class TestSupportFunctionBox:
    @pytest.mark.parametrize("y, lb, ub, expected", [
        ((1, -2), (0, 0), (1, 1), 1.0),
        ((-1, -1), (0, 0), (INF, INF), 0.0),
        ((1, 0), (0, 0), (INF, INF), INF),
        ((0, 0), (-INF, -INF), (INF, INF), 0.0),
        ((-2, 3), (-1, -1), (1, 2), 8.0),
    ])
    def test_values(self, y, lb, ub, expected):
        assert support_function_box(y, lb, ub) == expected

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_dominates_sampled_points(self, seed):
        r = np.random.default_rng(seed)
        lb = r.uniform(-3, 0, 3)
        ub = lb + r.uniform(0, 3, 3)
        y = r.normal(size=3)
        val = support_function_box(y, lb, ub)
        U = r.uniform(lb, ub, size=(200, 3))
        assert np.all(U @ y <= val + 1e-12)


class TestSupportSet:
    def test_polyhedron_support_function_is_lp(self):
        C = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        S = SupportSet.polyhedron(C, [1.0, 0.0, 0.0])
        assert S.support_function([2.0, 1.0]) == pytest.approx(2.0)
        assert S.contains([0.2, 0.3]) and not S.contains([0.8, 0.8])

    def test_relaxed_is_full(self):
        S = SupportSet.box([0, 0], [1, 1]).relaxed()
        assert S.kind == "full" and S.contains([100.0, -100.0])

    @pytest.mark.parametrize("S", [SupportSet.full(2), SupportSet.nonneg(2),
                                   SupportSet.box([0, -1], [1, 1])])
    def test_dict_roundtrip(self, S):
        T = SupportSet.from_dict(S.to_dict())
        assert T.kind == S.kind
        for u in ([0.5, 0.5], [-0.5, 0.0], [2.0, 2.0]):
            assert T.contains(u) == S.contains(u)


class TestUncertaintySpec:
    def test_conjugate_exponent(self):
        S = SupportSet.full(1)
        assert UncertaintySpec(1, 0.1, S).q == INF
        assert UncertaintySpec(2, 0.1, S).q == 2
        assert UncertaintySpec("inf", 0.1, S).q == 1
        assert UncertaintySpec(4, 0.1, S).q == pytest.approx(4 / 3)

    @pytest.mark.parametrize("p, eps", [(0.5, 1.0), (1.5, 1.0), (2, -0.1)])
    def test_rejects_invalid(self, p, eps):
        with pytest.raises(ValueError):
            UncertaintySpec(p, eps, SupportSet.full(1))

    def test_norm_orders(self):
        assert NormSpec(1).dual_order == INF and NormSpec(INF).dual_order == 1
        with pytest.raises(ValueError):
            NormSpec(3)


class TestBallMembership:
    def test_centroids_are_members(self):
        c = np.array([[0.0, 1.0], [2.0, 3.0]])
        spec = UncertaintySpec(2, 0.0, SupportSet.full(2))
        assert ball_membership(c, c, [0.5, 0.5], spec)

    def test_three_four_five_boundary(self):
        spec = UncertaintySpec(2, 5.0, SupportSet.full(2))
        assert ball_membership([[3.0, 4.0]], [[0.0, 0.0]], [1.0], spec)
        assert not ball_membership([[3.0, 4.01]], [[0.0, 0.0]], [1.0], spec)

    @pytest.mark.parametrize("eps, expected", [(2.0, False), (math.sqrt(5), True)])
    def test_weighted_power_sum(self, eps, expected):
        # displacements of length 1 and 3: 0.5 * 1 + 0.5 * 9 = 5
        spec = UncertaintySpec(2, eps, SupportSet.full(2))
        pts = np.array([[1.0, 0.0], [0.0, 3.0]])
        assert ball_membership(pts, np.zeros((2, 2)), [0.5, 0.5], spec) is expected

    def test_support_is_enforced(self):
        spec = UncertaintySpec(2, 10.0, SupportSet.nonneg(1))
        assert not ball_membership([[-0.1]], [[0.0]], [1.0], spec)

    def test_dimension_mismatch(self):
        spec = UncertaintySpec(2, 1.0, SupportSet.full(2))
        with pytest.raises(ValueError):
            ball_membership(np.zeros((2, 2)), np.zeros((3, 2)), [0.5, 0.5], spec)

    @given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3, INF]))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_eps(self, seed, p):
        r = np.random.default_rng(seed)
        K = int(r.integers(1, 5))
        c = r.normal(size=(K, 2))
        w = r.dirichlet(np.ones(K))
        pts = c + r.normal(size=(K, 2))
        eps = float(r.uniform(0, 3))
        if ball_membership(pts, c, w, UncertaintySpec(p, eps, SupportSet.full(2))):
            assert ball_membership(pts, c, w, UncertaintySpec(p, eps + 0.5,
                                                              SupportSet.full(2)))

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=50, deadline=None)
    def test_inf_decouples(self, seed):
        r = np.random.default_rng(seed)
        K = int(r.integers(1, 5))
        c = r.normal(size=(K, 2))
        w = r.dirichlet(np.ones(K))
        pts = c + r.normal(scale=0.7, size=(K, 2))
        spec = UncertaintySpec(INF, 1.0, SupportSet.full(2))
        each = all(ball_membership(pts[k:k + 1], c[k:k + 1], [1.0], spec) for k in range(K))
        assert ball_membership(pts, c, w, spec) == each
