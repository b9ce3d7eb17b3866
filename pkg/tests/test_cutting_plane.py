import math

import numpy as np
import pytest

from conftest import grid_max_1d, random_pd
from mro.clustering import ClusteredSet, kmeans
from mro.data import Dataset, SupportSet, UncertaintySpec, ball_membership
from mro.cutting_plane import (
    CuttingPlaneConfig,
    OracleConfig,
    cutting_plane_solve,
    master_solve,
    max_oracle,
)
from mro.families import Affine, CapitalBudgetingNPV, ConcaveQuadratic, LogSumExp
from mro.reformulate import MroProblem, solve_problem, worst_case_value

INF = math.inf


def one_cluster(center):
    c = np.atleast_2d(np.asarray(center, dtype=float))
    return ClusteredSet(c, np.array([1.0]), np.array([0]), 0.0, 0.0, 1)


def quad_problem(seed, p=2, eps=0.3, K=3):
    r = np.random.default_rng(seed)
    fam = ConcaveQuadratic(random_pd(r, 3, 2))
    cs = kmeans(Dataset(r.normal(size=(15, 2))), K, seed=0)
    return MroProblem([fam], 3, np.zeros(3), cs, UncertaintySpec(p, eps, SupportSet.full(2)),
                      epigraph=True, A_eq=np.ones((1, 3)), b_eq=[1.0], lb=0.0)


class TestOracle:
    def test_quadratic_box_example(self):
        spec = UncertaintySpec(2, 0.5, SupportSet.box([0.5], [1.5]))
        res = max_oracle(ConcaveQuadratic(2 * np.eye(1)), [1.0], one_cluster([1.0]), spec)
        u_ref, v_ref = grid_max_1d(lambda u: -u * u, 0.5, 1.0)
        assert res.points[0, 0] == pytest.approx(u_ref, abs=1e-5)
        assert res.value == pytest.approx(v_ref, abs=1e-8)

    def test_affine_closed_form(self, rng):
        fam = Affine(rng.normal(size=3), rng.normal(size=(3, 2)), 0.2)
        x, d = rng.normal(size=3), rng.normal(size=2)
        spec = UncertaintySpec(INF, 0.7, SupportSet.full(2))
        res = max_oracle(fam, x, one_cluster(d), spec)
        ref = fam.eval(d, x) + 0.7 * np.linalg.norm(fam.P.T @ x)
        assert res.value == pytest.approx(ref, rel=1e-8)

    def test_eps_zero(self, quad_instance):
        fam, _, cs, spec, x = quad_instance
        res = max_oracle(fam, x, cs, spec.replace(epsilon=0.0))
        assert np.array_equal(res.points, cs.centroids)
        assert res.value == pytest.approx(sum(w * fam.eval(c, x)
                                              for w, c in zip(cs.weights, cs.centroids)))

    def test_rejects_negative_x_for_concavity(self):
        spec = UncertaintySpec(2, 0.5, SupportSet.full(1))
        with pytest.raises(ValueError):
            max_oracle(ConcaveQuadratic(np.eye(1)), [-1.0], one_cluster([0.0]), spec)

    def test_monotone_iterates_and_membership(self, quad_instance):
        fam, _, cs, spec, x = quad_instance
        res = max_oracle(fam, x, cs, spec)
        assert res.status == "optimal"
        assert ball_membership(res.points, cs.centroids, cs.weights, spec, tol=1e-8)
        short = max_oracle(fam, x, cs, spec, OracleConfig(max_iter=2))
        assert short.value <= res.value + 1e-12

    @pytest.mark.parametrize("p", [1, 2, INF])
    @pytest.mark.parametrize("kind", ["affine", "quadratic", "npv"])
    def test_matches_dual(self, kind, p, rng):
        if kind == "affine":
            fam = Affine(rng.normal(size=2), rng.normal(size=(2, 2)))
            x, support = rng.normal(size=2), SupportSet.box([-3, -3], [3, 3])
        elif kind == "quadratic":
            fam = ConcaveQuadratic(random_pd(rng, 2, 2))
            x, support = rng.uniform(0.1, 1, 2), SupportSet.full(2)
        else:
            fam = CapitalBudgetingNPV(rng.uniform(0.1, 0.5, size=(2, 4)))
            x, support = rng.uniform(0.1, 1, 2), SupportSet.box([0, 0], [1, 1])
        lo, hi = (0.1, 0.5) if kind == "npv" else (-1, 1)
        cs = kmeans(Dataset(rng.uniform(lo, hi, size=(10, 2))), 3)
        spec = UncertaintySpec(p, 0.2, support)
        dual = worst_case_value(fam, x, cs, spec)
        primal = max_oracle(fam, x, cs, spec).value
        assert primal == pytest.approx(dual, rel=1e-5, abs=1e-7)


class TestMaster:
    def test_single_affine_scenario_is_lp(self, rng):
        fam = Affine(np.zeros(2), np.eye(2), 1.0)
        spec = UncertaintySpec(2, 0.1, SupportSet.full(2))
        prob = MroProblem([fam], 2, [-1.0, -1.0], one_cluster([0, 0]), spec, lb=0.0)
        sol = master_solve(prob, [np.array([[1.0, 2.0]])])
        # max x1 + x2 s.t. x1 + 2 x2 <= 1, x >= 0
        assert sol.objective == pytest.approx(-1.0, abs=1e-7)

    def test_lse_unit_scenario(self):
        n = 3
        spec = UncertaintySpec(2, 0.1, SupportSet.box(np.full(n, 0.01), np.full(n, INF)))
        prob = MroProblem([LogSumExp(n)], n, np.zeros(n), one_cluster(np.ones(n)), spec,
                          epigraph=True, A_ub=-np.ones((1, n)), b_ub=[-10.0], lb=0.0, ub=10.0)
        sol = master_solve(prob, [np.eye(n)[:1]])
        x, tau = prob.x_of(sol), prob.tau_of(sol)
        assert tau == pytest.approx(x[0], abs=1e-6) and tau == pytest.approx(0.0, abs=1e-6)

    def test_empty_scenarios(self, rng):
        prob = quad_problem(0)
        sol = master_solve(prob, [])
        assert sol.ok and sol.objective == pytest.approx(0.0, abs=1e-9)


class TestCuttingPlane:
    def test_affine_two_iterations(self, rng):
        fam = Affine(rng.normal(size=3), rng.normal(size=(3, 2)), 1.0)
        cs = kmeans(Dataset(rng.normal(size=(8, 2))), 2)
        prob = MroProblem([fam], 3, -np.ones(3), cs, UncertaintySpec(2, 0.3, SupportSet.full(2)),
                          lb=0.0, ub=1.0)
        res = cutting_plane_solve(prob)
        assert res.converged and res.iterations <= 2
        assert res.solution.objective == pytest.approx(solve_problem(prob).objective,
                                                       rel=1e-5, abs=1e-7)

    def test_eps_zero_single_iteration(self):
        res = cutting_plane_solve(quad_problem(1, eps=0.0))
        assert res.converged and res.iterations == 1

    @pytest.mark.parametrize("seed", range(3))
    def test_quadratic_matches_dual(self, seed):
        prob = quad_problem(seed)
        res = cutting_plane_solve(prob)
        dual = solve_problem(prob)
        assert res.converged
        assert res.solution.objective == pytest.approx(dual.objective, rel=1e-4, abs=1e-7)
        objs = [h["master_obj"] for h in res.history]
        assert all(a <= b + 1e-7 * (1 + abs(b)) for a, b in zip(objs, objs[1:]))

    def test_history_csv(self):
        res = cutting_plane_solve(quad_problem(2))
        lines = res.history_csv().strip().splitlines()
        assert lines[0] == "iter,master_obj,oracle_val,time"
        assert len(lines) == res.iterations + 1

    def test_iteration_limit_flag(self):
        res = cutting_plane_solve(quad_problem(3, eps=1.0), CuttingPlaneConfig(max_iter=1))
        assert not res.converged and res.solution.status == "iteration-limit"

    def test_binary_enumeration_master(self):
        from mro.experiments import capital_problem, gen_capital

        inst = gen_capital(n=6, T=3, N=20, seed=4)
        cs = kmeans(inst.data, 4)
        prob = capital_problem(inst, cs, UncertaintySpec(2, 0.05, SupportSet.box(
            np.zeros(6), np.ones(6))))
        cp = cutting_plane_solve(prob)
        dual = solve_problem(prob)
        assert cp.converged
        assert cp.solution.objective == pytest.approx(dual.objective, rel=1e-5)

    @pytest.mark.parametrize("bad", [{"violation_tol": 0}, {"max_iter": 0}])
    def test_config_validation(self, bad):
        with pytest.raises(ValueError):
            CuttingPlaneConfig(**bad)
