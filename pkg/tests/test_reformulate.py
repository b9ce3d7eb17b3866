import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from conftest import grid_max_1d, random_pd
from mro.clustering import ClusteredSet, from_assignments, kmeans, singletons
from mro.conic import ProgramBuilder, solve
from mro.data import Dataset, NormSpec, SupportSet, UncertaintySpec
from mro.experiments import facility_problem, gen_facility
from mro.families import Affine, CapitalBudgetingNPV, ConcaveQuadratic, LogSumExp
from mro.reformulate import (
    MroProblem,
    UnsupportedError,
    emit_affine_compact,
    emit_dual,
    emit_dual_finite_p,
    emit_dual_inf,
    phi,
    problem_from_dict,
    problem_to_dict,
    solve_problem,
    worst_case_value,
)

INF = math.inf


def one_cluster(center):
    c = np.atleast_2d(np.asarray(center, dtype=float))
    return ClusteredSet(c, np.array([1.0]), np.array([0]), 0.0, 0.0, 1)


def affine_problem(r, n=3, m=2, N=8, K=2, p=2, eps=0.3, support=None):
    """Random affine robust LP: min c@x, (a + P u)@x <= 1, 0 <= x <= 1."""
    data = Dataset(r.normal(size=(N, m)))
    cs = kmeans(data, K, seed=0)
    fam = Affine(r.normal(size=n), r.normal(size=(n, m)), 1.0)
    spec = UncertaintySpec(p, eps, support or SupportSet.full(m))
    prob = MroProblem([fam], n, -r.uniform(0.5, 1.5, n), cs, spec, lb=0.0, ub=1.0)
    return prob, data


class TestWorstCaseExamples:
    def test_affine_inf_centered(self):
        fam = Affine(np.zeros(2), np.eye(2), 0.0)
        spec = UncertaintySpec(INF, 1.0, SupportSet.full(2))
        assert worst_case_value(fam, [1, 0], one_cluster([0, 0]), spec) == \
            pytest.approx(1.0, abs=1e-7)

    def test_affine_inf_shifted_against_grid(self):
        fam = Affine(np.zeros(2), np.eye(2), 0.0)
        spec = UncertaintySpec(INF, 1.0, SupportSet.full(2))
        # brute force over the unit circle around (2, 3)
        th = np.linspace(0, 2 * np.pi, 100_001)
        ref = np.max(2 + np.cos(th))
        val = worst_case_value(fam, [1, 0], one_cluster([2, 3]), spec)
        assert val == pytest.approx(ref, abs=1e-7) and val == pytest.approx(3.0, abs=1e-7)

    @pytest.mark.parametrize("eps", [0.0, 0.3, 2.0])
    def test_quadratic_center(self, eps):
        fam = ConcaveQuadratic(2 * np.eye(1))
        spec = UncertaintySpec(2, eps, SupportSet.full(1))
        assert worst_case_value(fam, [1.0], one_cluster([0.0]), spec) == \
            pytest.approx(0.0, abs=1e-7)

    def test_quadratic_box_against_grid(self):
        fam = ConcaveQuadratic(2 * np.eye(1))
        spec = UncertaintySpec(2, 0.5, SupportSet.box([0.5], [1.5]))
        _, ref = grid_max_1d(lambda u: -u * u, 0.5, 1.0)
        val = worst_case_value(fam, [1.0], one_cluster([1.0]), spec)
        assert val == pytest.approx(ref, abs=1e-6) and val == pytest.approx(-0.25, abs=1e-6)

    def test_lse_routes_to_oracle(self):
        spec = UncertaintySpec(2, 0.1, SupportSet.box([0.01, 0.01], [INF, INF]))
        val = worst_case_value(LogSumExp(2), [0.0, 0.0], one_cluster([1.0, 1.0]), spec)
        # increasing in u: maximizer moves along (1, 1) by eps / sqrt(2)
        assert val == pytest.approx(math.log(2 + 0.1 * math.sqrt(2)), abs=1e-6)

    def test_relaxed_support_dominates(self):
        fam = ConcaveQuadratic(2 * np.eye(1))
        spec = UncertaintySpec(2, 0.5, SupportSet.box([0.9], [1.5]))
        cs = one_cluster([1.0])
        assert worst_case_value(fam, [1.0], cs, spec, relax_support=True) >= \
            worst_case_value(fam, [1.0], cs, spec) - 1e-8


class TestClosedForms:
    def test_phi(self):
        assert phi(2) == pytest.approx(0.25)
        assert phi(3 / 2) == pytest.approx(0.5**0.5 / 1.5**1.5)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_affine_single_cluster_p2(self, seed):
        r = np.random.default_rng(seed)
        fam = Affine(r.normal(size=3), r.normal(size=(3, 2)), float(r.normal()))
        x, d = r.normal(size=3), r.normal(size=2)
        eps = float(r.uniform(0.01, 2))
        y = fam.P.T @ x
        # inf over lam of a@x - b + |y|^2/(4 lam) + lam eps^2 + y@d
        ref = fam.a @ x - fam.b + eps * np.linalg.norm(y) + y @ d
        spec = UncertaintySpec(2, eps, SupportSet.full(2))
        assert worst_case_value(fam, x, one_cluster(d), spec) == pytest.approx(ref, abs=1e-6)

    @pytest.mark.parametrize("order", [1, 2, INF])
    def test_affine_inf_norm_counterpart(self, order, rng):
        fam = Affine(rng.normal(size=3), rng.normal(size=(3, 2)), 0.7)
        x = rng.normal(size=3)
        norm = NormSpec(order)
        spec = UncertaintySpec(INF, 0.4, SupportSet.full(2), norm)
        ref = fam.a @ x - fam.b + 0.4 * norm.dual(fam.P.T @ x)
        assert worst_case_value(fam, x, one_cluster([0, 0]), spec) == \
            pytest.approx(ref, abs=1e-7)


class TestEmission:
    def test_npv_power_cone_count(self):
        fam = CapitalBudgetingNPV([[0.3, 0.4]])
        cs = one_cluster([0.05])
        spec = UncertaintySpec(2, 0.1, SupportSet.box([0.0], [1.0]))
        prob = MroProblem([fam], 1, [0.0], cs, spec, epigraph=True, lb=0, ub=1)
        prog = emit_dual_finite_p(prob)
        assert prog.count("power3d") == 1
        assert [b.alpha for b in prog.blocks if b.kind == "power3d"] == [0.5]

    def test_facility_blocks(self):
        inst = gen_facility(seed=0)
        spec = UncertaintySpec(INF, 0.5, SupportSet.nonneg(25))
        prob = facility_problem(inst, kmeans(inst.data, 1), spec)
        prog = emit_dual_inf(prob)
        assert sum(name == "s" for name, _, _ in prog.var_names) == 5

    def test_routing_errors(self, rng):
        prob, _ = affine_problem(rng, p=2)
        with pytest.raises(UnsupportedError):
            emit_dual_inf(prob)
        with pytest.raises(UnsupportedError):
            emit_dual_finite_p(prob.with_(spec=prob.spec.replace(p=INF)))
        with pytest.raises(UnsupportedError):
            emit_dual(prob.with_(spec=prob.spec.replace(p=3)))
        lse = MroProblem([LogSumExp(2)], 2, [0, 0], prob.clustered,
                         UncertaintySpec(2, 0.1, SupportSet.full(2)), epigraph=True)
        with pytest.raises(UnsupportedError):
            emit_dual(lse)
        with pytest.raises(UnsupportedError):
            emit_affine_compact(lse)

    def test_problem_validation(self, rng):
        prob, _ = affine_problem(rng)
        with pytest.raises(ValueError):
            prob.with_(cost=np.ones(2))
        with pytest.raises(ValueError):
            prob.with_(families=[])
        with pytest.raises(ValueError):
            prob.with_(families=[prob.family, prob.family], epigraph=True)


class TestEquivalences:
    @pytest.mark.parametrize("p", [1, 2, INF])
    def test_affine_k_invariance(self, p, rng):
        prob, data = affine_problem(rng, N=10, p=p)
        base = solve_problem(prob.with_(clustered=kmeans(data, 1)))
        full = solve_problem(prob.with_(clustered=singletons(data)))
        assert base.ok and full.ok
        assert full.objective == pytest.approx(base.objective, rel=1e-6, abs=1e-8)
        compact = solve_problem(prob, method="compact")
        assert compact.objective == pytest.approx(base.objective, rel=1e-6, abs=1e-8)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=10, deadline=None)
    def test_affine_p1_equals_pinf(self, seed):
        prob, _ = affine_problem(np.random.default_rng(seed), K=3)
        one = solve_problem(prob.with_(spec=prob.spec.replace(p=1)))
        inf = solve_problem(prob.with_(spec=prob.spec.replace(p=INF)))
        assert abs(one.objective - inf.objective) <= 1e-8 * max(1.0, abs(one.objective))

    def test_eps_zero_is_nominal(self, rng):
        prob, _ = affine_problem(rng, eps=0.0)
        sol = solve_problem(prob)
        x = prob.x_of(sol)
        cs = prob.clustered
        assert prob.family.eval(cs.weights @ cs.centroids, x) <= 1e-7

    @pytest.mark.parametrize("seed", range(4))
    def test_wasserstein_dro_equivalence(self, seed):
        """K = N equals the type-2 Wasserstein DRO worst case.

        Independent oracle: the dual ``inf_lam lam eps^2 + mean_i sup_u
        [g(u) - lam |u - d_i|^2]`` with the inner sup of a concave quadratic
        in closed form, minimized over ``lam`` by scipy.
        """
        r = np.random.default_rng(seed)
        A = random_pd(r, 2, 2)
        fam = ConcaveQuadratic(A)
        x = r.uniform(0.2, 1, 2)
        D = r.normal(size=(6, 2))
        eps = 0.4
        M = np.einsum("n,nij->ij", x, A)

        def dual(lam):
            H = M + 2 * lam * np.eye(2)
            U = np.linalg.solve(H, 2 * lam * D.T).T
            vals = -0.5 * np.einsum("ki,ij,kj->k", U, M, U) - lam * np.sum((U - D) ** 2, 1)
            return lam * eps**2 + vals.mean()

        ref = minimize_scalar(dual, bounds=(1e-9, 1e4), method="bounded",
                              options={"xatol": 1e-12}).fun
        spec = UncertaintySpec(2, eps, SupportSet.full(2))
        val = worst_case_value(fam, x, singletons(D), spec)
        assert val == pytest.approx(ref, rel=1e-6, abs=1e-8)

    def test_hand_built_affine_dro_program(self, rng):
        """K = N program against a hand-built type-1 DRO LP (same optimum)."""
        prob, data = affine_problem(rng, N=6, p=1, eps=0.2)
        prob = prob.with_(clustered=singletons(data))
        fam = prob.family
        b = ProgramBuilder()
        x = b.var("x", 3)
        b.ge(x, 0.0)
        b.le(x, 1.0)
        lam = b.var("lam")
        y = fam.P.T @ x
        b.norm_le(y, lam, 2)
        dmean = data.samples.mean(axis=0)
        b.le(fam.a @ x - fam.b + y.dot(dmean) + lam * 0.2, 0.0)
        ref = solve(b.build(prob.cost @ x))
        ours = solve_problem(prob)
        assert ours.objective == pytest.approx(ref.objective, abs=1e-8)

    def test_box_support_binds(self, rng):
        prob, _ = affine_problem(rng, eps=2.0, support=SupportSet.box([-1.5, -1.5],
                                                                         [1.5, 1.5]))
        free = solve_problem(prob.with_(spec=prob.spec.replace(support=SupportSet.full(2))))
        boxed = solve_problem(prob)
        assert boxed.objective <= free.objective + 1e-8


class TestProblemFiles:
    def test_roundtrip_facility(self):
        inst = gen_facility(n=3, m=6, N=10, seed=1)
        cs = kmeans(inst.data, 2)
        prob = facility_problem(inst, cs, UncertaintySpec(INF, 0.3, SupportSet.nonneg(6)))
        back = problem_from_dict(problem_to_dict(prob), cs)
        assert emit_dual(back).equals(emit_dual(prob))

    def test_overrides(self, rng):
        prob, _ = affine_problem(rng)
        back = problem_from_dict(problem_to_dict(prob), prob.clustered, p=INF, epsilon=0.9)
        assert back.spec.p == INF and back.spec.epsilon == 0.9
