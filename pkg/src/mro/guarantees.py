"""Probabilistic-guarantee utilities.

* the radius inflation ``eps + eta_N(K)`` that carries a guarantee for the
  unclustered set over to the clustered one;
* the sandwich ``g_N <= g_K <= g_N* + (L/2) D(K)`` on worst-case values;
* out-of-sample estimates of the violation probability ``beta`` and a
  cross-validated choice of ``eps``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mro.clustering import ClusteredSet, singletons
from mro.conic import Solution
from mro.data import L2, Dataset, NormSpec, UncertaintySpec
from mro.families import ConstraintFamily, smoothness_bound
from mro.reformulate import MroProblem, worst_case_value

log = logging.getLogger(__name__)


def adjusted_epsilon(eps_base: float, clustered: ClusteredSet) -> float:
    """Radius that keeps the unclustered guarantee after clustering."""
    if eps_base < 0:
        raise ValueError("eps_base must be nonnegative")
    return eps_base + clustered.eta


def wasserstein_distance(P, wP, Q, wQ, p: float = 2, norm: NormSpec = L2) -> float:
    """Order-``p`` optimal-transport distance between two discrete distributions."""
    from scipy.optimize import linprog

    P, Q = np.atleast_2d(P), np.atleast_2d(Q)
    wP, wQ = np.asarray(wP, dtype=float), np.asarray(wQ, dtype=float)
    cost = norm(P[:, None, :] - Q[None, :, :], axis=2)
    if p == math.inf:
        # bottleneck: smallest threshold admitting a feasible plan
        for c in np.unique(cost):
            if _feasible_plan(cost <= c, wP, wQ):
                return float(c)
        return float(cost.max())
    a, b = P.shape[0], Q.shape[0]
    A_eq = np.vstack([np.kron(np.eye(a), np.ones((1, b))),
                      np.kron(np.ones((1, a)), np.eye(b))])
    res = linprog((cost**p).reshape(-1), A_eq=A_eq, b_eq=np.concatenate([wP, wQ]),
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(max(res.fun, 0.0) ** (1.0 / p))


def _feasible_plan(allowed, wP, wQ) -> bool:
    from scipy.optimize import linprog

    a, b = allowed.shape
    A_eq = np.vstack([np.kron(np.eye(a), np.ones((1, b))),
                      np.kron(np.ones((1, a)), np.eye(b))])
    ub = np.where(allowed.reshape(-1), None, 0.0)
    res = linprog(np.zeros(a * b), A_eq=A_eq, b_eq=np.concatenate([wP, wQ]),
                  bounds=[(0, u) for u in ub], method="highs")
    return res.status == 0


@dataclass(frozen=True)
class SandwichReport:
    g_N: float
    g_K: float
    g_N_star: float
    L: float
    D: float
    tol: float = 1e-6

    @property
    def bound(self) -> float:
        return 0.5 * self.L * self.D

    @property
    def delta_estimate(self) -> float:
        return self.g_N_star - self.g_N

    @property
    def holds_lower(self) -> bool:
        return self.g_N <= self.g_K + self.tol

    @property
    def holds_upper(self) -> bool:
        return self.g_K <= self.g_N_star + self.bound + self.tol

    def to_dict(self) -> dict:
        return {"g_N": self.g_N, "g_K": self.g_K, "g_N_star": self.g_N_star,
                "L": self.L, "D": self.D, "bound": self.bound,
                "delta_estimate": self.delta_estimate,
                "holds_lower": self.holds_lower, "holds_upper": self.holds_upper}


def sandwich_check(family: ConstraintFamily, x, data, clustered: ClusteredSet,
                   spec: UncertaintySpec, backend=None, tol: float = 1e-6) -> SandwichReport:
    """Evaluate the three worst-case values and the smoothness slack at ``x``."""
    data = data if isinstance(data, Dataset) else Dataset(data)
    full = singletons(data, spec.norm)
    g_N = worst_case_value(family, x, full, spec, backend)
    g_K = worst_case_value(family, x, clustered, spec, backend)
    g_N_star = worst_case_value(family, x, full, spec, backend, relax_support=True)
    L = smoothness_bound(family, x, data)
    return SandwichReport(g_N, g_K, g_N_star, L, clustered.D, tol)


@dataclass
class BetaEstimate:
    """Share of repetitions whose out-of-sample mean constraint value is positive."""

    beta_hat: float
    repetitions: int
    means: list[float]
    objectives: list[float] = field(default_factory=list)
    failures: int = 0

    @property
    def mean_objective(self) -> float:
        return float(np.mean(self.objectives)) if self.objectives else math.nan

    @staticmethod
    def from_means(means, objectives=(), failures: int = 0) -> "BetaEstimate":
        means = [float(v) for v in means]
        beta = sum(v > 0 for v in means) / len(means) if means else math.nan
        return BetaEstimate(beta, len(means), means, list(objectives), failures)


def evaluate_out_of_sample(prob: MroProblem, solution: Solution, samples,
                           criterion: str = "simultaneous") -> float:
    """Empirical mean of the uncertain constraint at the solution.

    In epigraph mode the in-sample ``tau`` is subtracted, so a positive value
    means the objective bound was exceeded on average.  With several
    constraints ``"simultaneous"`` averages ``max_l g_l`` while ``"separate"``
    takes ``max_l`` of the per-constraint averages.
    """
    x = prob.x_of(solution)
    tau = prob.tau_of(solution)
    U = np.atleast_2d(samples)
    G = np.array([[fam.eval(u, x) for u in U] for fam in prob.families]) - tau
    if criterion == "simultaneous":
        return float(np.mean(G.max(axis=0)))
    if criterion == "separate":
        return float(G.mean(axis=1).max())
    raise ValueError(f"unknown criterion {criterion!r}")


def out_of_sample_beta(prob_template: Callable[[Dataset], MroProblem],
                       solve_fn: Callable[[MroProblem], Solution],
                       data_generator: Callable[[np.random.Generator, int], np.ndarray],
                       R: int = 50, N_train: int = 50, N_eval: int | None = None,
                       seed: int = 0, criterion: str = "simultaneous") -> BetaEstimate:
    """Estimate ``beta`` by repeated train/solve/evaluate cycles.

    Repetition ``r`` trains on ``data_generator(default_rng([seed, r, 0]), N_train)``
    and evaluates on ``data_generator(default_rng([seed, r, 1]), N_eval)``, so
    different templates called with the same seed share their data.
    Failed solves are counted and left out of the ratio.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    N_eval = N_eval or 10 * N_train
    means, objs, failures = [], [], 0
    for r in range(R):
        train = Dataset(data_generator(np.random.default_rng([seed, r, 0]), N_train))
        prob = prob_template(train)
        sol = solve_fn(prob)
        if not sol.ok:
            failures += 1
            continue
        test = data_generator(np.random.default_rng([seed, r, 1]), N_eval)
        means.append(evaluate_out_of_sample(prob, sol, test, criterion))
        objs.append(sol.objective)
    if failures:
        log.warning("%d of %d repetitions failed to solve", failures, R)
    return BetaEstimate.from_means(means, objs, failures)


@dataclass
class CrossValidation:
    eps_star: float
    table: list[dict]
    qualified: bool

    def __iter__(self):
        return iter((self.eps_star, self.table))


def cross_validate_epsilon(make_template: Callable[[float], Callable[[Dataset], MroProblem]],
                           solve_fn, data_generator, eps_grid, target_beta: float,
                           R: int = 50, N_train: int = 50, N_eval: int | None = None,
                           seed: int = 0, criterion: str = "simultaneous") -> CrossValidation:
    """Smallest grid ``eps`` whose estimated ``beta`` is at most ``target_beta``.

    When no grid point qualifies the largest ``eps`` is returned with
    ``qualified=False``.
    """
    grid = list(eps_grid)
    if not grid:
        raise ValueError("eps_grid is empty")
    if grid != sorted(grid):
        raise ValueError("eps_grid must be sorted")
    if not 0 < target_beta < 1:
        raise ValueError("target_beta must lie in (0, 1)")
    table = []
    for eps in grid:
        est = out_of_sample_beta(make_template(eps), solve_fn, data_generator, R, N_train,
                                 N_eval, seed, criterion)
        table.append({"eps": eps, "beta_hat": est.beta_hat,
                      "objective": est.mean_objective, "failures": est.failures})
    for row in table:
        if row["beta_hat"] <= target_beta:
            return CrossValidation(row["eps"], table, True)
    log.warning("no eps in the grid reaches beta <= %g; returning the largest", target_beta)
    return CrossValidation(grid[-1], table, False)
