"""Cutting-plane solution of the mean robust problem.

The master problem minimizes the objective subject to the robust constraint
evaluated at a finite collection of scenario K-tuples.  The oracle maximizes
``sum_k w_k g(v_k, x)`` over the uncertainty set by projected gradient ascent
and returns a new K-tuple whenever the current ``x`` is violated.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from mro.clustering import ClusteredSet
from mro.conic import DEFAULT_TOL, ProgramBuilder, Solution, Tolerances
from mro.data import UncertaintySpec, ball_membership
from mro.families import ConcaveQuadratic, CapitalBudgetingNPV, ConstraintFamily, DomainError
from mro.projection import project_uncertainty_set
from mro.reformulate import MroProblem, _objective, add_x_constraints, solve_program

log = logging.getLogger(__name__)

INF = math.inf


@dataclass(frozen=True)
class OracleConfig:
    max_iter: int = 500
    grad_tol: float = 1e-8
    proj_tol: float = 1e-10
    proj_sweeps: int = 200
    step: str = "bb"          # "bb" (Barzilai-Borwein start) or "fixed"
    initial_step: float = 1e-2
    max_step: float = 1e6
    stall_window: int = 10
    stall_tol: float = 1e-13

    def __post_init__(self):
        if min(self.grad_tol, self.proj_tol, self.initial_step) <= 0 or self.max_iter < 1:
            raise ValueError("oracle tolerances and step sizes must be positive")


@dataclass(frozen=True)
class CuttingPlaneConfig:
    max_iter: int = 100
    violation_tol: float = 1e-6
    dedup_tol: float = 1e-9
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def __post_init__(self):
        if self.violation_tol <= 0 or self.dedup_tol <= 0 or self.max_iter < 1:
            raise ValueError("tolerances must be positive")


@dataclass
class OracleResult:
    points: np.ndarray
    value: float
    status: str
    iterations: int


def _require_concave(family: ConstraintFamily, x: np.ndarray) -> np.ndarray:
    """Reject inputs where ``g`` is not concave in ``u``; clip solver round-off."""
    if not isinstance(family, ConstraintFamily):
        raise TypeError("oracle needs a ConstraintFamily")
    if isinstance(family, (ConcaveQuadratic, CapitalBudgetingNPV)):
        if np.any(x < -1e-6):
            raise ValueError(f"{family.tag} is concave in u only for x >= 0")
        return np.maximum(x, 0.0)
    return x


def max_oracle(family: ConstraintFamily, x, clustered: ClusteredSet,
               spec: UncertaintySpec, cfg: OracleConfig | None = None) -> OracleResult:
    """Projected gradient ascent of ``sum_k w_k g(v_k, x)`` over the uncertainty set.

    The ascent works in the cluster-weighted metric, so the search direction
    for cluster ``k`` is simply ``grad_u g(v_k, x)``.  Step sizes start from a
    Barzilai-Borwein estimate (or ``1/L`` on the first step when a smoothness
    bound exists) and are halved until the ascent condition holds, which keeps
    the iterates monotone.
    """
    cfg = cfg or OracleConfig()
    x = np.asarray(x, dtype=float).reshape(-1)
    x = _require_concave(family, x)
    w = clustered.weights

    def project(Y):
        return project_uncertainty_set(Y, clustered, spec, cfg.proj_sweeps, cfg.proj_tol)

    def value(V):
        try:
            return float(sum(wk * family.eval(v, x) for wk, v in zip(w, V)))
        except DomainError:
            return -INF

    def grad(V):
        return np.array([family.grad_u(v, x) for v in V])

    V = project(clustered.centroids.copy())
    f = value(V)
    if spec.epsilon == 0:
        return OracleResult(V, f, "optimal", 0)
    G = grad(V)
    step = cfg.initial_step
    if cfg.step == "bb":
        try:
            L = family.smoothness(x, clustered.centroids)
        except (ValueError, NotImplementedError):
            L = None
        if L is not None:
            step = cfg.max_step if L <= 0 else min(1.0 / L, cfg.max_step)
    status = "iteration-limit"
    it = 0
    trace = [f]
    # keep trial points within a bounded distance of the set; a linear
    # objective would otherwise push them arbitrarily far away
    reach = 10.0 * (spec.epsilon + np.max(np.abs(clustered.centroids)) + 1.0)
    for it in range(1, cfg.max_iter + 1):
        gnorm = math.sqrt(float(np.sum(w[:, None] * G * G)))
        s = min(step, reach / gnorm) if gnorm > 0 else step
        while True:
            Vn = project(V + s * G)
            dV = Vn - V
            fn = value(Vn)
            lin = float(np.sum(w[:, None] * G * dV))
            quad = float(np.sum(w[:, None] * dV * dV))
            if fn >= f + lin - quad / (2 * s) - 1e-15 * (1 + abs(f)) or quad <= 1e-30:
                break
            s *= 0.5
            if s < 1e-20:
                break
        gmap = math.sqrt(quad) / s
        Gn = grad(Vn) if np.isfinite(fn) else G
        if fn < f:  # never accept a decrease
            Vn, fn, Gn = V, f, G
        if cfg.step == "bb":
            dG = Gn - G
            denom = -float(np.sum(w[:, None] * dV * dG))
            step = min(quad / denom, cfg.max_step) if denom > 1e-300 else cfg.max_step
        else:
            step = s
        improved = fn - f
        V, f, G = Vn, fn, Gn
        trace.append(f)
        # flat directions (p = 1, linear g) leave the gradient mapping nonzero
        # at optimal points, so stagnation of the value also stops the ascent
        stalled = len(trace) > cfg.stall_window and (
            f - trace[-1 - cfg.stall_window] <= cfg.stall_tol * (1 + abs(f)))
        if gmap <= cfg.grad_tol or quad <= 1e-30 or stalled or (
                0 <= improved <= 1e-15 * (1 + abs(f)) and gmap <= 1e-6):
            status = "optimal"
            break
    if not ball_membership(V, clustered.centroids, w, spec, tol=1e-8):
        log.warning("oracle point violates the uncertainty set beyond 1e-8")
    return OracleResult(V, f, status, it)


def _normalize_sets(prob: MroProblem, scenario_sets):
    out = []
    for item in scenario_sets:
        if isinstance(item, tuple):
            out.append((int(item[0]), np.atleast_2d(item[1])))
        else:
            out.append((0, np.atleast_2d(item)))
    return out


LINEAR_IN_X = ("affine", "concave-quadratic", "capital-npv")


def _pure_binary_linear(prob: MroProblem) -> bool:
    return (len(prob.binary) == prob.n and prob.n <= 22
            and all(f.tag in LINEAR_IN_X for f in prob.families))


def _enumerate_master(prob: MroProblem, sets) -> Solution:
    """Exact master for all-binary ``x`` when every cut is affine in ``x``.

    Each cut is evaluated on every 0/1 pattern at once; the first pattern in
    lexicographic order wins ties, as in the enumeration of conic programs.
    """
    t0 = time.perf_counter()
    n = prob.n
    pats = ((np.arange(2**n)[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)
    ok = np.ones(len(pats), dtype=bool)
    if prob.A_ub is not None:
        ok &= np.all(pats @ np.atleast_2d(prob.A_ub).T <= np.asarray(prob.b_ub) + 1e-9, axis=1)
    if prob.A_eq is not None:
        ok &= np.all(np.abs(pats @ np.atleast_2d(prob.A_eq).T - prob.b_eq) <= 1e-9, axis=1)
    for bound, sign in ((prob.lb, 1.0), (prob.ub, -1.0)):
        if bound is not None:
            vals = np.broadcast_to(np.asarray(bound, dtype=float), (n,))
            ok &= np.all(sign * (pats - vals) >= -1e-9, axis=1)
    worst = np.full((len(prob.families), len(pats)), -INF)
    w = prob.clustered.weights
    for fi, pts in sets:
        b = ProgramBuilder()
        x = b.var("x", n)
        e = prob.families[fi].scenario_bound(b, x, pts, w)
        coef = np.asarray(e.A.todense()).reshape(-1)
        coef = np.pad(coef, (0, max(0, n - coef.size)))[:n]
        worst[fi] = np.maximum(worst[fi], pats @ coef + e.c[0])
    obj = pats @ prob.cost
    if prob.epigraph and sets:
        tau = worst[0]
        obj = obj + tau
    else:
        tau = None
        ok &= np.all(worst <= 0, axis=0)
    elapsed = time.perf_counter() - t0
    info = {"assignments": len(pats), "strategy": "pattern-enumeration"}
    if not ok.any():
        return Solution("infeasible", None, INF, elapsed, "enumeration", info)
    vals = np.where(ok, obj, INF)
    best = vals.min()
    idx = int(np.flatnonzero(vals <= best + 1e-9 * (1 + abs(best)))[0])
    x = pats[idx]
    if prob.epigraph:
        x = np.append(x, tau[idx] if tau is not None else 0.0)
    info["pattern"] = pats[idx].astype(int).tolist()
    return Solution("optimal", x, float(vals[idx]), elapsed, "enumeration", info)


def master_solve(prob: MroProblem, scenario_sets, backend=None,
                 tol: Tolerances = DEFAULT_TOL, strategy: str = "exhaustive") -> Solution:
    """Minimize over ``x`` with one constraint per stored scenario K-tuple.

    ``scenario_sets`` holds K x m point arrays, or ``(family_index, points)``
    pairs in multi-constraint problems.  Without any scenario the uncertain
    constraints (and ``tau``) are dropped.  When every variable is binary and
    the cuts are affine in ``x`` the master is solved by direct enumeration.
    """
    sets = _normalize_sets(prob, scenario_sets)
    if _pure_binary_linear(prob) and strategy == "exhaustive":
        return _enumerate_master(prob, sets)
    b = ProgramBuilder()
    epigraph = prob.epigraph and bool(sets)
    x, tau = add_x_constraints(b, prob.with_(epigraph=epigraph))
    w = prob.clustered.weights
    for fi, pts in sets:
        bound = prob.families[fi].scenario_bound(b, x, pts, w)
        b.le(bound, tau if tau is not None else 0.0)
    return solve_program(b.build(_objective(prob, x, tau)), backend, tol, strategy)


@dataclass
class CuttingPlaneResult:
    solution: Solution
    iterations: int
    history: list[dict]
    converged: bool

    def history_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["iter", "master_obj", "oracle_val", "time"])
        for h in self.history:
            wr.writerow([h["iter"], repr(h["master_obj"]), repr(h["oracle_val"]),
                         repr(h["time"])])
        return buf.getvalue()


def _duplicate(points, existing, tol) -> bool:
    return any(p.shape == points.shape and np.max(np.abs(p - points)) <= tol
               for p in existing)


def cutting_plane_solve(prob: MroProblem, cfg: CuttingPlaneConfig | None = None,
                        backend=None, tol: Tolerances = DEFAULT_TOL,
                        strategy: str = "exhaustive") -> CuttingPlaneResult:
    """Alternate master solves and oracle calls until no cut is violated."""
    cfg = cfg or CuttingPlaneConfig()
    cents = prob.clustered.centroids
    sets: list[tuple[int, np.ndarray]] = [(i, cents.copy()) for i in range(len(prob.families))]
    history: list[dict] = []
    total_time = 0.0
    sol = None
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        t0 = time.perf_counter()
        sol = master_solve(prob, sets, backend, tol, strategy)
        total_time += sol.solve_time
        if not sol.ok:
            history.append({"iter": it, "master_obj": sol.objective, "oracle_val": math.nan,
                            "time": time.perf_counter() - t0})
            break
        x = prob.x_of(sol)
        tau = prob.tau_of(sol)
        worst = -INF
        added = False
        for fi, fam in enumerate(prob.families):
            res = max_oracle(fam, x, prob.clustered, prob.spec, cfg.oracle)
            viol = res.value - tau
            worst = max(worst, viol)
            if viol > cfg.violation_tol:
                existing = [p for j, p in sets if j == fi]
                if not _duplicate(res.points, existing, cfg.dedup_tol):
                    sets.append((fi, res.points))
                    added = True
        history.append({"iter": it, "master_obj": sol.objective, "oracle_val": worst,
                        "time": time.perf_counter() - t0})
        if worst <= cfg.violation_tol:
            converged = True
            break
        if not added:
            log.warning("cutting plane stalled: the oracle returned an existing cut")
            break
    if sol is None:
        raise RuntimeError("cutting plane did not run")
    status = sol.status if not sol.ok or converged else "iteration-limit"
    info = dict(sol.info, iterations=it, cuts=len(sets), converged=converged)
    final = Solution(status, sol.x, sol.objective, total_time, sol.backend, info)
    return CuttingPlaneResult(final, it, history, converged)
