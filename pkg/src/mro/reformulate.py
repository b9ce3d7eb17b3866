"""Conic dual reformulations of the mean robust problem.

For one uncertain constraint ``sup_{u in U(K, eps)} sum_k w_k g(v_k, x) <= 0``
the inner supremum is dualized cluster by cluster.  With support
``S = {u : C u <= b}`` and multipliers ``gamma_k >= 0`` it is bounded by

* finite ``p``:  ``lam * eps^p + sum_k w_k s_k`` where ``s_k`` dominates
  ``[-g]^*(zeta_k) - zeta_k @ dbar_k + gamma_k @ (b - C dbar_k)
  + phi(q) lam ||(zeta_k + C^T gamma_k) / lam||_*^q``;
* ``p = inf``: ``sum_k w_k s_k`` with the norm term replaced by
  ``eps ||zeta_k + C^T gamma_k||_*``.

``phi(2) = 1/4`` gives the rotated-cone term ``||z||^2 / (4 lam)``; ``p = 1``
turns the norm term into the constraint ``||z||_* <= lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from mro.clustering import ClusteredSet
from mro.conic import (
    DEFAULT_TOL,
    ConicProgram,
    Expr,
    ProgramBuilder,
    Solution,
    Tolerances,
    get_backend,
    solve_mixed_binary,
)
from mro.data import UncertaintySpec
from mro.families import Affine, ConstraintFamily

INF = math.inf


class UnsupportedError(ValueError):
    """No direct reformulation exists for this (family, p) pair."""


class SolveError(RuntimeError):
    """The backend did not return an optimal solution."""

    def __init__(self, solution: Solution):
        super().__init__(f"backend {solution.backend} returned status {solution.status}")
        self.solution = solution


def phi(q: float) -> float:
    """Coefficient ``(q-1)^(q-1) / q^q`` of the conjugate norm power."""
    if q == INF:
        return 0.0
    return (q - 1) ** (q - 1) / q**q


@dataclass(eq=False)
class MroProblem:
    """Minimize ``cost @ x (+ tau)`` subject to robust and deterministic constraints.

    With ``epigraph=True`` a scalar ``tau`` is added to the objective and the
    (single) uncertain constraint reads ``sup ... <= tau``.  Every family in
    ``families`` is robustified separately over the same uncertainty set.
    """

    families: Sequence[ConstraintFamily]
    n: int
    cost: np.ndarray
    clustered: ClusteredSet
    spec: UncertaintySpec
    epigraph: bool = False
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lb: np.ndarray | float | None = None
    ub: np.ndarray | float | None = None
    binary: tuple[int, ...] = ()
    name: str = "mro"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.families, ConstraintFamily):
            self.families = [self.families]
        self.families = list(self.families)
        if not self.families:
            raise ValueError("at least one constraint family is required")
        if self.epigraph and len(self.families) != 1:
            raise ValueError("epigraph mode takes a single family")
        self.cost = np.asarray(self.cost, dtype=float).reshape(-1)
        if self.cost.size != self.n:
            raise ValueError("cost length must equal n")
        for fam in self.families:
            if fam.n != self.n:
                raise ValueError(f"family {fam.tag} has n={fam.n}, problem has n={self.n}")
            if fam.m != self.spec.m or fam.m != self.clustered.m:
                raise ValueError("family, spec and clustering disagree on m")
        self.binary = tuple(sorted(int(i) for i in self.binary))

    @property
    def family(self) -> ConstraintFamily:
        return self.families[0]

    def with_(self, **kw) -> "MroProblem":
        return replace(self, **kw)

    def x_of(self, solution: Solution) -> np.ndarray:
        return None if solution.x is None else np.asarray(solution.x[: self.n])

    def tau_of(self, solution: Solution) -> float:
        return float(solution.x[self.n]) if self.epigraph else 0.0


# -- shared pieces -------------------------------------------------------------

def add_x_constraints(b: ProgramBuilder, prob: MroProblem) -> tuple[Expr, Expr | None]:
    """Allocate ``x`` (and ``tau``) and add the deterministic constraints."""
    x = b.var("x", prob.n)
    b.binary.extend(prob.binary)
    tau = b.var("tau") if prob.epigraph else None
    if prob.A_eq is not None:
        b.eq(np.atleast_2d(prob.A_eq) @ x, np.asarray(prob.b_eq, dtype=float))
    if prob.A_ub is not None:
        b.le(np.atleast_2d(prob.A_ub) @ x, np.asarray(prob.b_ub, dtype=float))
    for bound, sense in ((prob.lb, b.ge), (prob.ub, b.le)):
        if bound is None:
            continue
        vals = np.broadcast_to(np.asarray(bound, dtype=float), (prob.n,))
        idx = np.flatnonzero(np.isfinite(vals))
        if idx.size:
            sense(x[idx], vals[idx])
    return x, tau


def _objective(prob: MroProblem, x: Expr, tau: Expr | None) -> Expr:
    obj = prob.cost @ x
    return obj + tau if tau is not None else obj


def dual_bound(b: ProgramBuilder, family: ConstraintFamily, x: Expr,
               clustered: ClusteredSet, spec: UncertaintySpec,
               relax_support: bool = False) -> Expr:
    """Add the dual of the inner maximization; return its scalar objective.

    The returned expression upper-bounds ``sup_U sum_k w_k g(v_k, x)`` for
    every feasible choice of the dual variables and equals it at the optimum.
    """
    if not family.has_conjugate:
        raise UnsupportedError(f"{family.tag} has no direct reformulation; "
                               "use the cutting-plane method")
    p = spec.p
    if p not in (1, 2, INF):
        raise UnsupportedError(f"p={p} has no direct reformulation; "
                               "use the cutting-plane method")
    eps = spec.epsilon
    if eps == 0:
        # a radius-zero set is the same for every p
        p = INF
    C, rhs = spec.support.relaxed().inequalities() if relax_support \
        else spec.support.inequalities()
    dual_ord = spec.norm.dual_order
    lam = None
    if p != INF:
        lam = b.var("lam")
        b.ge(lam, 0.0)
    s = b.var("s", clustered.K)
    for k in range(clustered.K):
        dbar = clustered.centroids[k]
        zeta = b.var(f"zeta{k}", family.m)
        z = zeta
        term = family.conjugate(b, zeta, x) - zeta.dot(dbar)
        if C.shape[0]:
            gamma = b.var(f"gamma{k}", C.shape[0])
            b.ge(gamma, 0.0)
            z = zeta + C.T @ gamma
            term = term + gamma.dot(rhs - C @ dbar)
        if p == INF:
            r = b.var(f"r{k}")
            b.norm_le(z, r, dual_ord)
            term = term + eps * r
        elif p == 2:
            sigma = b.var(f"sigma{k}")
            if dual_ord == 2:
                b.rsoc(lam, 2.0 * sigma, z)
            else:
                r = b.var(f"r{k}")
                b.norm_le(z, r, dual_ord)
                b.rsoc(lam, 2.0 * sigma, r)
            term = term + sigma
        else:  # p == 1
            b.norm_le(z, lam, dual_ord)
        b.le(term, s[k])
    total = s.dot(clustered.weights)
    if lam is not None:
        total = total + lam * eps**p
    return total


def _emit(prob: MroProblem, relax_support: bool = False) -> ConicProgram:
    b = ProgramBuilder()
    x, tau = add_x_constraints(b, prob)
    for fam in prob.families:
        bound = dual_bound(b, fam, x, prob.clustered, prob.spec, relax_support)
        b.le(bound, tau if tau is not None else 0.0)
    return b.build(_objective(prob, x, tau))


def emit_dual_finite_p(prob: MroProblem, relax_support: bool = False) -> ConicProgram:
    """Direct reformulation for ``p`` in {1, 2}."""
    if prob.spec.p not in (1, 2):
        raise UnsupportedError(f"emit_dual_finite_p needs p in {{1, 2}}, got {prob.spec.p}")
    return _emit(prob, relax_support)


def emit_dual_inf(prob: MroProblem, relax_support: bool = False) -> ConicProgram:
    """Direct reformulation for ``p = inf`` (one block per cluster and family)."""
    if prob.spec.p != INF:
        raise UnsupportedError(f"emit_dual_inf needs p = inf, got {prob.spec.p}")
    return _emit(prob, relax_support)


def emit_dual(prob: MroProblem, relax_support: bool = False) -> ConicProgram:
    return _emit(prob, relax_support)


def emit_affine_compact(prob: MroProblem) -> ConicProgram:
    """Support-free compact program for affine families.

    The worst case over ``U(K, eps)`` of an affine constraint depends on the
    data only through the weighted mean of the centroids, so the program size
    is independent of ``K``.
    """
    if not all(isinstance(f, Affine) for f in prob.families):
        raise UnsupportedError("the compact form exists for affine families only")
    spec = prob.spec
    p = INF if spec.epsilon == 0 else spec.p
    if p not in (1, 2, INF):
        raise UnsupportedError(f"p={spec.p} is not supported")
    dmean = prob.clustered.weights @ prob.clustered.centroids
    b = ProgramBuilder()
    x, tau = add_x_constraints(b, prob)
    for i, fam in enumerate(prob.families):
        y = fam.P.T @ x
        lhs = fam.a @ x - fam.b + y.dot(dmean)
        r = b.var(f"r{i}")
        b.norm_le(y, r, spec.norm.dual_order)
        if p == 2:
            lam = b.var(f"lam{i}")
            sigma = b.var(f"sigma{i}")
            b.rsoc(lam, 2.0 * sigma, r)
            lhs = lhs + sigma + lam * spec.epsilon**2
        else:
            lhs = lhs + spec.epsilon * r
        b.le(lhs, tau if tau is not None else 0.0)
    return b.build(_objective(prob, x, tau))


def solve_program(program: ConicProgram, backend=None, tol: Tolerances = DEFAULT_TOL,
                  strategy: str = "exhaustive", n_jobs: int = 1) -> Solution:
    return solve_mixed_binary(program, strategy=strategy, backend=backend, tol=tol,
                              n_jobs=n_jobs)


def solve_problem(prob: MroProblem, method: str = "dual", backend=None,
                  tol: Tolerances = DEFAULT_TOL, strategy: str = "exhaustive",
                  cutting_plane_config=None) -> Solution:
    """Solve with the direct dual (``"dual"``), the affine ``"compact"`` form,
    ``"cutting-plane"``, or ``"auto"`` (dual when available)."""
    if method == "auto":
        direct = prob.spec.p in (1, 2, INF) and all(f.has_conjugate for f in prob.families)
        method = "dual" if direct else "cutting-plane"
    if method == "dual":
        return solve_program(emit_dual(prob), backend, tol, strategy)
    if method == "compact":
        return solve_program(emit_affine_compact(prob), backend, tol, strategy)
    if method == "cutting-plane":
        from mro.cutting_plane import CuttingPlaneConfig, cutting_plane_solve

        cfg = cutting_plane_config or CuttingPlaneConfig()
        return cutting_plane_solve(prob, cfg, backend, tol=tol, strategy=strategy).solution
    raise ValueError(f"unknown method {method!r}")


def worst_case_value(family: ConstraintFamily, x, clustered: ClusteredSet,
                     spec: UncertaintySpec, backend=None, relax_support: bool = False,
                     tol: Tolerances = DEFAULT_TOL, oracle_config=None) -> float:
    """``sup_{U(K, eps)} sum_k w_k g(v_k, x)`` for a fixed ``x``.

    Solved through the dual program when one exists, otherwise through the
    projected-gradient oracle.  ``relax_support`` drops the support.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if not family.has_conjugate or spec.p not in (1, 2, INF):
        from mro.cutting_plane import OracleConfig, max_oracle

        s = spec.replace(support=spec.support.relaxed()) if relax_support else spec
        return max_oracle(family, x, clustered, s, oracle_config or OracleConfig()).value
    b = ProgramBuilder()
    bound = dual_bound(b, family, Expr.constant(x), clustered, spec, relax_support)
    sol = get_backend(backend).solve(b.build(bound), tol)
    if not sol.ok:
        raise SolveError(sol)
    return float(sol.objective)


# -- problem files -------------------------------------------------------------

def _arr(v):
    return None if v is None else np.asarray(v, dtype=float).tolist()


def _bound(v):
    if v is None:
        return None
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return a.item() if np.isfinite(a) else ("inf" if a > 0 else "-inf")
    return [x if np.isfinite(x) else ("inf" if x > 0 else "-inf") for x in a.tolist()]


def problem_to_dict(prob: MroProblem) -> dict:
    """Problem file payload; the clustering is stored separately."""
    return {
        "format": "mro-problem/1",
        "name": prob.name,
        "n": prob.n,
        "cost": prob.cost.tolist(),
        "families": [f.to_dict() for f in prob.families],
        "epigraph": prob.epigraph,
        "A_eq": _arr(prob.A_eq), "b_eq": _arr(prob.b_eq),
        "A_ub": _arr(prob.A_ub), "b_ub": _arr(prob.b_ub),
        "lb": _bound(prob.lb), "ub": _bound(prob.ub),
        "binary": list(prob.binary),
        "support": prob.spec.support.to_dict(),
        "p": "inf" if prob.spec.p == INF else prob.spec.p,
        "epsilon": prob.spec.epsilon,
        "norm": "inf" if prob.spec.norm.order == INF else prob.spec.norm.order,
    }


def problem_from_dict(d: dict, clustered: ClusteredSet, **spec_overrides) -> MroProblem:
    from mro.data import NormSpec, SupportSet
    from mro.families import family_from_dict

    def num(v):
        if v is None:
            return None
        if isinstance(v, str):
            return float(v)
        if isinstance(v, list) and v and not isinstance(v[0], list):
            return np.array([float(x) for x in v])
        return np.asarray(v, dtype=float)

    fams = [family_from_dict(f) for f in d["families"]]
    m = fams[0].m
    spec_args = {"p": d.get("p", 2), "epsilon": d.get("epsilon", 0.0),
                 "support": SupportSet.from_dict(d.get("support", {"kind": "full"}), m),
                 "norm": NormSpec(d.get("norm", 2))}
    spec_args.update({k: v for k, v in spec_overrides.items() if v is not None})
    return MroProblem(fams, int(d["n"]), d["cost"], clustered, UncertaintySpec(**spec_args),
                      epigraph=bool(d.get("epigraph", False)),
                      A_eq=num(d.get("A_eq")), b_eq=num(d.get("b_eq")),
                      A_ub=num(d.get("A_ub")), b_ub=num(d.get("b_ub")),
                      lb=num(d.get("lb")), ub=num(d.get("ub")),
                      binary=tuple(d.get("binary", ())), name=d.get("name", "mro"))
