"""Constraint families ``g(u, x)``: concave in the uncertainty ``u``.

Each family knows how to

* evaluate ``g`` and its gradient in ``u``;
* write ``sum_k w_k g(v_k, x)`` for fixed scenario points as conic
  constraints in ``x`` (used by the cutting-plane master problem);
* write the conjugate ``[-g]^*(zeta, x) = sup_u zeta @ u + g(u, x)`` as conic
  constraints (used by the dual reformulations), where available;
* bound the smoothness constant of ``-g`` in ``u``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mro.conic.expr import Expr, as_expr
from mro.conic.ir import ProgramBuilder
from mro.data import SupportSet


class DomainError(ValueError):
    """The uncertainty point lies outside the domain of the family."""


class ConstraintFamily:
    tag: str = "abstract"
    has_conjugate: bool = True
    #: lower bound of dom g on every coordinate (None = whole space)
    domain_lb: float | None = None
    monotonicity: str = "none-needed"

    n: int
    m: int

    def eval(self, u, x) -> float:
        raise NotImplementedError

    def grad_u(self, u, x) -> np.ndarray:
        raise NotImplementedError

    def check_domain(self, u) -> None:
        pass

    def scenario_bound(self, b: ProgramBuilder, x: Expr, points, weights) -> Expr:
        """Scalar expression bounding ``sum_k w_k g(v_k, x)`` from above, tight at optimum."""
        raise NotImplementedError

    def conjugate(self, b: ProgramBuilder, zeta: Expr, x: Expr) -> Expr:
        raise NotImplementedError(f"{self.tag} has no conic conjugate")

    def smoothness(self, x, data=None) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1)


@dataclass(eq=False)
class Affine(ConstraintFamily):
    """``g(u, x) = (a + P u) @ x - b``."""

    a: np.ndarray
    P: np.ndarray
    b: float = 0.0
    tag = "affine"

    def __post_init__(self):
        self.a = _vec(self.a)
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if self.P.shape[0] != self.a.size:
            raise ValueError("P must have one row per decision variable")
        self.b = float(self.b)
        self.n, self.m = self.P.shape

    def eval(self, u, x):
        return float((self.a + self.P @ _vec(u)) @ _vec(x) - self.b)

    def grad_u(self, u, x):
        return self.P.T @ _vec(x)

    def scenario_bound(self, b, x, points, weights):
        ubar = np.asarray(weights) @ np.atleast_2d(points)
        return (self.a + self.P @ ubar) @ x - self.b

    def conjugate(self, b, zeta, x):
        # finite only on zeta = -P^T x
        b.eq(zeta + self.P.T @ x)
        return self.a @ x - self.b

    def smoothness(self, x, data=None):
        return 0.0

    def to_dict(self):
        return {"tag": self.tag, "a": self.a.tolist(), "P": self.P.tolist(), "b": self.b}


@dataclass(eq=False)
class ConcaveQuadratic(ConstraintFamily):
    """``g(u, x) = -1/2 sum_i x_i u @ A_i @ u`` with every ``A_i`` positive definite."""

    A: np.ndarray  # (n, m, m)
    tag = "concave-quadratic"

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError("A must be a stack of square matrices")
        if not np.allclose(A, np.transpose(A, (0, 2, 1)), atol=1e-12):
            raise ValueError("A_i must be symmetric")
        try:
            self.chol = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise ValueError("A_i must be positive definite") from None
        self.A = A
        self.n, self.m = A.shape[0], A.shape[1]

    def _h(self, u) -> np.ndarray:
        u = _vec(u)
        return -0.5 * np.einsum("i,nij,j->n", u, self.A, u)

    def eval(self, u, x):
        return float(self._h(u) @ _vec(x))

    def grad_u(self, u, x):
        return -np.einsum("n,nij,j->i", _vec(x), self.A, _vec(u))

    def scenario_bound(self, b, x, points, weights):
        coef = sum(w * self._h(v) for w, v in zip(weights, np.atleast_2d(points)))
        return coef @ x

    def conjugate(self, b, zeta, x):
        # [-g]^*(zeta) = min { sum_i |w_i|^2 / (2 x_i) : sum_i L_i w_i = zeta },  A_i = L_i L_i^T
        parts = []
        total = None
        for i in range(self.n):
            w = b.var(f"cq_w{i}", self.m)
            t = b.var(f"cq_t{i}")
            b.rsoc(x[i], t, w)
            parts.append(self.chol[i] @ w)
            total = t if total is None else total + t
        b.eq(zeta - _sum(parts))
        return total

    def smoothness(self, x, data=None):
        M = np.einsum("n,nij->ij", _vec(x), self.A)
        return float(np.linalg.norm(M, 2))

    def to_dict(self):
        return {"tag": self.tag, "A": self.A.tolist()}


@dataclass(eq=False)
class CapitalBudgetingNPV(ConstraintFamily):
    """Negated net present value ``-sum_j sum_t F_jt x_j (1 + u_j)^(-t)``."""

    F: np.ndarray  # (n, T+1)
    tag = "capital-npv"
    domain_lb = 0.0
    monotonicity = "increasing"

    def __post_init__(self):
        self.F = np.atleast_2d(np.asarray(self.F, dtype=float))
        if not np.all(np.isfinite(self.F)):
            raise ValueError("cash flows must be finite")
        self.n = self.m = self.F.shape[0]
        self.T = self.F.shape[1] - 1
        self._t = np.arange(self.T + 1, dtype=float)

    def check_domain(self, u):
        if np.any(_vec(u) <= -1):
            raise DomainError("discount rates must exceed -1")

    def _discounted(self, u) -> np.ndarray:
        """Per-project present value of one unit, shape (n,)."""
        u = _vec(u)
        self.check_domain(u)
        return np.sum(self.F * (1.0 + u)[:, None] ** (-self._t), axis=1)

    def eval(self, u, x):
        return float(-self._discounted(u) @ _vec(x))

    def grad_u(self, u, x):
        u = _vec(u)
        self.check_domain(u)
        d = np.sum(self.F * self._t * (1.0 + u)[:, None] ** (-self._t - 1), axis=1)
        return d * _vec(x)

    def scenario_bound(self, b, x, points, weights):
        coef = -sum(w * self._discounted(v) for w, v in zip(weights, np.atleast_2d(points)))
        return coef @ x

    def conjugate(self, b, zeta, x):
        n, T = self.n, self.T
        total = -(self.F[:, 0] @ x)
        if T == 0:
            b.eq(zeta)
            return total
        Y = b.var("npv_Y", n * T)       # row-major (j, t-1)
        dl = b.var("npv_delta", n * T)
        b.le(Y, 0.0)
        b.le(dl, 0.0)
        ts = np.arange(1, T + 1)
        a = ts ** (1.0 / (ts + 1)) + ts ** (-ts / (ts + 1.0))
        for t in range(1, T + 1):
            rows = np.arange(n) * T + (t - 1)
            flows = np.diag(self.F[:, t]) @ x
            b.power(-Y[rows], flows, dl[rows], t / (t + 1.0))
        S = np.kron(np.eye(n), np.ones((1, T)))  # sums Y over t for each j
        b.eq(zeta - S @ Y)
        total = total - Y.sum() + np.tile(a, n) @ dl
        return total

    def smoothness(self, x, data=None):
        t = self._t
        return float(abs(np.sum(t * (t + 1) * self.F * _vec(x)[:, None])))

    def to_dict(self):
        return {"tag": self.tag, "F": self.F.tolist()}


@dataclass(eq=False)
class LogSumExp(ConstraintFamily):
    """``g(u, x) = log(sum_i u_i exp(x_i))`` on ``u >= 0.01``."""

    n: int
    tag = "log-sum-exp"
    has_conjugate = False
    domain_lb = 0.01
    monotonicity = "increasing"

    def __post_init__(self):
        self.n = int(self.n)
        self.m = self.n

    def check_domain(self, u):
        u = _vec(u)
        if np.any(u < 0) or not np.any(u > 0):
            raise DomainError("log-sum-exp needs nonnegative weights with a positive entry")

    def eval(self, u, x):
        u = _vec(u)
        self.check_domain(u)
        x = _vec(x)
        top = x.max()
        return float(top + np.log(u @ np.exp(x - top)))

    def grad_u(self, u, x):
        u = _vec(u)
        self.check_domain(u)
        x = _vec(x)
        e = np.exp(x - x.max())
        return e / (u @ e)

    def scenario_bound(self, b, x, points, weights):
        pts = np.atleast_2d(points)
        K = pts.shape[0]
        t = b.var("lse_t", K)
        for k in range(K):
            # log(sum_i u_i e^{x_i}) <= t_k  <=>  sum_i u_i e^{x_i - t_k} <= 1
            q = b.var(f"lse_q{k}", self.n)
            b.exp(x - t[k], Expr.constant(np.ones(self.n)), q)
            b.le(pts[k] @ q, 1.0)
        return np.asarray(weights, dtype=float) @ t

    def smoothness(self, x, data=None):
        if data is None:
            raise ValueError("log-sum-exp smoothness bound needs the data rows")
        e = np.exp(_vec(x))
        denom = np.min(np.atleast_2d(data) @ e)
        if denom <= 0:
            raise ValueError("data rows must give positive d @ exp(x)")
        return float(e @ e / denom**2)

    def to_dict(self):
        return {"tag": self.tag, "n": self.n}


def _sum(parts):
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


FAMILIES = {
    "affine": lambda d: Affine(d["a"], d["P"], d.get("b", 0.0)),
    "concave-quadratic": lambda d: ConcaveQuadratic(d["A"]),
    "capital-npv": lambda d: CapitalBudgetingNPV(d["F"]),
    "log-sum-exp": lambda d: LogSumExp(d["n"]),
}


def family_from_dict(d: dict) -> ConstraintFamily:
    try:
        return FAMILIES[d["tag"]](d)
    except KeyError:
        raise ValueError(f"unknown family tag {d.get('tag')!r}") from None


# -- module-level operations ---------------------------------------------------

def eval_g(family: ConstraintFamily, u, x) -> float:
    return family.eval(u, x)


def grad_g_u(family: ConstraintFamily, u, x) -> np.ndarray:
    return family.grad_u(u, x)


def gbar(family: ConstraintFamily, points, weights, x) -> float:
    """Weighted sum ``sum_k w_k g(v_k, x)`` over scenario points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = _vec(weights)
    if weights.size != points.shape[0]:
        raise ValueError("one weight per scenario point required")
    return float(sum(w * family.eval(v, x) for w, v in zip(weights, points)))


def smoothness_bound(family: ConstraintFamily, x, dataset=None) -> float:
    data = getattr(dataset, "samples", dataset)
    return family.smoothness(x, data)


@dataclass(frozen=True)
class AssumptionReport:
    domain_ok: bool
    monotonicity: str
    concave_in_u: bool
    message: str = ""


def _coordinate_minima(support: SupportSet) -> np.ndarray:
    if support.kind == "full":
        return np.full(support.m, -math.inf)
    if support.kind == "box":
        return np.asarray(support.lb, dtype=float)
    from scipy.optimize import linprog

    out = np.empty(support.m)
    for j in range(support.m):
        c = np.zeros(support.m)
        c[j] = 1.0
        res = linprog(c, A_ub=support.C, b_ub=support.b,
                      bounds=[(None, None)] * support.m, method="highs")
        out[j] = res.fun if res.status == 0 else -math.inf
    return out


def check_assumptions(family: ConstraintFamily, support: SupportSet) -> AssumptionReport:
    """Domain/monotonicity conditions needed by the clustering bounds."""
    if family.domain_lb is None:
        return AssumptionReport(True, "none-needed", True)
    lows = _coordinate_minima(support)
    ok = bool(np.all(lows >= family.domain_lb - 1e-12))
    msg = "" if ok else (f"support allows u below the domain bound {family.domain_lb}")
    return AssumptionReport(ok, family.monotonicity, True, msg)
