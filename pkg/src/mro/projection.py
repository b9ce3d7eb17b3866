"""Projections onto the clustered uncertainty set.

All projections use the cluster-weighted metric ``sum_k w_k ||v_k - y_k||_2^2``.
For the coupled ball ``sum_k w_k ||v_k - dbar_k||^p <= eps^p`` with the
Euclidean norm the weights then cancel from the optimality conditions: each
displacement is shrunk radially to ``r_k`` where ``r + (mu p / 2) r^(p-1) = rho_k``,
and ``mu`` is found by bisection.  Box supports with ``p`` in {2, inf} also
have an exact multiplier search; other supports are intersected via Dykstra's
alternating projections, with a conic quadratic program as the fallback.
"""

from __future__ import annotations

import math

import numpy as np

from mro.data import SupportSet, UncertaintySpec

INF = math.inf


def _shrink(rho: np.ndarray, mu: float, p: float, iters: int = 100) -> np.ndarray:
    """Solve ``r + (mu p / 2) r^(p-1) = rho`` for ``r in [0, rho]``, elementwise."""
    if mu == 0:
        return rho.copy()
    c = 0.5 * mu * p
    if p == 1:
        return np.maximum(rho - c, 0.0)
    if p == 2:
        return rho / (1.0 + c)
    lo, hi = np.zeros_like(rho), rho.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        over = mid + c * mid ** (p - 1) > rho
        hi = np.where(over, mid, hi)
        lo = np.where(over, lo, mid)
    return 0.5 * (lo + hi)


def project_coupled_ball(Y, centroids, weights, p: float, eps: float,
                         tol: float = 1e-12) -> np.ndarray:
    """Weighted-metric projection onto ``sum_k w_k ||v_k - dbar_k||_2^p <= eps^p``."""
    D = Y - centroids
    rho = np.linalg.norm(D, axis=1)
    if weights @ rho**p <= eps**p:
        return Y.copy()
    if eps == 0:
        return centroids.copy()
    target = eps**p

    def excess(mu):
        return weights @ _shrink(rho, mu, p) ** p - target

    hi = 1.0
    while excess(hi) > 0:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    r = _shrink(rho, hi, p)  # the hi side is feasible
    scale = np.divide(r, rho, out=np.zeros_like(rho), where=rho > 0)
    return centroids + D * scale[:, None]


def _project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    if np.abs(v).sum() <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    k = np.arange(1, u.size + 1)
    rho = np.flatnonzero(u - (css - radius) / k > 0)[-1]
    theta = (css[rho] - radius) / (rho + 1)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def project_separate_balls(Y, centroids, eps: float, order: float = 2) -> np.ndarray:
    """Projection onto ``||v_k - dbar_k|| <= eps`` for every ``k`` (the ``p = inf`` set)."""
    D = Y - centroids
    if order == 2:
        rho = np.linalg.norm(D, axis=1)
        scale = np.where(rho > eps, eps / np.maximum(rho, 1e-300), 1.0)
        return centroids + D * scale[:, None]
    if order == INF:
        return centroids + np.clip(D, -eps, eps)
    if order == 1:
        return centroids + np.array([_project_l1_ball(d, eps) for d in D])
    raise ValueError(f"unsupported norm order {order!r}")


def project_support(Y, support: SupportSet) -> np.ndarray:
    """Row-wise Euclidean projection onto the support."""
    if support.kind == "full":
        return Y.copy()
    if support.kind == "box":
        return np.clip(Y, support.lb, support.ub)
    return np.array([_project_polyhedron(y, support.C, support.b) for y in Y])


def _project_polyhedron(y, C, b) -> np.ndarray:
    if np.all(C @ y <= b):
        return y.copy()
    import clarabel
    import scipy.sparse as sp

    m = y.size
    P = sp.identity(m, format="csc")
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = settings.tol_gap_abs = settings.tol_gap_rel = 1e-12
    solver = clarabel.DefaultSolver(P, -y, sp.csc_matrix(C), np.asarray(b, dtype=float),
                                    [clarabel.NonnegativeConeT(C.shape[0])], settings)
    return np.asarray(solver.solve().x)


def _project_ball(Y, clustered, spec: UncertaintySpec):
    if spec.p == INF:
        return project_separate_balls(Y, clustered.centroids, spec.epsilon, spec.norm.order)
    if spec.norm.order != 2:
        raise NotImplementedError("finite-p projection is implemented for the 2-norm only")
    return project_coupled_ball(Y, clustered.centroids, clustered.weights, spec.p,
                                spec.epsilon)


def _clipped(Y, centroids, mu, lb, ub):
    """Minimizer of ``||v - y||^2 + mu ||v - dbar||^2`` over the box, row by row."""
    mu = np.asarray(mu, dtype=float).reshape(-1, 1)
    return np.clip((Y + mu * centroids) / (1.0 + mu), lb, ub)


def _bisect_mu(excess, shape, tol=1e-13, iters=200):
    """Smallest ``mu >= 0`` with ``excess(mu) <= 0`` for a decreasing ``excess``."""
    hi = np.ones(shape)
    for _ in range(200):
        bad = excess(hi) > 0
        if not np.any(bad):
            break
        hi = np.where(bad, 2 * hi, hi)
    lo = np.zeros(shape)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        bad = excess(mid) > 0
        lo = np.where(bad, mid, lo)
        hi = np.where(bad, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, hi)):
            break
    return hi


def project_box_exact(Y, clustered, spec: UncertaintySpec) -> np.ndarray:
    """Exact projection for the 2-norm, ``p`` in {2, inf} and a box support.

    The box constraints separate by coordinate once the ball constraint is
    priced with a multiplier, so each multiplier is found by bisection.
    """
    C, w = clustered.centroids, clustered.weights
    lb, ub = spec.support.lb, spec.support.ub
    eps = spec.epsilon
    X = np.clip(Y, lb, ub)
    if spec.p == INF:
        if np.all(np.linalg.norm(X - C, axis=1) <= eps):
            return X

        def excess(mu):
            return np.linalg.norm(_clipped(Y, C, mu, lb, ub) - C, axis=1) - eps

        return _clipped(Y, C, _bisect_mu(excess, C.shape[0]), lb, ub)
    if w @ np.sum((X - C) ** 2, axis=1) <= eps**2:
        return X

    def excess(mu):
        V = _clipped(Y, C, np.full(C.shape[0], mu[0]), lb, ub)
        return np.array([w @ np.sum((V - C) ** 2, axis=1) - eps**2])

    mu = _bisect_mu(excess, 1)[0]
    return _clipped(Y, C, np.full(C.shape[0], mu), lb, ub)


def project_conic(Y, clustered, spec: UncertaintySpec) -> np.ndarray:
    """Projection computed as a conic quadratic program (the general fallback)."""
    import clarabel
    import scipy.sparse as sp

    from mro.conic import ClarabelBackend, ProgramBuilder

    K, m = Y.shape
    C, w = clustered.centroids, clustered.weights
    Cs, bs = spec.support.inequalities()
    b = ProgramBuilder()
    V = b.var("v", K * m)
    r = b.var("r", K)
    for k in range(K):
        vk = V[k * m:(k + 1) * m]
        b.norm_le(vk - C[k], r[k], spec.norm.order)
        if Cs.shape[0]:
            b.le(Cs @ vk, bs)
    if spec.p == INF:
        b.le(r, spec.epsilon)
    elif spec.p == 1:
        b.le(r.dot(w), spec.epsilon)
    else:
        t = b.var("t", K)
        b.power(t, 1.0, r, 1.0 / spec.p)
        b.le(t.dot(w), spec.epsilon**spec.p)
    prog = b.build(r.sum() * 0.0)
    A, rhs, meta = ClarabelBackend._rows(prog, ClarabelBackend._ORDER)
    cones = []
    for kind, blk in meta:
        if kind == "zero":
            cones.append(clarabel.ZeroConeT(blk.rows))
        elif kind == "nonneg":
            cones.append(clarabel.NonnegativeConeT(blk.rows))
        elif kind == "second-order":
            cones.append(clarabel.SecondOrderConeT(blk.rows))
        else:
            cones.extend(clarabel.PowerConeT(blk.alpha) for _ in range(blk.rows // 3))
    n = prog.num_vars
    diag = np.zeros(n)
    diag[:K * m] = np.repeat(w, m)
    q = np.zeros(n)
    q[:K * m] = -np.repeat(w, m) * Y.reshape(-1)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    for tol in (1e-10, 1e-8):
        settings.tol_feas = settings.tol_gap_abs = settings.tol_gap_rel = tol
        res = clarabel.DefaultSolver(sp.diags(diag).tocsc(), q, A.tocsc(), rhs, cones,
                                     settings).solve()
        if str(res.status) in ("Solved", "AlmostSolved"):
            return np.asarray(res.x[:K * m]).reshape(K, m)
    raise RuntimeError(f"projection failed with status {res.status}")


def _violation(X, clustered, spec) -> float:
    dist = spec.norm(X - clustered.centroids, axis=1)
    if spec.p == INF:
        ball = float(np.max(dist - spec.epsilon))
    else:
        ball = float(clustered.weights @ dist**spec.p - spec.epsilon**spec.p)
    C, b = spec.support.inequalities()
    supp = float(np.max(X @ C.T - b)) if C.shape[0] else 0.0
    return max(ball, supp, 0.0)


def project_uncertainty_set(Y, clustered, spec: UncertaintySpec, sweeps: int = 200,
                            tol: float = 1e-10) -> np.ndarray:
    """Projection onto the ball set intersected with the support.

    Uses a closed-form multiplier search where one exists, otherwise Dykstra's
    alternating projections, falling back to a conic solve when Dykstra has
    not reached ``tol`` after ``sweeps`` rounds.
    """
    Y = np.asarray(Y, dtype=float)
    supp = spec.support
    if supp.kind == "full":
        return _project_ball(Y, clustered, spec)
    if (supp.kind == "box" and spec.norm.order == 2 and spec.p in (2, INF)
            and supp.contains(clustered.centroids)):
        return project_box_exact(Y, clustered, spec)
    X = _project_ball(Y, clustered, spec) if spec.norm.order == 2 or spec.p == INF else None
    if X is not None and supp.contains(X, tol):
        return X
    if X is not None:
        P = np.zeros_like(Y)
        Q = np.zeros_like(Y)
        X = Y.copy()
        for _ in range(sweeps):
            B = _project_ball(X + P, clustered, spec)
            P = X + P - B
            S = project_support(B + Q, supp)
            Q = B + Q - S
            change = np.max(np.abs(S - X))
            X = S
            if change <= tol:
                break
        if _violation(X, clustered, spec) <= 10 * tol:
            return X
    return project_conic(Y, clustered, spec)
