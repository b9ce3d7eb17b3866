"""Solver backends for :class:`~mro.conic.ir.ConicProgram`.

Every backend must handle the zero, nonnegative, second-order and rotated
second-order cones.  Power and exponential cones are optional capabilities;
asking a backend for a cone it lacks raises :class:`CapabilityError` before any
numerical work starts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from mro.conic.ir import CapabilityError, ConicProgram, Solution

MANDATORY = frozenset({"zero", "nonneg", "second-order", "rotated-second-order"})


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    gap_rel: float = 1e-8
    gap_abs: float = 1e-8
    max_iter: int = 500


DEFAULT_TOL = Tolerances()


def _rsoc_to_soc(A: sp.csr_matrix, c: np.ndarray):
    """Map (u, v, w) with 2uv >= |w|^2 onto (u+v, u-v, sqrt(2) w) in the SOC."""
    r = A.shape[0]
    T = sp.lil_matrix((r, r))
    T[0, 0], T[0, 1] = 1.0, 1.0
    T[1, 0], T[1, 1] = 1.0, -1.0
    for i in range(2, r):
        T[i, i] = np.sqrt(2.0)
    T = T.tocsr()
    return T @ A, T @ c


class Backend:
    name = "abstract"
    optional: frozenset[str] = frozenset()

    @property
    def capabilities(self) -> frozenset[str]:
        return MANDATORY | self.optional

    def check(self, program: ConicProgram) -> None:
        missing = program.cone_kinds - self.capabilities
        if missing:
            raise CapabilityError(
                f"backend {self.name!r} does not support cone(s) {sorted(missing)}")

    def solve(self, program: ConicProgram, tol: Tolerances = DEFAULT_TOL) -> Solution:
        if program.integrality:
            raise ValueError("program has binary variables; use solve_mixed_binary")
        self.check(program)
        return self._solve(program, tol)

    def _solve(self, program, tol):  # pragma: no cover - abstract
        raise NotImplementedError

    # shared helper: blocks grouped in the order a backend expects, each
    # already mapped to "A v + s = b" form (s = A_blk v + c  =>  -A_blk v + s = c)
    @staticmethod
    def _rows(program: ConicProgram, kinds):
        As, bs, meta = [], [], []
        for kind in kinds:
            for blk in program.blocks:
                if blk.kind != kind:
                    continue
                A, c = blk.A, blk.c
                if kind == "rotated-second-order":
                    A, c = _rsoc_to_soc(A, c)
                As.append(-A)
                bs.append(c)
                meta.append((kind, blk))
        if As:
            A = sp.vstack(As, format="csc")
            b = np.concatenate(bs)
        else:
            A = sp.csc_matrix((0, program.num_vars))
            b = np.zeros(0)
        return A, b, meta


class ClarabelBackend(Backend):
    name = "clarabel"
    optional = frozenset({"power3d", "exponential"})

    _ORDER = ("zero", "nonneg", "second-order", "rotated-second-order",
              "power3d", "exponential")

    def _solve(self, program, tol):
        import clarabel

        A, b, meta = self._rows(program, self._ORDER)
        cones = []
        for kind, blk in meta:
            if kind == "zero":
                cones.append(clarabel.ZeroConeT(blk.rows))
            elif kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(blk.rows))
            elif kind in ("second-order", "rotated-second-order"):
                cones.append(clarabel.SecondOrderConeT(blk.rows))
            elif kind == "power3d":
                cones.extend(clarabel.PowerConeT(blk.alpha) for _ in range(blk.rows // 3))
            else:
                cones.extend(clarabel.ExponentialConeT() for _ in range(blk.rows // 3))
        n = program.num_vars
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_feas = tol.feasibility
        settings.tol_gap_rel = tol.gap_rel
        settings.tol_gap_abs = tol.gap_abs
        settings.max_iter = tol.max_iter
        settings.presolve_enable = True
        P = sp.csc_matrix((n, n))
        t0 = time.perf_counter()
        solver = clarabel.DefaultSolver(P, program.cost.astype(float), A.tocsc(), b,
                                        cones, settings)
        res = solver.solve()
        elapsed = time.perf_counter() - t0
        status = str(res.status)
        mapping = {
            "Solved": "optimal",
            "AlmostSolved": "optimal",
            "PrimalInfeasible": "infeasible",
            "AlmostPrimalInfeasible": "infeasible",
            "DualInfeasible": "unbounded",
            "AlmostDualInfeasible": "unbounded",
            "MaxIterations": "iteration-limit",
            "MaxTime": "iteration-limit",
        }
        st = mapping.get(status, "numerical-failure")
        x = np.array(res.x) if st == "optimal" else None
        obj = float(program.cost @ x + program.offset) if x is not None else (
            np.inf if st == "infeasible" else -np.inf if st == "unbounded" else np.nan)
        return Solution(st, x, obj, elapsed, self.name,
                        {"raw_status": status, "iterations": int(res.iterations),
                         "inaccurate": status.startswith("Almost")})


class ScsBackend(Backend):
    name = "scs"
    optional = frozenset({"power3d", "exponential"})

    def _solve(self, program, tol):
        import scs

        order = ("zero", "nonneg", "second-order", "rotated-second-order",
                 "exponential", "power3d")
        A, b, meta = self._rows(program, order)
        cone = {"z": 0, "l": 0, "q": [], "ep": 0, "p": []}
        for kind, blk in meta:
            if kind == "zero":
                cone["z"] += blk.rows
            elif kind == "nonneg":
                cone["l"] += blk.rows
            elif kind in ("second-order", "rotated-second-order"):
                cone["q"].append(blk.rows)
            elif kind == "exponential":
                cone["ep"] += blk.rows // 3
            else:
                cone["p"].extend([blk.alpha] * (blk.rows // 3))
        data = {"A": A.tocsc(), "b": b, "c": program.cost.astype(float)}
        t0 = time.perf_counter()
        solver = scs.SCS(data, cone, verbose=False, eps_abs=tol.feasibility,
                         eps_rel=tol.gap_rel, max_iters=200_000)
        res = solver.solve()
        elapsed = time.perf_counter() - t0
        status = res["info"]["status"]
        if status in ("solved", "solved_inaccurate"):
            st = "optimal"
        elif status.startswith("infeasible"):
            st = "infeasible"
        elif status.startswith("unbounded"):
            st = "unbounded"
        else:
            st = "numerical-failure"
        x = np.asarray(res["x"]) if st == "optimal" else None
        obj = float(program.cost @ x + program.offset) if x is not None else (
            np.inf if st == "infeasible" else -np.inf if st == "unbounded" else np.nan)
        return Solution(st, x, obj, elapsed, self.name,
                        {"raw_status": status, "iterations": int(res["info"]["iter"]),
                         "inaccurate": status == "solved_inaccurate"})


class CvxoptBackend(Backend):
    """Interior point from CVXOPT; second-order cones only."""

    name = "cvxopt"

    def _solve(self, program, tol):
        import cvxopt

        n = program.num_vars
        Aeq, beq, _ = self._rows(program, ("zero",))
        G, h, meta = self._rows(program, ("nonneg", "second-order", "rotated-second-order"))
        dims = {"l": sum(blk.rows for k, blk in meta if k == "nonneg"),
                "q": [blk.rows for k, blk in meta if k != "nonneg"], "s": []}

        def mat(M):
            M = sp.coo_matrix(M)
            return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(),
                                   size=M.shape)

        # cvxopt wants Aeq x = beq; our zero rows read -A_blk v + s = c with s = 0
        args = dict(c=cvxopt.matrix(program.cost.astype(float)), G=mat(G),
                    h=cvxopt.matrix(h), dims=dims)
        if Aeq.shape[0]:
            args["A"] = mat(-Aeq)
            args["b"] = cvxopt.matrix(-beq)
        opts = {"show_progress": False, "abstol": tol.gap_abs, "reltol": tol.gap_rel,
                "feastol": tol.feasibility, "maxiters": min(tol.max_iter, 500)}
        t0 = time.perf_counter()
        try:
            res = cvxopt.solvers.conelp(options=opts, **args)
        except (ValueError, ArithmeticError) as exc:
            return Solution("numerical-failure", None, np.nan,
                            time.perf_counter() - t0, self.name, {"raw_status": str(exc)})
        elapsed = time.perf_counter() - t0
        status = res["status"]
        if status == "optimal":
            st = "optimal"
        elif status == "primal infeasible":
            st = "infeasible"
        elif status == "dual infeasible":
            st = "unbounded"
        else:
            # "unknown" usually means slow progress near the optimum
            gap_ok = res["x"] is not None and (res.get("relative gap") or 1.0) < 1e-6
            st = "optimal" if gap_ok else "numerical-failure"
        x = np.array(res["x"]).reshape(-1) if st == "optimal" else None
        obj = float(program.cost @ x + program.offset) if x is not None else (
            np.inf if st == "infeasible" else -np.inf if st == "unbounded" else np.nan)
        return Solution(st, x, obj, elapsed, self.name,
                        {"raw_status": status, "iterations": int(res.get("iterations", 0))})


_BACKENDS = {
    "clarabel": ClarabelBackend,
    "scs": ScsBackend,
    "cvxopt": CvxoptBackend,
}


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(backend: str | Backend | None = None) -> Backend:
    if isinstance(backend, Backend):
        return backend
    name = backend or "clarabel"
    try:
        return _BACKENDS[name]()
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {available_backends()}") from None
