"""Binary variables on top of a continuous conic backend.

The default strategy enumerates every 0/1 pattern, fixes it, and solves the
continuous remainder.  A depth-first branch-and-bound over the convex
relaxation is offered as an opt-in for instances where enumeration is too slow.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from mro.conic.backends import DEFAULT_TOL, Backend, Tolerances, get_backend
from mro.conic.ir import ConeBlock, ConicProgram, ProgramTooLargeError, Solution

log = logging.getLogger(__name__)

DEFAULT_CAP = 22


def solve(program: ConicProgram, backend: str | Backend | None = None,
          tol: Tolerances = DEFAULT_TOL) -> Solution:
    """Solve a continuous conic program."""
    return get_backend(backend).solve(program, tol)


def _binary_only_rows(program: ConicProgram):
    """Linear rows of zero/nonneg blocks that touch binary variables only."""
    ints = np.array(program.integrality, dtype=int)
    mask = np.zeros(program.num_vars, dtype=bool)
    mask[ints] = True
    rows = []
    for blk in program.blocks:
        if blk.kind not in ("zero", "nonneg"):
            continue
        A = blk.A.tocsr()
        for r in range(A.shape[0]):
            cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
            if cols.size and mask[cols].all():
                vals = A.data[A.indptr[r]:A.indptr[r + 1]]
                rows.append((blk.kind, cols, vals, blk.c[r]))
    return rows


def _pattern_feasible(rows, assignment: dict[int, float], tol=1e-9) -> bool:
    for kind, cols, vals, c in rows:
        v = sum(a * assignment[j] for j, a in zip(cols, vals)) + c
        if kind == "zero" and abs(v) > tol:
            return False
        if kind == "nonneg" and v < -tol:
            return False
    return True


def solve_mixed_binary(program: ConicProgram, strategy: str = "exhaustive",
                       backend: str | Backend | None = None,
                       tol: Tolerances = DEFAULT_TOL, cap: int = DEFAULT_CAP,
                       n_jobs: int = 1) -> Solution:
    """Minimize over binary patterns of ``program.integrality``.

    ``strategy="exhaustive"`` enumerates all ``2**b`` patterns in lexicographic
    order; among equal objectives the lexicographically smallest pattern
    wins.  ``strategy="branch-and-bound"`` explores the relaxation tree depth
    first and returns the first optimal pattern found.
    """
    be = get_backend(backend)
    ints = tuple(program.integrality)
    if not ints:
        return be.solve(program, tol)
    if strategy == "exhaustive":
        if len(ints) > cap:
            raise ProgramTooLargeError(
                f"{len(ints)} binaries exceed the enumeration cap of {cap}; "
                "use strategy='branch-and-bound' or the cutting-plane path")
        return _exhaustive(program, be, tol, n_jobs)
    if strategy in ("branch-and-bound", "bnb"):
        return _branch_and_bound(program, be, tol)
    raise ValueError(f"unknown strategy {strategy!r}")


def _exhaustive(program, be, tol, n_jobs) -> Solution:
    ints = program.integrality
    rows = _binary_only_rows(program)
    patterns = list(itertools.product((0, 1), repeat=len(ints)))

    def run(pattern):
        fixed = dict(zip(ints, map(float, pattern)))
        if not _pattern_feasible(rows, fixed):
            return None
        return be.solve(program.with_fixed(fixed), tol)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(run, patterns))
    else:
        results = [run(p) for p in patterns]

    best, best_pattern = None, None
    total_time, solved = 0.0, 0
    for pattern, sol in zip(patterns, results):
        if sol is None:
            continue
        solved += 1
        total_time += sol.solve_time
        if sol.status != "optimal":
            continue
        if best is None or sol.objective < best.objective - 1e-9 * (1 + abs(best.objective)):
            best, best_pattern = sol, pattern
    info = {"assignments": len(patterns), "subproblems_solved": solved,
            "strategy": "exhaustive"}
    if best is None:
        return Solution("infeasible", None, np.inf, total_time, be.name, info)
    info["pattern"] = list(best_pattern)
    return Solution("optimal", best.x, best.objective, total_time, be.name, info)


def _relaxation(program: ConicProgram) -> ConicProgram:
    ints = np.array(program.integrality, dtype=int)
    k = ints.size
    A = sp.csr_matrix((np.ones(k), (np.arange(k), ints)), shape=(k, program.num_vars))
    box = (ConeBlock("nonneg", A, np.zeros(k)), ConeBlock("nonneg", -A, np.ones(k)))
    return ConicProgram(program.num_vars, program.cost, program.blocks + box,
                        program.offset, (), program.var_names)


def _branch_and_bound(program, be, tol, int_tol=1e-6) -> Solution:
    ints = program.integrality
    relaxed = _relaxation(program)
    rows = _binary_only_rows(program)
    incumbent, inc_pattern = None, None
    total_time, nodes = 0.0, 0
    stack: list[dict[int, float]] = [{}]
    while stack:
        fixed = stack.pop()
        nodes += 1
        sol = be.solve(relaxed.with_fixed(fixed), tol)
        total_time += sol.solve_time
        if sol.status != "optimal":
            continue
        if incumbent is not None and (
                sol.objective >= incumbent.objective - 1e-7 * (1 + abs(incumbent.objective))):
            continue
        vals = sol.x[list(ints)]
        frac = np.abs(vals - np.round(vals))
        if frac.max() <= int_tol:
            pattern = {i: float(round(v)) for i, v in zip(ints, vals)}
            if not _pattern_feasible(rows, pattern):
                continue
            exact = be.solve(program.with_fixed(pattern), tol)
            total_time += exact.solve_time
            if exact.status == "optimal" and (
                    incumbent is None or exact.objective < incumbent.objective):
                incumbent, inc_pattern = exact, pattern
            continue
        j = int(np.argmax(frac))
        var = ints[j]
        up_first = vals[j] >= 0.5
        first, second = (1.0, 0.0) if up_first else (0.0, 1.0)
        # stack is LIFO: push the child to explore second first
        stack.append({**fixed, var: second})
        stack.append({**fixed, var: first})
    info = {"nodes": nodes, "strategy": "branch-and-bound"}
    if incumbent is None:
        return Solution("infeasible", None, np.inf, total_time, be.name, info)
    info["pattern"] = [int(inc_pattern[i]) for i in ints]
    return Solution("optimal", incumbent.x, incumbent.objective, total_time, be.name, info)
