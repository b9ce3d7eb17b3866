"""Solver-agnostic conic program representation.

A program is

    minimize    cost @ v + offset
    subject to  A_j @ v + c_j  in  K_j     for every block j
                v_i in {0, 1}              for i in integrality

Cone conventions (rows of one block):

``zero``                  all entries equal 0
``nonneg``                all entries >= 0
``second-order``          (t, x):  t >= ||x||_2
``rotated-second-order``  (u, v, w):  2 u v >= ||w||_2^2,  u, v >= 0
``power3d``               stacked triples (x, y, z):  x^a y^(1-a) >= |z|
``exponential``           stacked triples (x, y, z):  y exp(x / y) <= z, y > 0
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from mro.conic.expr import Expr, as_expr, trim

CONE_KINDS = (
    "zero",
    "nonneg",
    "second-order",
    "rotated-second-order",
    "power3d",
    "exponential",
)

STATUSES = ("optimal", "infeasible", "unbounded", "numerical-failure", "iteration-limit")


class CapabilityError(RuntimeError):
    """A backend was asked to handle a cone kind it does not support."""


class ProgramTooLargeError(ValueError):
    """Binary enumeration was requested beyond the configured cap."""


@dataclass(frozen=True, eq=False)
class ConeBlock:
    kind: str
    A: sp.csr_matrix
    c: np.ndarray
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"unknown cone kind {self.kind!r}")
        rows = self.A.shape[0]
        if self.c.shape != (rows,):
            raise ValueError("cone block offset has the wrong length")
        if self.kind in ("power3d", "exponential") and rows % 3:
            raise ValueError(f"{self.kind} blocks hold stacked triples")
        if self.kind == "power3d" and not (self.alpha is not None and 0 < self.alpha < 1):
            raise ValueError("power3d needs alpha in (0, 1)")
        if self.kind == "second-order" and rows < 1:
            raise ValueError("empty second-order block")
        if self.kind == "rotated-second-order" and rows < 2:
            raise ValueError("rotated cone needs at least two rows")

    @property
    def rows(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class ConicProgram:
    num_vars: int
    cost: np.ndarray
    blocks: tuple[ConeBlock, ...]
    offset: float = 0.0
    integrality: tuple[int, ...] = ()
    var_names: tuple[tuple[str, int, int], ...] = ()

    def __post_init__(self):
        if self.cost.shape != (self.num_vars,):
            raise ValueError("cost vector has the wrong length")
        for blk in self.blocks:
            if blk.A.shape[1] != self.num_vars:
                raise ValueError("cone block column count differs from num_vars")
        if any(not 0 <= i < self.num_vars for i in self.integrality):
            raise ValueError("integrality index out of range")

    @property
    def cone_kinds(self) -> set[str]:
        return {b.kind for b in self.blocks}

    def count(self, kind: str) -> int:
        """Number of individual cones of ``kind`` (triples count separately)."""
        total = 0
        for b in self.blocks:
            if b.kind == kind:
                total += b.rows // 3 if kind in ("power3d", "exponential") else 1
        return total

    def slice(self, name: str) -> slice:
        for nm, start, size in self.var_names:
            if nm == name:
                return slice(start, start + size)
        raise KeyError(name)

    def with_fixed(self, values: dict[int, float]) -> "ConicProgram":
        """Return a copy with the given variables pinned via an equality block."""
        if not values:
            return ConicProgram(self.num_vars, self.cost, self.blocks, self.offset,
                                (), self.var_names)
        idx = np.array(sorted(values), dtype=int)
        A = sp.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)),
                          shape=(idx.size, self.num_vars))
        c = -np.array([float(values[i]) for i in idx])
        keep = tuple(i for i in self.integrality if i not in values)
        return ConicProgram(self.num_vars, self.cost,
                            self.blocks + (ConeBlock("zero", A, c),),
                            self.offset, keep, self.var_names)

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        blocks = []
        for b in self.blocks:
            coo = b.A.tocoo()
            blocks.append({
                "kind": b.kind,
                "alpha": b.alpha,
                "rows": b.rows,
                "A": {"i": coo.row.tolist(), "j": coo.col.tolist(),
                      "v": coo.data.tolist()},
                "c": b.c.tolist(),
            })
        return {
            "format": "mro-conic-program/1",
            "num_vars": self.num_vars,
            "cost": self.cost.tolist(),
            "offset": self.offset,
            "integrality": list(self.integrality),
            "var_names": [list(v) for v in self.var_names],
            "blocks": blocks,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProgram":
        n = d["num_vars"]
        blocks = []
        for b in d["blocks"]:
            A = sp.csr_matrix(
                (np.array(b["A"]["v"], dtype=float),
                 (np.array(b["A"]["i"], dtype=int), np.array(b["A"]["j"], dtype=int))),
                shape=(b["rows"], n))
            blocks.append(ConeBlock(b["kind"], A, np.array(b["c"], dtype=float),
                                    b["alpha"]))
        return cls(n, np.array(d["cost"], dtype=float), tuple(blocks),
                   float(d["offset"]), tuple(d["integrality"]),
                   tuple((str(a), int(s), int(z)) for a, s, z in d["var_names"]))

    @classmethod
    def from_json(cls, text: str) -> "ConicProgram":
        return cls.from_dict(json.loads(text))

    def equals(self, other: "ConicProgram") -> bool:
        """Bit-exact structural equality."""
        if (self.num_vars != other.num_vars or self.offset != other.offset
                or self.integrality != other.integrality
                or self.var_names != other.var_names
                or len(self.blocks) != len(other.blocks)
                or not np.array_equal(self.cost, other.cost)):
            return False
        for a, b in zip(self.blocks, other.blocks):
            if a.kind != b.kind or a.alpha != b.alpha or not np.array_equal(a.c, b.c):
                return False
            if a.A.shape != b.A.shape or (a.A != b.A).nnz:
                return False
        return True


@dataclass
class Solution:
    status: str
    x: np.ndarray | None
    objective: float
    solve_time: float
    backend: str
    info: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def to_dict(self, with_time: bool = True) -> dict:
        d = {
            "status": self.status,
            "objective": self.objective if np.isfinite(self.objective) else None,
            "x": None if self.x is None else self.x.tolist(),
            "backend": self.backend,
        }
        if with_time:
            d["solve_time"] = self.solve_time
        return d


class ProgramBuilder:
    """Incrementally allocate variables and cone blocks."""

    def __init__(self):
        self.num_vars = 0
        self.blocks: list[ConeBlock] = []
        self.names: list[tuple[str, int, int]] = []
        self.binary: list[int] = []

    def var(self, name: str, size: int = 1, binary: bool = False) -> Expr:
        start = self.num_vars
        self.num_vars += size
        self.names.append((name, start, size))
        if binary:
            self.binary.extend(range(start, start + size))
        return Expr.variables(start, size)

    def _add(self, kind: str, expr: Expr, alpha: float | None = None) -> None:
        expr = as_expr(expr)
        if expr.size == 0:
            return
        self.blocks.append(ConeBlock(kind, expr.A, expr.c.copy(), alpha))

    # -- constraint helpers -------------------------------------------------
    def eq(self, lhs, rhs=0.0) -> None:
        self._add("zero", as_expr(lhs) - rhs)

    def le(self, lhs, rhs=0.0) -> None:
        self._add("nonneg", as_expr(rhs) - lhs)

    def ge(self, lhs, rhs=0.0) -> None:
        self._add("nonneg", as_expr(lhs) - rhs)

    def soc(self, t, x) -> None:
        """||x||_2 <= t."""
        self._add("second-order", Expr.stack([t, x]))

    def rsoc(self, u, v, w) -> None:
        """||w||_2^2 <= 2 u v with u, v >= 0."""
        self._add("rotated-second-order", Expr.stack([u, v, w]))

    def power(self, x, y, z, alpha: float) -> None:
        """x^alpha y^(1-alpha) >= |z| elementwise over equal-length vectors."""
        self._add("power3d", _interleave(x, y, z), alpha)

    def exp(self, x, y, z) -> None:
        """y exp(x / y) <= z elementwise over equal-length vectors."""
        self._add("exponential", _interleave(x, y, z))

    def norm_le(self, x, t, order) -> None:
        """||x||_order <= t for order in {1, 2, inf}."""
        x = as_expr(x)
        if order == 2:
            self.soc(t, x)
        elif order in (np.inf, "inf"):
            self.le(x, t)
            self.le(-x, t)
        elif order == 1:
            a = self.var("abs_aux", x.size)
            self.le(x, a)
            self.le(-x, a)
            self.le(a.sum(), t)
        else:
            raise ValueError(f"unsupported norm order {order!r}")

    def build(self, objective, integrality=None) -> ConicProgram:
        obj = as_expr(objective)
        if obj.size != 1:
            raise ValueError("objective must be scalar")
        n = self.num_vars
        cost = np.asarray(trim(obj.A, n).todense()).reshape(-1) if n else np.zeros(0)
        blocks = tuple(ConeBlock(b.kind, trim(b.A, n), b.c, b.alpha) for b in self.blocks)
        ints = tuple(sorted(self.binary if integrality is None else integrality))
        return ConicProgram(n, cost, blocks, float(obj.c[0]), ints, tuple(self.names))


def _interleave(x, y, z) -> Expr:
    x, y, z = as_expr(x), as_expr(y), as_expr(z)
    n = max(x.size, y.size, z.size)
    parts = []
    for e in (x, y, z):
        parts.append(e if e.size == n else e.repeat(n))
    stacked = Expr.stack(parts)
    order = np.arange(3 * n).reshape(3, n).T.reshape(-1)
    return stacked[order]
