"""Datasets, supports, norms and uncertainty-set specifications."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

INF = math.inf


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """N samples of the uncertain vector, one per row."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ValueError("samples must be a nonempty N x m matrix")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", _frozen(s))

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def m(self) -> int:
        return self.samples.shape[1]

    # -- I/O --------------------------------------------------------------
    def to_json(self) -> str:
        return json.dumps({"m": self.m, "samples": self.samples.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "Dataset":
        d = json.loads(text)
        ds = cls(np.asarray(d["samples"], dtype=float).reshape(-1, int(d["m"])))
        return ds

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"u{j}" for j in range(self.m)])
        for row in self.samples:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = [r for r in csv.reader(io.StringIO(text)) if r]
        if not rows:
            raise ValueError("empty CSV")
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]  # header row
        return cls(np.array([[float(v) for v in r] for r in rows]))

    @classmethod
    def load(cls, path) -> "Dataset":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return cls.from_json(text)
        return cls.from_csv(text)

    def save(self, path) -> None:
        path = Path(path)
        path.write_text(self.to_json() if path.suffix.lower() == ".json" else self.to_csv())


def box_to_polyhedron(lb, ub) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``C u <= b`` describing the box ``lb <= u <= ub``.

    Only finite bounds produce rows: upper bounds first, then lower bounds.
    """
    lb = np.asarray(lb, dtype=float).reshape(-1)
    ub = np.asarray(ub, dtype=float).reshape(-1)
    if lb.shape != ub.shape:
        raise ValueError("bound vectors differ in length")
    if np.any(lb > ub):
        raise ValueError("lower bound exceeds upper bound")
    m = lb.size
    eye = np.eye(m)
    up = np.isfinite(ub)
    lo = np.isfinite(lb)
    C = np.vstack([eye[up], -eye[lo]]).reshape(-1, m)
    b = np.concatenate([ub[up], -lb[lo]])
    return C, b


def support_function_box(y, lb, ub) -> float:
    """sup of ``y @ u`` over the box, as an extended real (``0 * inf = 0``)."""
    y = np.asarray(y, dtype=float).reshape(-1)
    lb = np.broadcast_to(np.asarray(lb, dtype=float), y.shape)
    ub = np.broadcast_to(np.asarray(ub, dtype=float), y.shape)
    total = 0.0
    for yi, lo, hi in zip(y, lb, ub):
        if yi > 0:
            term = yi * hi
        elif yi < 0:
            term = yi * lo
        else:
            term = 0.0
        if term == INF:
            return INF
        total += term
    return total


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Support of the uncertainty: full space, a box, or a polyhedron."""

    kind: str
    m: int
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    C: np.ndarray | None = None
    b: np.ndarray | None = None
    witness: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def full(cls, m: int) -> "SupportSet":
        return cls("full", m)

    @classmethod
    def box(cls, lb, ub, m: int | None = None) -> "SupportSet":
        if m is not None:
            lb = np.broadcast_to(np.asarray(lb, dtype=float), (m,))
            ub = np.broadcast_to(np.asarray(ub, dtype=float), (m,))
        lb = np.asarray(lb, dtype=float).reshape(-1)
        ub = np.asarray(ub, dtype=float).reshape(-1)
        if lb.shape != ub.shape:
            raise ValueError("bound vectors differ in length")
        if np.any(lb > ub):
            raise ValueError("lower bound exceeds upper bound")
        return cls("box", lb.size, _frozen(lb), _frozen(ub))

    @classmethod
    def nonneg(cls, m: int) -> "SupportSet":
        return cls.box(np.zeros(m), np.full(m, INF))

    @classmethod
    def polyhedron(cls, C, b) -> "SupportSet":
        from scipy.optimize import linprog

        C = np.atleast_2d(np.asarray(C, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if C.shape[0] != b.size:
            raise ValueError("C and b disagree in row count")
        res = linprog(np.zeros(C.shape[1]), A_ub=C, b_ub=b,
                      bounds=[(None, None)] * C.shape[1], method="highs")
        if res.status != 0:
            raise ValueError("polyhedral support is empty")
        return cls("polyhedron", C.shape[1], C=_frozen(C), b=_frozen(b),
                   witness=_frozen(res.x))

    def __post_init__(self):
        if self.kind not in ("full", "box", "polyhedron"):
            raise ValueError(f"unknown support kind {self.kind!r}")

    def inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """``(C, b)`` with ``S = {u : C u <= b}`` (zero rows for full space)."""
        if self.kind == "full":
            return np.zeros((0, self.m)), np.zeros(0)
        if self.kind == "box":
            return box_to_polyhedron(self.lb, self.ub)
        return np.asarray(self.C), np.asarray(self.b)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate bounds; polyhedra report infinite bounds."""
        if self.kind == "box":
            return np.asarray(self.lb), np.asarray(self.ub)
        return np.full(self.m, -INF), np.full(self.m, INF)

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        C, b = self.inequalities()
        if C.shape[0] == 0:
            return True
        return bool(np.all(u @ C.T <= b + tol))

    def support_function(self, y) -> float:
        if self.kind == "full":
            return 0.0 if not np.any(np.asarray(y)) else INF
        if self.kind == "box":
            return support_function_box(y, self.lb, self.ub)
        from scipy.optimize import linprog

        res = linprog(-np.asarray(y, dtype=float), A_ub=self.C, b_ub=self.b,
                      bounds=[(None, None)] * self.m, method="highs")
        if res.status == 3:
            return INF
        return float(-res.fun)

    def relaxed(self) -> "SupportSet":
        return SupportSet.full(self.m)

    def to_dict(self) -> dict:
        if self.kind == "full":
            return {"kind": "full", "m": self.m}
        if self.kind == "box":
            return {"kind": "box", "lb": [_num(v) for v in self.lb],
                    "ub": [_num(v) for v in self.ub]}
        return {"kind": "polyhedron", "C": self.C.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d: dict, m: int | None = None) -> "SupportSet":
        kind = d["kind"]
        if kind == "full":
            return cls.full(int(d.get("m", m)))
        if kind == "nonneg":
            return cls.nonneg(int(d.get("m", m)))
        if kind == "box":
            lb = [_unnum(v) for v in np.atleast_1d(d["lb"])]
            ub = [_unnum(v) for v in np.atleast_1d(d["ub"])]
            if m is not None and len(lb) == 1:
                lb, ub = lb * m, ub * m
            return cls.box(lb, ub)
        return cls.polyhedron(d["C"], d["b"])


def _num(v: float):
    return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")


def _unnum(v) -> float:
    return float(v)


@dataclass(frozen=True)
class NormSpec:
    """Inner norm of the uncertainty set; the dual norm is derived."""

    order: float = 2

    def __post_init__(self):
        order = INF if self.order in (INF, "inf", "Inf") else self.order
        if order not in (1, 2, INF):
            raise ValueError("norm order must be 1, 2 or inf")
        object.__setattr__(self, "order", order)

    @property
    def dual_order(self) -> float:
        return {1: INF, 2: 2, INF: 1}[self.order]

    def __call__(self, x, axis=-1):
        return np.linalg.norm(np.asarray(x, dtype=float), ord=self.order, axis=axis)

    def dual(self, x, axis=-1):
        return np.linalg.norm(np.asarray(x, dtype=float), ord=self.dual_order, axis=axis)


L2 = NormSpec(2)


@dataclass(frozen=True, eq=False)
class UncertaintySpec:
    """Exponent ``p``, inner norm, radius ``epsilon`` and support."""

    p: float
    epsilon: float
    support: SupportSet
    norm: NormSpec = L2

    def __post_init__(self):
        p = INF if self.p in (INF, "inf", "Inf") else self.p
        if p != INF and (p < 1 or p != int(p)):
            raise ValueError("p must be an integer >= 1 or inf")
        object.__setattr__(self, "p", p)
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    @property
    def m(self) -> int:
        return self.support.m

    @property
    def q(self) -> float:
        """Hölder conjugate of ``p``."""
        if self.p == 1:
            return INF
        if self.p == INF:
            return 1.0
        return self.p / (self.p - 1)

    def replace(self, **kw) -> "UncertaintySpec":
        d = {"p": self.p, "epsilon": self.epsilon, "support": self.support,
             "norm": self.norm}
        d.update(kw)
        return UncertaintySpec(**d)


def ball_membership(points, centroids, weights, spec: UncertaintySpec,
                    tol: float = 1e-9) -> bool:
    """Whether the K-tuple ``points`` lies in the clustered uncertainty set."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if points.shape != centroids.shape or weights.size != points.shape[0]:
        raise ValueError("dimension mismatch between points, centroids and weights")
    if points.shape[1] != spec.m:
        raise ValueError("points do not match the support dimension")
    dist = spec.norm(points - centroids, axis=1)
    if spec.p == INF:
        inside = bool(np.all(dist <= spec.epsilon + tol))
    else:
        inside = bool(weights @ dist**spec.p <= spec.epsilon**spec.p + tol)
    return inside and spec.support.contains(points, tol)
