"""Sparse affine expressions used to assemble conic programs.

An :class:`Expr` is a vector ``A @ v + c`` where ``v`` is the (growing) vector
of program variables owned by a :class:`~mro.conic.ir.ProgramBuilder`.  The
column count of ``A`` is whatever was allocated when the expression was made;
operands are padded with empty columns when combined.
"""

from __future__ import annotations

from numbers import Real

import numpy as np
import scipy.sparse as sp

def _as_csr(A) -> sp.csr_matrix:
    return A if isinstance(A, sp.csr_matrix) else sp.csr_matrix(A)


def _pad(A: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    if A.shape[1] == ncols:
        return A
    return sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], ncols))


class Expr:
    """Vector-valued affine function of the program variables."""

    __slots__ = ("A", "c")
    # let numpy defer ``ndarray @ Expr`` and ``ndarray * Expr`` to us
    __array_ufunc__ = None

    def __init__(self, A: sp.spmatrix, c: np.ndarray):
        self.A = _as_csr(A)
        self.c = np.asarray(c, dtype=float).reshape(-1)
        if self.A.shape[0] != self.c.size:
            raise ValueError("row mismatch between coefficients and constant")

    # -- constructors -----------------------------------------------------
    @classmethod
    def constant(cls, values) -> "Expr":
        c = np.atleast_1d(np.asarray(values, dtype=float)).reshape(-1)
        return cls(sp.csr_matrix((c.size, 0)), c)

    @classmethod
    def variables(cls, start: int, size: int) -> "Expr":
        A = sp.csr_matrix(
            (np.ones(size), np.arange(start, start + size), np.arange(size + 1)),
            shape=(size, start + size),
        )
        return cls(A, np.zeros(size))

    @staticmethod
    def stack(items) -> "Expr":
        items = [as_expr(e) for e in items]
        n = max(e.A.shape[1] for e in items)
        return Expr(sp.vstack([_pad(e.A, n) for e in items], format="csr"),
                    np.concatenate([e.c for e in items]))

    # -- shape ------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.c.size

    def __len__(self) -> int:
        return self.size

    @property
    def is_constant(self) -> bool:
        return self.A.nnz == 0 or not np.any(self.A.data)

    def __getitem__(self, idx) -> "Expr":
        rows = np.arange(self.size)[idx]
        rows = np.atleast_1d(rows)
        return Expr(self.A[rows], self.c[rows])

    # -- arithmetic -------------------------------------------------------
    def _broadcast(self, other: "Expr") -> tuple["Expr", "Expr"]:
        a, b = self, other
        if a.size == b.size:
            return a, b
        if a.size == 1:
            return a.repeat(b.size), b
        if b.size == 1:
            return a, b.repeat(a.size)
        raise ValueError(f"cannot broadcast sizes {a.size} and {b.size}")

    def repeat(self, n: int) -> "Expr":
        if self.size != 1:
            raise ValueError("only scalar expressions can be repeated")
        return Expr(sp.vstack([self.A] * n, format="csr"), np.repeat(self.c, n))

    def __add__(self, other) -> "Expr":
        a, b = self._broadcast(as_expr(other))
        n = max(a.A.shape[1], b.A.shape[1])
        return Expr(_pad(a.A, n) + _pad(b.A, n), a.c + b.c)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr(-self.A, -self.c)

    def __sub__(self, other) -> "Expr":
        return self + (-as_expr(other))

    def __rsub__(self, other) -> "Expr":
        return as_expr(other) - self

    def __mul__(self, other) -> "Expr":
        if isinstance(other, Expr):
            raise TypeError("product of two expressions is not affine")
        w = np.asarray(other, dtype=float)
        if w.ndim == 0:
            return Expr(self.A * float(w), self.c * float(w))
        w = w.reshape(-1)
        if w.size != self.size:
            raise ValueError("elementwise scaling size mismatch")
        return Expr(sp.diags(w) @ self.A, w * self.c)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Expr":
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rmatmul__(self, M) -> "Expr":
        M = M if sp.issparse(M) else np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[1] != self.size:
            raise ValueError("matrix/expression size mismatch")
        Ms = sp.csr_matrix(M)
        return Expr(Ms @ self.A, Ms @ self.c)

    def sum(self) -> "Expr":
        ones = sp.csr_matrix(np.ones((1, self.size)))
        return Expr(ones @ self.A, [self.c.sum()])

    def dot(self, w) -> "Expr":
        w = np.asarray(w, dtype=float).reshape(1, -1)
        return w @ self

    # -- evaluation -------------------------------------------------------
    def value(self, v: np.ndarray) -> np.ndarray:
        return trim(self.A, v.size) @ v + self.c

    def __repr__(self) -> str:
        return f"Expr(size={self.size}, nnz={self.A.nnz})"


def trim(A: sp.csr_matrix, ncols: int) -> sp.csr_matrix:
    """Resize the column dimension to exactly ``ncols``."""
    A = A.tocsr()
    if A.nnz and A.indices.max() >= ncols:
        raise ValueError("expression references a variable beyond ncols")
    return _pad(A, ncols)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (Real, np.ndarray, list, tuple)):
        return Expr.constant(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")
