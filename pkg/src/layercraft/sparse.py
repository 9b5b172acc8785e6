"""Compressed sparse row storage and a banded LU factorization.

Unknowns are always ordered lexicographically (y-major: ``k = i + j * nx``) so
that the two-dimensional stencils produce a matrix with bandwidth ~2 nx.
The factorization itself is LAPACK's ``dgbtrf`` (partial pivoting inside the
band); this module only owns the storage conversion and the error contract.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack


class SingularMatrixError(ArithmeticError):
    pass


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    n: int

    @property
    def nnz(self) -> int:
        return int(self.data.size)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"vector of length {x.shape} does not match dimension {self.n}")
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        out = np.zeros(self.n)
        np.add.at(out, rows, self.data * x[self.indices])
        return out

    def __matmul__(self, x):
        return self.matvec(x)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=(self.n, self.n))

    @classmethod
    def from_scipy(cls, m) -> "CsrMatrix":
        m = sp.csr_matrix(m)
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        m.sum_duplicates()
        m.sort_indices()
        m.eliminate_zeros()
        return cls(m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(float), m.shape[0])

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def norm_inf(self) -> float:
        if self.nnz == 0:
            return 0.0
        rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return float(np.bincount(rows, np.abs(self.data), minlength=self.n).max())


def assemble(triplets, n: int) -> CsrMatrix:
    """Build a canonical CSR matrix from ``(row, col, value)`` triplets, summing duplicates."""
    t = list(triplets) if not isinstance(triplets, np.ndarray) else triplets
    if len(t) == 0:
        return CsrMatrix(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0), n)
    arr = np.asarray(t, dtype=float).reshape(-1, 3)
    rows = arr[:, 0].astype(np.int64)
    cols = arr[:, 1].astype(np.int64)
    if np.any(rows != arr[:, 0]) or np.any(cols != arr[:, 1]):
        raise ValueError("triplet indices must be integers")
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n:
        raise ValueError(f"triplet index out of range for dimension {n}")
    vals = arr[:, 2]
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows * n + cols
    first = np.concatenate([[True], key[1:] != key[:-1]])
    group = np.cumsum(first) - 1
    summed = np.bincount(group, vals)
    rows, cols = rows[first], cols[first]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return CsrMatrix(np.cumsum(indptr), cols, summed, n)


@dataclass(frozen=True, eq=False)
class BandedLu:
    lub: np.ndarray
    piv: np.ndarray
    kl: int
    ku: int
    n: int


def bandwidths(A: CsrMatrix) -> tuple[int, int]:
    if A.nnz == 0:
        return 0, 0
    rows = np.repeat(np.arange(A.n), np.diff(A.indptr))
    off = A.indices - rows
    return int(max(0, -off.min())), int(max(0, off.max()))


def band_factorize(A: CsrMatrix) -> BandedLu:
    """LU factorization with partial pivoting confined to the band of ``A``."""
    n = A.n
    kl, ku = bandwidths(A)
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    # dgbtrf layout: A[i, j] -> ab[kl + ku + i - j, j], with kl extra rows for fill-in
    ab = np.zeros((2 * kl + ku + 1, n), order="F")
    ab[kl + ku + rows - A.indices, A.indices] = A.data
    rowmax = np.zeros(n)
    np.maximum.at(rowmax, rows, np.abs(A.data))
    if n == 0:
        raise ValueError("empty matrix")
    if np.any(rowmax == 0.0):
        raise SingularMatrixError("matrix has an all-zero row")
    lub, piv, info = lapack.dgbtrf(ab, kl, ku, overwrite_ab=True)
    if info < 0:
        raise ValueError(f"dgbtrf argument error {info}")
    diag = np.abs(lub[kl + ku, :])
    if info > 0 or np.any(diag < 1e-14 * rowmax.max()):
        k = int(np.argmin(diag / rowmax.max()))
        raise SingularMatrixError(f"numerically singular matrix (pivot {diag[k]:.3e} at column {k})")
    return BandedLu(lub, piv, kl, ku, n)


def solve(lu: BandedLu, rhs: np.ndarray) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape != (lu.n,):
        raise ValueError(f"right-hand side of shape {rhs.shape} does not match dimension {lu.n}")
    x, info = lapack.dgbtrs(lu.lub, lu.kl, lu.ku, rhs, lu.piv)
    if info != 0:
        raise ValueError(f"dgbtrs failed with info={info}")
    return x
