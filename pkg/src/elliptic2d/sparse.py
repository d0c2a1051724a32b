"""CSR sparse matrices, ILU(0) preconditioning, and right-preconditioned
BiCGSTAB.

The hot kernels (matvec, factorization, triangular solves) are jit-compiled
with numba; everything runs single-threaded in a fixed order so repeated
solves of the same system are bit-identical.  Right preconditioning is used
so the residual monitored by the iteration is the residual of the original
system, and convergence is re-verified against the true residual after the
loop exits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import Breakdown, MaxIterationsExceeded, ZeroPivot


@dataclass(frozen=True)
class CsrMatrix:
    """Square CSR matrix with sorted, duplicate-free column indices."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray

    @property
    def nnz(self) -> int:
        return len(self.data)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = np.empty(self.n)
        _csr_matvec(self.indptr, self.indices, self.data, np.asarray(x, float), y)
        return y

    def to_dense(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i in range(self.n):
            for p in range(self.indptr[i], self.indptr[i + 1]):
                a[i, self.indices[p]] = self.data[p]
        return a


@dataclass(frozen=True)
class Ilu0Factors:
    """Combined L\\U values on the sparsity pattern of the factored matrix.
    L has implicit unit diagonal; U holds the pivots."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    diag_pos: np.ndarray

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = np.asarray(b, float).copy()
        _ilu0_solve(self.indptr, self.indices, self.data, self.diag_pos, y)
        return y


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool


def csr_from_triplets(n: int, rows, cols, vals) -> CsrMatrix:
    """Build CSR from coordinate triplets.  Duplicates are summed; a missing
    diagonal entry is inserted as an explicit zero so ILU(0) can spot it."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise IndexError("triplet index out of range")

    # Append explicit zero diagonals, then fold duplicates.
    rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([cols, np.arange(n, dtype=np.int64)])
    vals = np.concatenate([vals, np.zeros(n)])

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    keep = np.ones(len(rows), dtype=bool)
    keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    group = np.cumsum(keep) - 1
    data = np.zeros(keep.sum())
    np.add.at(data, group, vals)
    rows = rows[keep]
    cols = cols[keep]

    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    return CsrMatrix(n=n, indptr=indptr, indices=cols.astype(np.int64), data=data)


@njit(cache=True)
def _csr_matvec(indptr, indices, data, x, out):
    n = len(out)
    for i in range(n):
        s = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            s += data[p] * x[indices[p]]
        out[i] = s


@njit(cache=True)
def _ilu0_kernel(indptr, indices, data, diag_pos):
    """IKJ-ordered in-place ILU(0).  Returns the row of the first zero pivot,
    or -1 on success."""
    n = len(indptr) - 1
    for i in range(n):
        for p in range(indptr[i], indptr[i + 1]):
            k = indices[p]
            if k >= i:
                break
            ukk = data[diag_pos[k]]
            if ukk == 0.0:
                return k
            lik = data[p] / ukk
            data[p] = lik
            # subtract lik * U[k, j] for j > k restricted to row i's pattern
            q = diag_pos[k] + 1
            r = p + 1
            row_end_k = indptr[k + 1]
            row_end_i = indptr[i + 1]
            while q < row_end_k and r < row_end_i:
                jk = indices[q]
                ji = indices[r]
                if jk == ji:
                    data[r] -= lik * data[q]
                    q += 1
                    r += 1
                elif jk < ji:
                    q += 1
                else:
                    r += 1
        if data[diag_pos[i]] == 0.0:
            return i
    return -1


@njit(cache=True)
def _ilu0_solve(indptr, indices, data, diag_pos, y):
    """In-place solve of L U y = b with unit-lower L stored below the
    diagonal and U on/above it."""
    n = len(indptr) - 1
    for i in range(n):
        s = y[i]
        for p in range(indptr[i], diag_pos[i]):
            s -= data[p] * y[indices[p]]
        y[i] = s
    for i in range(n - 1, -1, -1):
        s = y[i]
        for p in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[p] * y[indices[p]]
        y[i] = s / data[diag_pos[i]]


def ilu0_factorize(a: CsrMatrix) -> Ilu0Factors:
    """Incomplete LU with zero fill-in on the pattern of ``a``."""
    diag_pos = np.empty(a.n, dtype=np.int64)
    for i in range(a.n):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        pos = lo + np.searchsorted(a.indices[lo:hi], i)
        if pos >= hi or a.indices[pos] != i:
            raise ZeroPivot(f"row {i} has no diagonal entry")
        diag_pos[i] = pos
    data = a.data.copy()
    bad = _ilu0_kernel(a.indptr, a.indices, data, diag_pos)
    if bad >= 0:
        raise ZeroPivot(f"zero pivot in row {bad}")
    return Ilu0Factors(
        n=a.n, indptr=a.indptr, indices=a.indices, data=data, diag_pos=diag_pos
    )


def bicgstab(
    a: CsrMatrix,
    m: Ilu0Factors,
    b: np.ndarray,
    rel_tol: float = 1e-9,
    max_iter: int = 20000,
):
    """Right-preconditioned BiCGSTAB with x0 = 0.

    Returns (x, SolveReport).  Convergence means the *recomputed* true
    residual satisfies ||b - A x|| <= rel_tol * ||b||.  One restart from the
    current iterate is attempted on scalar breakdown before giving up.
    """
    if rel_tol <= 0.0:
        raise ValueError("rel_tol must be positive")
    b = np.asarray(b, dtype=float)
    norm_b = np.linalg.norm(b)
    x = np.zeros(a.n)
    if norm_b == 0.0:
        return x, SolveReport(iterations=0, relative_residual=0.0, converged=True)

    r = b.copy()
    restarted = False
    it = 0

    while True:
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(a.n)
        p = np.zeros(a.n)
        broke = False

        while it < max_iter:
            rho_new = float(r_hat @ r)
            if abs(rho_new) < 1e-300 or abs(omega) < 1e-300:
                broke = True
                break
            # with rho = alpha = omega = 1 and p = v = 0 this reduces to
            # p = r on the first pass
            beta = (rho_new / rho) * (alpha / omega)
            p = r + beta * (p - omega * v)
            rho = rho_new

            p_hat = m.solve(p)
            v = a.matvec(p_hat)
            denom = float(r_hat @ v)
            if abs(denom) < 1e-300:
                broke = True
                break
            alpha = rho / denom
            s = r - alpha * v
            it += 1

            if np.linalg.norm(s) <= rel_tol * norm_b:
                x = x + alpha * p_hat
                r_true = b - a.matvec(x)
                if np.linalg.norm(r_true) <= rel_tol * norm_b:
                    return x, SolveReport(
                        iterations=it,
                        relative_residual=float(np.linalg.norm(r_true) / norm_b),
                        converged=True,
                    )
                r = r_true
                continue

            s_hat = m.solve(s)
            t = a.matvec(s_hat)
            tt = float(t @ t)
            if tt == 0.0:
                broke = True
                break
            omega = float(t @ s) / tt
            x = x + alpha * p_hat + omega * s_hat
            r = s - omega * t

            if np.linalg.norm(r) <= rel_tol * norm_b:
                r_true = b - a.matvec(x)
                if np.linalg.norm(r_true) <= rel_tol * norm_b:
                    return x, SolveReport(
                        iterations=it,
                        relative_residual=float(np.linalg.norm(r_true) / norm_b),
                        converged=True,
                    )
                r = r_true

        if broke and not restarted:
            restarted = True
            r = b - a.matvec(x)
            continue
        rel = float(np.linalg.norm(b - a.matvec(x)) / norm_b)
        if broke:
            raise Breakdown(f"BiCGSTAB broke down twice (rel residual {rel:.3e})")
        raise MaxIterationsExceeded(
            f"no convergence in {max_iter} iterations (rel residual {rel:.3e})"
        )


def solve(a: CsrMatrix, b: np.ndarray, rel_tol: float = 1e-9, max_iter: int = 20000):
    """Factor + solve convenience wrapper used by both discretizations."""
    m = ilu0_factorize(a)
    return bicgstab(a, m, b, rel_tol=rel_tol, max_iter=max_iter)


def save_matrix_market(path, a: CsrMatrix) -> None:
    """Dump in MatrixMarket coordinate format for offline debugging."""
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{a.n} {a.n} {a.nnz}\n")
        for i in range(a.n):
            for p in range(a.indptr[i], a.indptr[i + 1]):
                fh.write(f"{i + 1} {a.indices[p] + 1} {a.data[p]:.17g}\n")
