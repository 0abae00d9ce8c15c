"""Sparse and dense linear algebra kernels.

Sparse matrices are :class:`scipy.sparse.csr_matrix`.  The SPD solver is a
Jacobi-preconditioned conjugate gradient, the symmetric eigensolver a cyclic
Jacobi method with round-robin (parallel) pair ordering.  Matrices persist in
the ``RBNO1`` binary format.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

MAGIC = b"RBNO1\0"


class LinalgError(ArithmeticError):
    pass


class SolverError(LinalgError):
    """Conjugate gradients did not reach the requested tolerance."""

    def __init__(self, message, residual=np.nan, iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NotSPDError(LinalgError):
    pass


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {A.shape} times vector {x.shape}")
    return A @ x


def is_symmetric(A, atol=1e-12) -> bool:
    if sp.issparse(A):
        d = abs(A - A.T)
        return d.nnz == 0 or d.max() <= atol
    A = np.asarray(A)
    return float(np.max(np.abs(A - A.T), initial=0.0)) <= atol


def solve_spd(A, b, tol=1e-10, max_iter=None, x0=None, return_info=False):
    """Solve ``A x = b`` for SPD ``A`` by Jacobi-preconditioned CG.

    Stops once ``||A x - b||_2 <= tol * ||b||_2``.

    Raises
    ------
    SolverError
        If the tolerance is not met within ``max_iter`` iterations
        (default ``20 n``).
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    if max_iter is None:
        max_iter = 20 * max(n, 1)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        x[:] = 0.0
        return (x, {"iterations": 0, "residual": 0.0}) if return_info else x
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NotSPDError("non-positive diagonal entry in SPD solve")
    inv_diag = 1.0 / diag
    r = b - A @ x if x0 is not None else b.copy()
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    k = 0
    if rnorm > target:
        z = inv_diag * r
        p = z.copy()
        rz = r @ z
        while k < max_iter:
            Ap = A @ p
            pAp = p @ Ap
            if pAp <= 0:
                raise NotSPDError("matrix is not positive definite (p^T A p <= 0)")
            step = rz / pAp
            x += step * p
            r -= step * Ap
            k += 1
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                break
            z = inv_diag * r
            rz_new = r @ z
            p *= rz_new / rz
            p += z
            rz = rz_new
        else:
            # the recursive residual drifts; confirm with the true one
            rnorm = np.linalg.norm(b - A @ x)
            if rnorm > target:
                raise SolverError(
                    f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
                    residual=rnorm / bnorm,
                    iterations=k,
                )
    info = {"iterations": k, "residual": rnorm / bnorm}
    return (x, info) if return_info else x


def solve_direct(A, b):
    """Sparse LU solve, used where CG would be the bottleneck."""
    from scipy.sparse.linalg import splu

    lu = splu(sp.csc_matrix(A))
    return lu.solve(np.asarray(b, dtype=float))


def _round_robin(m):
    """Yield disjoint index pairs covering all pairs of ``range(m)`` once per sweep."""
    players = list(range(m))
    for _ in range(m - 1):
        half = m // 2
        yield np.array(players[:half]), np.array(players[::-1][:half])
        players = [players[0]] + [players[-1]] + players[1:-1]


def sym_eig(C, tol=1e-12, max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns eigenvalues in descending order and the matching orthonormal
    eigenvectors as columns.
    """
    A = np.array(C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    scale = np.linalg.norm(A)
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(A), initial=0.0)):
        raise ValueError("sym_eig requires a symmetric matrix")
    A = 0.5 * (A + A.T)
    Vt = np.eye(n)
    if n < 2 or scale == 0.0:
        order = np.argsort(-np.diag(A), kind="stable")
        return np.diag(A)[order].copy(), Vt.T[:, order]

    m = n + (n % 2)
    schedule = []
    for p, q in _round_robin(m):
        keep = (p < n) & (q < n)
        p, q = p[keep], q[keep]
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        schedule.append((lo, hi))

    threshold = tol * scale
    for _ in range(max_sweeps):
        D = A.copy()
        np.fill_diagonal(D, 0.0)
        off = np.linalg.norm(D)
        if off <= threshold:
            break
        for p, q in schedule:
            apq = A[p, q]
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = A[p, p], A[q, q]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            c = 1.0 / np.hypot(1.0, t)
            s = t * c
            # rows of A, then rows of A^T: both updates touch contiguous memory
            for _ in range(2):
                Ap, Aq = A[p, :], A[q, :]
                A[p, :], A[q, :] = c[:, None] * Ap - s[:, None] * Aq, s[:, None] * Ap + c[:, None] * Aq
                A = A.T.copy()
            A[p, q] = 0.0
            A[q, p] = 0.0
            Vp, Vq = Vt[p, :], Vt[q, :]
            Vt[p, :], Vt[q, :] = c[:, None] * Vp - s[:, None] * Vq, s[:, None] * Vp + c[:, None] * Vq
    else:
        raise LinalgError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")

    lam = np.diag(A).copy()
    order = np.argsort(-lam, kind="stable")
    return lam[order], Vt.T[:, order].copy()


def cholesky_solve(A, B):
    """Solve ``A X = B`` for dense SPD ``A`` via Cholesky."""
    A = np.asarray(A, dtype=float)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("matrix is not positive definite (non-positive Cholesky pivot)") from exc
    from scipy.linalg import solve_triangular

    B = np.asarray(B, dtype=float)
    y = solve_triangular(L, B, lower=True)
    return solve_triangular(L.T, y, lower=False)


# -- RBNO1 persistence ---------------------------------------------------------


def write_matrix(path, array) -> None:
    """Write a 2-D (or 1-D, stored as a column) float array in RBNO1 format."""
    a = np.asarray(array, dtype="<f8")
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError("RBNO1 stores 1-D or 2-D arrays only")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
        fh.write(np.ascontiguousarray(a).tobytes())


def read_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not an RBNO1 file")
    off = len(MAGIC)
    n_rows, n_cols = struct.unpack_from("<QQ", data, off)
    off += 16
    expected = off + 8 * n_rows * n_cols
    if len(data) != expected:
        raise ValueError(f"{path}: truncated RBNO1 payload ({len(data)} != {expected} bytes)")
    return np.frombuffer(data, dtype="<f8", offset=off).reshape(n_rows, n_cols).astype(float)


def write_csr(prefix, A) -> None:
    """Persist a CSR matrix as three RBNO1 arrays ``<prefix>.{indptr,indices,data}.rbno``."""
    A = as_csr(A)
    prefix = str(prefix)
    write_matrix(prefix + ".indptr.rbno", np.r_[A.shape[0], A.shape[1], A.indptr].astype(float))
    write_matrix(prefix + ".indices.rbno", A.indices.astype(float))
    write_matrix(prefix + ".data.rbno", A.data)


def read_csr(prefix) -> sp.csr_matrix:
    prefix = str(prefix)
    head = read_matrix(prefix + ".indptr.rbno").ravel().astype(np.int64)
    indices = read_matrix(prefix + ".indices.rbno").ravel().astype(np.int64)
    data = read_matrix(prefix + ".data.rbno").ravel()
    return sp.csr_matrix((data, indices, head[2:]), shape=(int(head[0]), int(head[1])))
