"""POD reduced bases in the X_h inner product and reduced fiber losses.

With a snapshot matrix ``S`` (N x N_s) the correlation matrix is
``C = S^T X S / N_s``; its eigenpairs ``(lambda_k, v_k)`` give X-orthonormal
modes ``pi_k = S v_k / sqrt(N_s lambda_k)``.  Reduced coordinates are
``s_r = Pi^T X s`` and the reduced loss is ``s_r^T W_r s_r + 2 s_r^T alpha_r + beta``.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import cholesky_solve, read_matrix, sym_eig, write_matrix

EIG_CUTOFF = 1e-13


class SnapshotError(RuntimeError):
    def __init__(self, message, sample_id):
        super().__init__(message)
        self.sample_id = sample_id


def parallel_map(fn, items, workers=1):
    """Ordered map over a bounded thread pool (``workers <= 1`` runs inline)."""
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(fn, items))


def compute_snapshots(disc, samples, workers=1) -> np.ndarray:
    """Full FOSLS solutions of ``samples`` as the columns of an N x N_s matrix."""
    samples = list(samples)
    if not samples:
        raise ValueError("compute_snapshots needs at least one sample")

    def one(sample):
        try:
            return disc.solve(disc.weights(sample))
        except Exception as exc:
            sid = getattr(sample, "seed", -1)
            raise SnapshotError(f"snapshot solve failed for sample {sid}: {exc}", sid) from exc

    return np.column_stack(parallel_map(one, samples, workers))


@dataclass(eq=False)
class PodBasis:
    """X-orthonormal reduced basis ``Pi`` (N x r) with the full POD spectrum."""

    Pi: np.ndarray
    eigenvalues: np.ndarray
    n_snapshots: int

    @property
    def r(self) -> int:
        return self.Pi.shape[1]

    @property
    def n(self) -> int:
        return self.Pi.shape[0]

    @property
    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.Pi).tobytes()).hexdigest()[:16]

    def truncate(self, r) -> "PodBasis":
        if not 0 < r <= self.r:
            raise ValueError(f"cannot truncate a rank-{self.r} basis to {r}")
        return PodBasis(self.Pi[:, :r].copy(), self.eigenvalues, self.n_snapshots)

    def project(self, X, s) -> np.ndarray:
        return project(self.Pi, X, s)

    def expand(self, s_r) -> np.ndarray:
        return expand(self.Pi, s_r)

    def save(self, prefix) -> None:
        write_matrix(f"{prefix}.basis.rbno", self.Pi)
        write_matrix(f"{prefix}.eigenvalues.rbno", np.r_[self.n_snapshots, self.eigenvalues])

    @classmethod
    def load(cls, prefix) -> "PodBasis":
        ev = read_matrix(f"{prefix}.eigenvalues.rbno").ravel()
        return cls(read_matrix(f"{prefix}.basis.rbno"), ev[1:], int(ev[0]))


def admissible_rank(eigenvalues) -> int:
    lam = np.asarray(eigenvalues)
    if lam.size == 0 or lam[0] <= 0:
        return 0
    return int(np.sum(lam > EIG_CUTOFF * lam[0]))


def pod(S, X, rank=None, tol=None) -> PodBasis:
    """POD of the snapshot columns of ``S`` in the inner product ``X``.

    Exactly one of ``rank`` (number of modes) or ``tol`` (smallest ``r`` with
    relative eigenvalue tail ``<= tol``) may be given; with neither, all
    numerically nonzero modes are kept.  Ranks beyond the numerical rank
    (eigenvalues below ``1e-13 lambda_1``) are capped.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if rank is not None and tol is not None:
        raise ValueError("give a rank or a tolerance, not both")
    if S.shape[0] != X.shape[0]:
        raise ValueError(f"snapshots have {S.shape[0]} rows, X is {X.shape}")
    if not np.any(S):
        raise ValueError("all snapshots are zero")
    ns = S.shape[1]
    XS = X @ S
    C = S.T @ XS / ns
    lam, V = sym_eig(0.5 * (C + C.T))
    lam = np.where(lam < 0.0, 0.0, lam)
    r_max = admissible_rank(lam)
    if rank is not None:
        if rank < 1:
            raise ValueError("rank must be positive")
        r = min(int(rank), r_max)
    elif tol is not None:
        r = next(r for r in range(1, r_max + 1) if pod_tail(lam, r)[1] <= tol) if r_max else 0
    else:
        r = r_max
    Pi = S @ V[:, :r] / np.sqrt(ns * lam[:r])
    return PodBasis(Pi, lam, ns)


def project(Pi, X, s) -> np.ndarray:
    """Reduced coordinates ``Pi^T X s`` (``s`` may be N or N x B)."""
    s = np.asarray(s, dtype=float)
    if s.shape[0] != Pi.shape[0]:
        raise ValueError(f"vector of length {s.shape[0]} does not match basis with {Pi.shape[0]} rows")
    return Pi.T @ (X @ s)


def expand(Pi, s_r) -> np.ndarray:
    s_r = np.asarray(s_r, dtype=float)
    if s_r.shape[0] != Pi.shape[1]:
        raise ValueError(f"reduced vector of length {s_r.shape[0]} does not match rank {Pi.shape[1]}")
    return Pi @ s_r


def pod_tail(eigenvalues, r):
    """Absolute and relative eigenvalue tails ``sum_{k > r} lambda_k``."""
    lam = np.asarray(eigenvalues, dtype=float)
    total = float(lam.sum())
    tail = float(lam[r:].sum()) if r < lam.size else 0.0
    return tail, (tail / total if total > 0 else 0.0)


@dataclass(eq=False)
class ReducedWeights:
    W: np.ndarray
    alpha: np.ndarray
    beta: float
    sample_id: int = -1

    @property
    def r(self) -> int:
        return len(self.alpha)

    def loss(self, s_r) -> float:
        s_r = np.asarray(s_r, dtype=float)
        if s_r.shape != self.alpha.shape:
            raise ValueError(f"reduced vector has shape {s_r.shape}, weights need {self.alpha.shape}")
        return float(s_r @ self.W @ s_r + 2.0 * s_r @ self.alpha + self.beta)

    def truncate(self, r) -> "ReducedWeights":
        return ReducedWeights(self.W[:r, :r].copy(), self.alpha[:r].copy(), self.beta, self.sample_id)


def reduce_weights(weights, basis) -> ReducedWeights:
    Pi = basis.Pi if isinstance(basis, PodBasis) else np.asarray(basis)
    if Pi.shape[0] != weights.n:
        raise ValueError(f"basis has {Pi.shape[0]} rows, weights have {weights.n}")
    WPi = weights.W @ Pi
    W = Pi.T @ WPi
    return ReducedWeights(0.5 * (W + W.T), Pi.T @ weights.alpha, float(weights.beta), weights.sample_id)


def solve_rb(rw: ReducedWeights) -> np.ndarray:
    """Reduced normal equation ``W_r s_r = -alpha_r``."""
    return cholesky_solve(rw.W, -rw.alpha)


@dataclass(eq=False)
class ReducedBatch:
    """Stacked reduced weights for vectorised loss evaluation."""

    W: np.ndarray  # (B, r, r)
    alpha: np.ndarray  # (B, r)
    beta: np.ndarray  # (B,)
    ids: np.ndarray

    @classmethod
    def stack(cls, items) -> "ReducedBatch":
        items = list(items)
        return cls(np.stack([w.W for w in items]), np.stack([w.alpha for w in items]),
                   np.array([w.beta for w in items]), np.array([w.sample_id for w in items]))

    def __len__(self):
        return len(self.beta)

    @property
    def r(self) -> int:
        return self.alpha.shape[1]

    def subset(self, idx) -> "ReducedBatch":
        return ReducedBatch(self.W[idx], self.alpha[idx], self.beta[idx], self.ids[idx])

    def losses(self, S) -> np.ndarray:
        WS = np.einsum("bij,bj->bi", self.W, S)
        return np.einsum("bi,bi->b", S, WS) + 2.0 * np.einsum("bi,bi->b", S, self.alpha) + self.beta

    def gradients(self, S) -> np.ndarray:
        return 2.0 * (np.einsum("bij,bj->bi", self.W, S) + self.alpha)

    def optimal(self) -> np.ndarray:
        return np.stack([cholesky_solve(W, -a) for W, a in zip(self.W, self.alpha)])

    def save(self, prefix) -> None:
        b, r = self.alpha.shape
        write_matrix(f"{prefix}.W.rbno", self.W.reshape(b, r * r))
        write_matrix(f"{prefix}.alpha.rbno", self.alpha)
        write_matrix(f"{prefix}.beta.rbno", np.column_stack([self.beta, self.ids]))

    @classmethod
    def load(cls, prefix) -> "ReducedBatch":
        alpha = read_matrix(f"{prefix}.alpha.rbno")
        b, r = alpha.shape
        bi = read_matrix(f"{prefix}.beta.rbno")
        return cls(read_matrix(f"{prefix}.W.rbno").reshape(b, r, r), alpha, bi[:, 0].copy(), bi[:, 1].astype(np.int64))
