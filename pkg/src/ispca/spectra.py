"""Spectral estimators (exact SVD and the cross-data-matrix estimator) and accuracy metrics."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import DataMatrix, _require_centered
from .errors import ConvergenceWarning, NumericalError, UsageError

EXACT = "exact"
CDM = "cdm"
METHODS = (EXACT, CDM)


@dataclass(frozen=True)
class SpectralEstimate:
    eigenvalues: np.ndarray
    loadings: np.ndarray  # p x k, unit-norm columns
    method: str
    rank_used: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown spectral method {self.method!r}")
        for arr in (self.eigenvalues, self.loadings):
            arr.setflags(write=False)

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def max_cross_product(self) -> float:
        """Largest ``|v_i^T v_j|`` over i != j; an orthogonality diagnostic."""
        if self.k < 2:
            return 0.0
        G = self.loadings.T @ self.loadings
        np.fill_diagonal(G, 0.0)
        return float(np.abs(G).max())


def fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    V = np.array(V, dtype=np.float64, copy=True)
    if V.size == 0:
        return V
    rows = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[rows, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def exact_svd(X: DataMatrix, k: int) -> SpectralEstimate:
    """Top-k right singular vectors of X with eigenvalues ``d_j^2 / n`` of S."""
    _require_centered(X, "exact_svd")
    n, p = X.shape
    if not 1 <= k <= min(n, p):
        raise UsageError(f"k={k} outside [1, {min(n, p)}]")
    try:
        _, d, vt = np.linalg.svd(X.values, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    V = fix_signs(vt[:k].T)
    return SpectralEstimate(d[:k] ** 2 / n, V, EXACT, k)


def split_halves(n: int, shuffle_seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Row indices of the two CDM halves: the first ceil(n/2) rows and the rest."""
    rows = np.arange(n)
    if shuffle_seed is not None:
        rows = np.random.default_rng(shuffle_seed).permutation(n)
    n1 = (n + 1) // 2
    return rows[:n1], rows[n1:]


def cdm_svd(X: DataMatrix, k: int, shuffle_seed=None) -> SpectralEstimate:
    """Cross-data-matrix estimate of the top-k eigenvalues and loadings.

    The rows are split into halves X1 (n1 rows) and X2 (n2 rows) and the
    n1 x n2 matrix ``C = X1 X2^T / sqrt(n1 n2)`` is decomposed. Its singular
    values estimate the eigenvalues. Each loading is the back-projection
    ``X1^T u1 + X2^T u2`` of C's singular vector pair, rescaled to unit norm.
    """
    _require_centered(X, "cdm_svd")
    n, p = X.shape
    if n < 4:
        raise UsageError(f"cdm_svd needs n >= 4, got n={n}")
    if not 1 <= k <= n // 2:
        raise UsageError(f"k={k} outside [1, {n // 2}] for the cross data matrix")
    r1, r2 = split_halves(n, shuffle_seed)
    X1 = X.values[r1]
    X2 = X.values[r2]
    C = (X1 @ X2.T) / np.sqrt(len(r1) * len(r2))
    try:
        U1, s, U2t = np.linalg.svd(C, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD of the cross data matrix did not converge: {exc}") from exc
    if s[0] == 0.0:
        raise NumericalError("cross data matrix is zero")
    if s[k - 1] <= s[0] * 1e-14:
        raise NumericalError(f"cross data matrix has rank below k={k}")
    # singular values of an SVD are positive, so u1^T C u2 > 0 for each pair already
    V = X1.T @ U1[:, :k] + X2.T @ U2t[:k].T
    V /= np.linalg.norm(V, axis=0)
    return SpectralEstimate(s[:k].copy(), fix_signs(V), CDM, k)


def estimate(X: DataMatrix, k: int, method: str = EXACT) -> SpectralEstimate:
    if method == EXACT:
        return exact_svd(X, k)
    if method == CDM:
        return cdm_svd(X, k)
    raise UsageError(f"unknown spectral method {method!r}")


def spectral_norm(M, max_iter: int = 10_000, tol: float = 1e-14) -> float:
    M = np.ascontiguousarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise UsageError("spectral_norm expects a matrix")
    if not np.all(np.isfinite(M)):
        raise UsageError("spectral_norm needs a finite matrix")
    if M.size == 0 or not M.any():
        return 0.0
    sigma, it, ok = _kernels.power_norm(M, max_iter, tol)
    if not ok:
        warnings.warn(f"power iteration stopped after {it} iterations without converging",
                      ConvergenceWarning, stacklevel=2)
    return float(sigma)


def cosine_similarity(v, w) -> float:
    v = np.asarray(v, dtype=np.float64).ravel()
    w = np.asarray(w, dtype=np.float64).ravel()
    if v.shape != w.shape:
        raise UsageError("vectors differ in length")
    nv, nw = np.linalg.norm(v), np.linalg.norm(w)
    if nv == 0 or nw == 0:
        raise UsageError("cosine similarity of a zero vector")
    return float(min(1.0, abs(v @ w) / (nv * nw)))


def eigenvalue_ratio(estimated: float, truth: float) -> float:
    """``estimated / truth``; above 1 means overestimation."""
    if truth <= 0:
        raise UsageError(f"true eigenvalue must be positive, got {truth}")
    return float(estimated) / float(truth)


@dataclass(frozen=True)
class WeylReport:
    holds: bool
    gaps: np.ndarray
    bound: float
    max_gap: float


def weyl_gap_check(Sigma, E, slack: float = 1e-9) -> WeylReport:
    """Check ``|lambda_j(Sigma) - lambda_j(Sigma + E)| <= ||E||_2`` for every j."""
    Sigma = np.asarray(Sigma, dtype=np.float64)
    E = np.asarray(E, dtype=np.float64)
    if Sigma.shape != E.shape or Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise UsageError(f"shape mismatch: {Sigma.shape} vs {E.shape}")
    for name, A in (("Sigma", Sigma), ("E", E)):
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise UsageError(f"{name} is not symmetric")
    lam = np.linalg.eigvalsh(Sigma)[::-1]
    ell = np.linalg.eigvalsh(Sigma + E)[::-1]
    gaps = np.abs(lam - ell)
    bound = spectral_norm(E)
    max_gap = float(gaps.max())
    return WeylReport(max_gap <= bound + slack, gaps, bound, max_gap)
