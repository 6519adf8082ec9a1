"""Data matrix container plus centering, covariance and column bookkeeping.

Columns are variables, rows are observations. Column indices are 0-based
throughout the Python API.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, UsageError

CENTER_TOL = 1e-12


@dataclass(frozen=True)
class DataMatrix:
    """An n x p matrix with optional column labels.

    ``means`` holds the column means that were subtracted when the matrix was
    produced by :func:`center_columns`, so new data can be centered the same way.
    """

    values: np.ndarray
    col_labels: Optional[tuple] = None
    centered: bool = False
    means: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, order="F", copy=True)
        if vals.ndim != 2:
            raise DataError(f"data matrix must be 2-d, got shape {vals.shape}")
        n, p = vals.shape
        if n < 2 or p < 1:
            raise DataError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not np.all(np.isfinite(vals)):
            r, c = np.argwhere(~np.isfinite(vals))[0]
            raise DataError(f"non-finite entry at row {r}, column {c}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.col_labels is not None:
            labels = tuple(str(s) for s in self.col_labels)
            if len(labels) != p:
                raise DataError(f"{len(labels)} labels for {p} columns")
            object.__setattr__(self, "col_labels", labels)
        if self.means is not None:
            m = np.array(self.means, dtype=np.float64)
            if m.shape != (p,):
                raise DataError("means must have one entry per column")
            m.setflags(write=False)
            object.__setattr__(self, "means", m)
        if self.centered and not is_centered(vals):
            raise DataError("matrix flagged as centered has nonzero column means")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


def is_centered(values: np.ndarray, tol: float = CENTER_TOL) -> bool:
    """True if every column mean is zero relative to that column's max-abs entry."""
    scale = np.max(np.abs(values), axis=0)
    scale[scale == 0] = 1.0
    return bool(np.all(np.abs(values.mean(axis=0)) <= tol * scale))


def center_columns(X: DataMatrix) -> DataMatrix:
    means = X.values.mean(axis=0)
    vals = X.values - means
    # a second pass removes the rounding residue of the first
    vals -= vals.mean(axis=0)
    if X.means is not None:
        means = means + X.means
    return DataMatrix(vals, X.col_labels, centered=True, means=means)


def as_data_matrix(values, col_labels=None, center: bool = True) -> DataMatrix:
    X = DataMatrix(values, col_labels)
    return center_columns(X) if center else X


def _require_centered(X: DataMatrix, what: str):
    if not X.centered:
        raise UsageError(f"{what} requires a centered data matrix; call center_columns first")


def covariance(X: DataMatrix, divisor: Optional[float] = None) -> np.ndarray:
    """Sample covariance ``X^T X / n``, symmetric by construction."""
    _require_centered(X, "covariance")
    d = X.n if divisor is None else divisor
    S = X.values.T @ X.values / d
    upper = np.triu(S)
    return upper + np.triu(S, 1).T


def column_variances(X: DataMatrix) -> np.ndarray:
    _require_centered(X, "column_variances")
    return np.einsum("ij,ij->j", X.values, X.values) / X.n


def check_columns(cols: Sequence[int], p: int, sort: bool = True) -> np.ndarray:
    """Validate a set of 0-based column indices (unique, in range)."""
    idx = np.asarray(cols, dtype=np.int64).ravel()
    if idx.size == 0:
        raise UsageError("column index set is empty")
    if idx.min() < 0 or idx.max() >= p:
        bad = idx[(idx < 0) | (idx >= p)][0]
        raise UsageError(f"column index {bad} out of range for p={p}")
    if np.unique(idx).size != idx.size:
        raise UsageError("column index set has duplicates")
    return np.sort(idx) if sort else idx


def select_columns(X: DataMatrix, cols: Sequence[int]) -> DataMatrix:
    """Submatrix with the given columns, in the order given."""
    idx = check_columns(cols, X.p, sort=False)
    labels = None if X.col_labels is None else tuple(X.col_labels[i] for i in idx)
    means = None if X.means is None else X.means[idx]
    # a column subset of a centered matrix is centered
    return DataMatrix(X.values[:, idx], labels, centered=X.centered, means=means)


def check_permutation(perm: Sequence[int], p: Optional[int] = None) -> np.ndarray:
    perm = np.asarray(perm, dtype=np.int64).ravel()
    size = perm.size if p is None else p
    if perm.size != size or not np.array_equal(np.sort(perm), np.arange(size)):
        raise UsageError("permutation is not a bijection on 0..p-1")
    return perm


def apply_permutation(M: np.ndarray, perm: Sequence[int]) -> np.ndarray:
    """Reorder columns: column ``k`` of the result is column ``perm[k]`` of ``M``."""
    M = np.asarray(M)
    perm = check_permutation(perm, M.shape[1])
    return M[:, perm]


def inverse_permutation(perm: Sequence[int]) -> np.ndarray:
    perm = check_permutation(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)
    return inv
