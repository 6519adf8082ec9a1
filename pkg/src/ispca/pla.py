"""Principal loading analysis: each block's share of the total variance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import BlockPartition
from .core import DataMatrix, _require_centered, column_variances
from .errors import DataError, NumericalError, UsageError

TRACE = "trace"
EIGEN = "eigen"


@dataclass(frozen=True)
class BlockShare:
    block_id: int
    size: int
    variance: float
    share: float
    expected_share: float  # size / p, the share of a block of average variables


@dataclass(frozen=True)
class VarianceReport:
    per_block: tuple  # BlockShare, descending share
    total_variance: float
    method: str

    @property
    def shares(self) -> dict:
        return {b.block_id: b.share for b in self.per_block}

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "total_variance": self.total_variance,
            "blocks": [vars(b) for b in self.per_block],
        }


def _report(variances, part: BlockPartition, method: str) -> VarianceReport:
    total = float(np.sum(variances))
    if total <= 0:
        raise DataError("total variance is zero")
    rows = [BlockShare(i, len(blk), float(v), float(v) / total, len(blk) / part.p)
            for i, (blk, v) in enumerate(zip(part.blocks, variances))]
    rows.sort(key=lambda r: (-r.share, r.block_id))
    return VarianceReport(tuple(rows), total, method)


def _check(X: DataMatrix, part: BlockPartition):
    _require_centered(X, "explained variance")
    if part.p != X.p:
        raise UsageError(f"partition covers {part.p} columns, data has {X.p}")


def explained_variance_trace(X: DataMatrix, part: BlockPartition) -> VarianceReport:
    """Block shares from column variances alone; no covariance matrix is formed."""
    _check(X, part)
    s = column_variances(X)
    return _report([s[list(blk)].sum() for blk in part.blocks], part, TRACE)


def explained_variance_eigen(X: DataMatrix, part: BlockPartition) -> VarianceReport:
    """Block shares from the eigenvalues of each block's covariance (test oracle)."""
    _check(X, part)
    sums = []
    for blk in part.blocks:
        Xi = X.values[:, list(blk)]
        # the nonzero eigenvalues of Xi^T Xi / n and Xi Xi^T / n coincide
        G = Xi @ Xi.T if Xi.shape[1] > Xi.shape[0] else Xi.T @ Xi
        try:
            ev = np.linalg.eigvalsh(G / X.n)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigensolver failed: {exc}") from exc
        sums.append(ev.sum())
    return _report(sums, part, EIGEN)


def select_principal(report: VarianceReport, min_share: float) -> list:
    """Ids of blocks whose share is at least ``min_share``, largest first."""
    if min_share < 0:
        raise UsageError("min_share must be nonnegative")
    return [b.block_id for b in report.per_block if b.share >= min_share]
