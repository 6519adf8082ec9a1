"""Inherently sparse PCA: per-block SVD with zero-padded loadings."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .blocks import BlockPartition
from .core import DataMatrix, _require_centered, select_columns
from .errors import IspcaError, UsageError
from .spectra import CDM, EXACT, METHODS, SpectralEstimate, cdm_svd, exact_svd

FORMAT_VERSION = 1

TOP_K = "top-k"
PER_BLOCK = "per-block"
FULL = "full"
POLICIES = (TOP_K, PER_BLOCK, FULL)


class BlockFitError(IspcaError):
    """A per-block spectral fit failed; ``block_id`` says which block."""

    def __init__(self, block_id: int, cause: Exception):
        super().__init__(f"block {block_id}: {cause}")
        self.block_id = block_id
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 4)


@dataclass(frozen=True)
class IsPcaModel:
    loadings: np.ndarray  # p x k, column j supported on block component_block[j]
    eigenvalues: np.ndarray
    component_block: np.ndarray
    component_method: tuple
    partition: BlockPartition
    svd_method: str
    column_means: np.ndarray
    col_labels: Optional[tuple] = None

    def __post_init__(self):
        for arr in (self.loadings, self.eigenvalues, self.component_block, self.column_means):
            arr.setflags(write=False)

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def support(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.loadings[:, j])

    def orthogonality_error(self) -> float:
        """``max |V^T V - I|``."""
        G = self.loadings.T @ self.loadings
        return float(np.abs(G - np.eye(self.k)).max()) if self.k else 0.0

    def to_dict(self) -> dict:
        rows, cols = np.nonzero(self.loadings)
        return {
            "format_version": FORMAT_VERSION,
            "p": self.p,
            "k": self.k,
            "svd_method": self.svd_method,
            "partition": self.partition.to_dict(),
            "eigenvalues": self.eigenvalues.tolist(),
            "component_block": self.component_block.tolist(),
            "component_method": list(self.component_method),
            "column_means": self.column_means.tolist(),
            "col_labels": None if self.col_labels is None else list(self.col_labels),
            "loadings": [[int(r), int(c), float(self.loadings[r, c])] for r, c in zip(rows, cols)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IsPcaModel":
        if d.get("format_version") != FORMAT_VERSION:
            raise UsageError(f"unsupported model format version {d.get('format_version')!r}")
        p, k = int(d["p"]), int(d["k"])
        V = np.zeros((p, k))
        for r, c, val in d["loadings"]:
            V[int(r), int(c)] = float(val)
        labels = d.get("col_labels")
        return cls(
            loadings=V,
            eigenvalues=np.asarray(d["eigenvalues"], dtype=np.float64),
            component_block=np.asarray(d["component_block"], dtype=np.int64),
            component_method=tuple(d["component_method"]),
            partition=BlockPartition.from_dict(d["partition"]),
            svd_method=d["svd_method"],
            column_means=np.asarray(d["column_means"], dtype=np.float64),
            col_labels=None if labels is None else tuple(labels),
        )


def assemble_loadings(block_loadings: Sequence, p: int) -> np.ndarray:
    """Zero-pad per-block loadings into a p x k matrix.

    ``block_loadings`` is a sequence of ``(columns, V_i)`` with ``V_i`` of
    shape ``(len(columns), k_i)``. Output columns follow the input order, so
    ``V[perm]`` (rows in block order) is block diagonal.
    """
    shapes = [np.shape(Vi) for _, Vi in block_loadings]
    if any(len(sh) != 2 for sh in shapes):
        raise UsageError("block loadings must be 2-d arrays")
    V = np.zeros((p, sum(sh[1] for sh in shapes)))
    seen = np.zeros(p, dtype=bool)
    j = 0
    for cols, Vi in block_loadings:
        cols = np.asarray(cols, dtype=np.int64)
        Vi = np.asarray(Vi, dtype=np.float64)
        if Vi.ndim != 2 or Vi.shape[0] != cols.size:
            raise UsageError(f"block with {cols.size} columns got loadings of shape {Vi.shape}")
        if cols.size and (cols.min() < 0 or cols.max() >= p):
            raise UsageError("block column index out of range")
        if seen[cols].any():
            raise UsageError("blocks overlap")
        seen[cols] = True
        norms = np.linalg.norm(Vi, axis=0)
        if not np.allclose(norms, 1.0, rtol=0, atol=1e-8):
            raise UsageError("block loadings must have unit-norm columns")
        V[cols, j:j + Vi.shape[1]] = Vi
        j += Vi.shape[1]
    return V


def _block_method(method: str, p_i: int, n: int, cdm_ratio: float) -> str:
    if method == CDM and n >= 4 and p_i > cdm_ratio * n:
        return CDM
    return EXACT


def _rank_limit(method: str, n: int, p_i: int) -> int:
    return min(n // 2, p_i) if method == CDM else min(n, p_i)


def fit(X: DataMatrix, part: BlockPartition, method: str = EXACT, k: Optional[int] = None,
        policy: str = TOP_K, cdm_ratio: float = 1.0) -> IsPcaModel:
    """Fit IS-PCA on a centered matrix and a column partition.

    policy ``top-k`` keeps the k largest components over all blocks,
    ``per-block`` keeps up to k per block, ``full`` keeps every component each
    block's solver can produce. With ``method='cdm'`` a block uses the cross
    data matrix only when it has more than ``cdm_ratio * n`` columns.
    """
    _require_centered(X, "fit")
    if method not in METHODS:
        raise UsageError(f"unknown svd method {method!r}")
    if policy not in POLICIES:
        raise UsageError(f"unknown component policy {policy!r}")
    if policy != FULL and (k is None or k < 1):
        raise UsageError("k must be a positive integer")
    if part.p != X.p:
        raise UsageError(f"partition covers {part.p} columns, data has {X.p}")

    n = X.n
    pieces, eigs, owner, within, tags = [], [], [], [], []
    for bid, blk in enumerate(part.blocks):
        Xi = select_columns(X, blk)
        m = _block_method(method, len(blk), n, cdm_ratio)
        limit = _rank_limit(m, n, len(blk))
        ki = limit if policy == FULL else min(k, limit)
        try:
            est: SpectralEstimate = cdm_svd(Xi, ki) if m == CDM else exact_svd(Xi, ki)
        except IspcaError as exc:
            raise BlockFitError(bid, exc) from exc
        pieces.append((blk, np.asarray(est.loadings)))
        eigs.extend(est.eigenvalues.tolist())
        owner.extend([bid] * ki)
        within.extend(range(ki))
        tags.extend([m] * ki)

    V = assemble_loadings(pieces, X.p)
    eigs = np.asarray(eigs)
    owner = np.asarray(owner, dtype=np.int64)
    within = np.asarray(within, dtype=np.int64)
    order = np.lexsort((within, owner, -eigs))
    if policy == TOP_K:
        order = order[:k]
    means = X.means if X.means is not None else np.zeros(X.p)
    return IsPcaModel(
        loadings=np.ascontiguousarray(V[:, order]),
        eigenvalues=eigs[order],
        component_block=owner[order],
        component_method=tuple(tags[i] for i in order),
        partition=part,
        svd_method=method,
        column_means=np.array(means, dtype=np.float64),
        col_labels=X.col_labels,
    )


def scores(model: IsPcaModel, X: DataMatrix) -> np.ndarray:
    """Sparse principal components ``Z = X V`` with X centered by the training means."""
    if X.p != model.p:
        raise UsageError(f"model has p={model.p}, data has p={X.p}")
    if X.centered and (X.means is None or np.array_equal(X.means, model.column_means)):
        Xc = X.values
    else:
        raw = X.values if X.means is None else X.values + X.means
        Xc = raw - model.column_means
    return Xc @ model.loadings


def loading_correlations(model: IsPcaModel, dense: SpectralEstimate) -> np.ndarray:
    """``|corr(V_sparse[:, i], V_dense[:, j])|`` over the p loading entries."""
    A = np.asarray(model.loadings)
    B = np.asarray(dense.loadings)
    if A.shape[0] != B.shape[0]:
        raise UsageError("sparse and dense loadings differ in p")
    A = A - A.mean(axis=0)
    B = B - B.mean(axis=0)
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    if np.any(na == 0) or np.any(nb == 0):
        raise UsageError("correlation undefined for a constant loading vector")
    return np.abs((A / na).T @ (B / nb))
