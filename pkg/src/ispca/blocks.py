"""Detecting uncorrelated column blocks of a data matrix.

Three strategies produce a :class:`BlockPartition`:

* ``oracle``: a user-supplied partition, validated;
* ``threshold``: connected components of the graph ``|corr| > threshold``;
* ``sparse-split``: recursive splitting on the support of a sparse leading
  right singular vector (penalized matrix decomposition, rank 1), with the
  sparsity level chosen by a high-dimensional BIC.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .core import DataMatrix, _require_centered, check_columns
from .errors import ConvergenceWarning, DataError, UsageError

ORACLE = "oracle"
THRESHOLD = "threshold"
SPARSE_SPLIT = "sparse-split"
STRATEGIES = (ORACLE, THRESHOLD, SPARSE_SPLIT)


@dataclass(frozen=True)
class BlockPartition:
    """Disjoint cover of columns ``0..p-1`` by nonempty blocks.

    ``permutation`` lists block 0's columns, then block 1's, and so on, so
    ``X[:, permutation]`` is block-contiguous.
    """

    p: int
    blocks: tuple

    def __post_init__(self):
        if len(self.blocks) == 0:
            raise UsageError("a partition needs at least one block")
        blocks = tuple(tuple(int(i) for i in check_columns(b, self.p)) for b in self.blocks)
        seen = np.zeros(self.p, dtype=bool)
        for b in blocks:
            if seen[list(b)].any():
                dup = next(i for i in b if seen[i])
                raise UsageError(f"column {dup} appears in more than one block")
            seen[list(b)] = True
        if not seen.all():
            raise UsageError(f"columns {np.flatnonzero(~seen).tolist()} are in no block")
        object.__setattr__(self, "blocks", blocks)

    @property
    def b(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> list:
        return [len(blk) for blk in self.blocks]

    @property
    def permutation(self) -> np.ndarray:
        return np.concatenate([np.asarray(blk, dtype=np.int64) for blk in self.blocks])

    def labels(self) -> np.ndarray:
        """Block id of every column."""
        out = np.empty(self.p, dtype=np.int64)
        for i, blk in enumerate(self.blocks):
            out[list(blk)] = i
        return out

    def canonical(self) -> "BlockPartition":
        """Same partition with blocks ordered by their smallest member."""
        return BlockPartition(self.p, tuple(sorted(self.blocks, key=lambda blk: blk[0])))

    def same_as(self, other: "BlockPartition") -> bool:
        """Equality of the underlying set partitions, ignoring block order."""
        return self.p == other.p and set(self.blocks) == set(other.blocks)

    def to_dict(self) -> dict:
        return {"p": self.p, "blocks": [list(b) for b in self.blocks],
                "permutation": self.permutation.tolist()}

    @classmethod
    def from_dict(cls, d) -> "BlockPartition":
        if isinstance(d, list):
            blocks = d
            p = sum(len(b) for b in blocks)
        else:
            blocks = d["blocks"]
            p = d.get("p", sum(len(b) for b in blocks))
        return cls(int(p), tuple(tuple(b) for b in blocks))


def from_labels(labels: Sequence[int]) -> BlockPartition:
    """Partition from a per-column label vector, blocks ordered by smallest member."""
    labels = np.asarray(labels)
    groups = {}
    for j, lab in enumerate(labels.tolist()):
        groups.setdefault(lab, []).append(j)
    blocks = sorted(groups.values(), key=lambda g: g[0])
    return BlockPartition(len(labels), tuple(tuple(g) for g in blocks))


@dataclass
class DetectorConfig:
    strategy: str = SPARSE_SPLIT
    threshold: Optional[float] = None
    penalty_grid: Optional[Sequence[float]] = None
    n_grid: int = 20
    hbic_scale: float = 3.0
    max_iter: int = 200
    tol: float = 1e-8
    standardize: bool = True
    refit: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown detector strategy {self.strategy!r}")
        if self.threshold is not None and not 0 < self.threshold < 1:
            raise UsageError("threshold must lie in (0, 1)")
        if self.penalty_grid is not None:
            g = np.asarray(self.penalty_grid, dtype=np.float64)
            if g.size == 0:
                raise UsageError("penalty grid is empty")
            if np.any(np.diff(g) <= 0) or g[0] <= 0:
                raise UsageError("penalty grid must be positive and strictly ascending")
        if self.hbic_scale <= 0:
            raise UsageError("hbic_scale must be positive")
        if self.n_grid < 1:
            raise UsageError("n_grid must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise UsageError(f"unknown detector settings: {sorted(extra)}")
        return cls(**d)


# --------------------------------------------------------------------- oracle

def detect_oracle(p: int, blocks) -> BlockPartition:
    return BlockPartition(p, tuple(tuple(b) for b in blocks))


def merge_pairs(part: BlockPartition) -> BlockPartition:
    """Merge blocks (0,1), (2,3), ... in listed order, halving the block count."""
    if part.b % 2:
        raise UsageError(f"cannot merge an odd number of blocks ({part.b})")
    merged = tuple(tuple(sorted(part.blocks[i] + part.blocks[i + 1]))
                   for i in range(0, part.b, 2))
    return BlockPartition(part.p, merged)


# -------------------------------------------------------------- threshold graph

def default_threshold(n: int, p: int) -> float:
    return min(0.999, 2.0 * math.sqrt(math.log(max(p, 2)) / n))


def correlation(X: DataMatrix):
    """Sample correlation of the non-constant columns and the indices of constant ones."""
    _require_centered(X, "correlation")
    sd = np.sqrt(np.einsum("ij,ij->j", X.values, X.values))
    zero = np.flatnonzero(sd == 0)
    live = np.flatnonzero(sd > 0)
    Z = X.values[:, live] / sd[live]
    return Z.T @ Z, live, zero


def detect_threshold_graph(X: DataMatrix, threshold: Optional[float] = None) -> BlockPartition:
    """Connected components of the graph with an edge wherever ``|r_ij| > threshold``."""
    if threshold is None:
        threshold = default_threshold(X.n, X.p)
    if not 0 < threshold < 1:
        raise UsageError("threshold must lie in (0, 1)")
    R, live, zero = correlation(X)
    if zero.size:
        warnings.warn(f"zero-variance columns {zero.tolist()} placed in singleton blocks",
                      stacklevel=2)
    labels = np.empty(X.p, dtype=np.int64)
    if live.size:
        roots = _kernels.components(np.ascontiguousarray(np.abs(R)), float(threshold))
        labels[live] = live[roots]
    labels[zero] = zero
    return from_labels(labels)


# ------------------------------------------------------------------------ PMD

@dataclass(frozen=True)
class PmdResult:
    u: np.ndarray
    v: np.ndarray
    d: float
    c: float
    n_iter: int
    converged: bool
    history: np.ndarray = field(repr=False)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.v)


def _leading_right_vector(A: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(A, full_matrices=False)
    return vt[0].copy()


def pmd_rank1(X, c: float, max_iter: int = 200, tol: float = 1e-8,
              v_start: Optional[np.ndarray] = None, multi_start: bool = True) -> PmdResult:
    """Rank-1 penalized matrix decomposition with an l1 bound on v.

    Maximizes ``u^T X v`` subject to ``||u||_2 <= 1``, ``||v||_2 <= 1`` and
    ``||v||_1 <= c`` by alternating ``u = Xv / ||Xv||`` with a soft-thresholded
    ``v``. Two deterministic starts are run (the leading right singular
    vector, or ``v_start`` if given, and the coordinate vector of the
    largest-norm column); the one reaching the larger objective is returned.
    ``multi_start=False`` runs the first start only.
    """
    A = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    if isinstance(X, DataMatrix):
        _require_centered(X, "pmd_rank1")
    A = np.ascontiguousarray(A, dtype=np.float64)
    p = A.shape[1]
    if not 1.0 - 1e-12 <= c <= math.sqrt(p) + 1e-12:
        raise UsageError(f"c={c} outside [1, sqrt(p)={math.sqrt(p):.6g}]")
    col_norms = np.einsum("ij,ij->j", A, A)
    if not col_norms.any():
        raise DataError("pmd_rank1 on an all-zero matrix")

    starts = [v_start if v_start is not None else _leading_right_vector(A)]
    if multi_start:
        e = np.zeros(p)
        e[int(np.argmax(col_norms))] = 1.0
        starts.append(e)
    best = _pmd_fit(A, float(c), starts, int(max_iter), float(tol))
    if not best.converged:
        warnings.warn(f"pmd_rank1 (c={c:.4g}) hit max_iter={max_iter}; returning last iterate",
                      ConvergenceWarning, stacklevel=2)
    return best


def _pmd_fit(A, c, starts, max_iter, tol) -> PmdResult:
    # unchecked core of pmd_rank1; A is C-contiguous float64
    best = None
    for v0 in starts:
        v0, _ = _kernels.l1_project(np.ascontiguousarray(v0, dtype=np.float64), c)
        u, v, d, it, ok, hist = _kernels.pmd_loop(A, v0, c, max_iter, tol)
        if best is None or d > best.d * (1 + 1e-12):
            best = PmdResult(u, v, float(d), c, int(it), bool(ok), hist)
    return best


def cv_penalty(X, grid=None, n_folds: int = 5, seed: int = 0, max_iter: int = 200,
               tol: float = 1e-8):
    """Choose the l1 bound of :func:`pmd_rank1` by entry-wise cross-validation.

    Every matrix entry is assigned to one of ``n_folds`` folds. For each fold
    the held-out entries are set to zero (the column mean of centered data),
    the rank-1 fit ``d u v^T`` is computed for every bound in ``grid`` and its
    squared error on the held-out entries is accumulated. Returns
    ``(best_c, errors)``; ties go to the smaller bound.
    """
    A = X.values if isinstance(X, DataMatrix) else np.asarray(X, dtype=np.float64)
    n, p = A.shape
    if grid is None:
        grid = np.linspace(1.0, math.sqrt(p), 10)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise UsageError("penalty grid is empty")
    if n_folds < 2:
        raise UsageError("n_folds must be at least 2")
    fold = np.random.default_rng(seed).integers(0, n_folds, size=(n, p))
    errors = np.zeros(grid.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for f in range(n_folds):
            held = fold == f
            if not held.any():
                continue
            Af = np.ascontiguousarray(np.where(held, 0.0, A))
            if not Af.any():
                continue
            for i, c in enumerate(grid):
                res = pmd_rank1(Af, float(c), max_iter, tol)
                resid = A - res.d * np.outer(res.u, res.v)
                errors[i] += float(np.sum(resid[held] ** 2))
    return float(grid[int(np.argmin(errors))]), errors


# ---------------------------------------------------------------- sparse split

def penalty_grid(p: int, n_grid: int = 20) -> np.ndarray:
    if p == 1:
        return np.array([1.0])
    return np.geomspace(1.0, math.sqrt(p), n_grid)


def hbic_penalty(n: int, p: int, scale: float) -> float:
    """Per-nonzero penalty ``scale * log(log n) * log p``."""
    return scale * math.log(math.log(n)) * math.log(max(p, 2))


def hbic(A: np.ndarray, v: np.ndarray, a_np: float, total_ss: Optional[float] = None,
         refit: bool = True) -> float:
    """High-dimensional BIC of the rank-1 fit ``A v v^T``.

    ``N log(RSS / N) + ||v||_0 a_np`` with ``N = n p`` matrix entries. With
    ``refit`` the loading is replaced by the leading right singular vector of
    the columns in ``supp(v)`` before computing RSS, so soft-threshold
    shrinkage does not bias the comparison between supports.
    """
    n, p = A.shape
    N = n * p
    if total_ss is None:
        total_ss = float(np.einsum("ij,ij->", A, A))
    supp = np.flatnonzero(v)
    if refit:
        explained = np.linalg.norm(A[:, supp], 2) ** 2 if supp.size else 0.0
        rss = total_ss - explained
    else:
        xv = A @ v
        # ||A - A v v^T||^2 = ||A||^2 - 2 ||Av||^2 + ||Av||^2 ||v||^2
        rss = total_ss - 2.0 * (xv @ xv) + (xv @ xv) * (v @ v)
    rss = max(rss, total_ss * 1e-15, np.finfo(float).tiny)
    return N * math.log(rss / N) + supp.size * a_np


def _breakpoint_penalties(a: np.ndarray, q_lo: int, q_hi: int) -> list:
    """l1 bounds at which soft-thresholding ``a`` keeps exactly q entries, q_lo <= q <= q_hi."""
    mags = np.sort(np.abs(a))[::-1]
    mags = np.append(mags, 0.0)
    out = []
    for q in range(max(q_lo, 1), min(q_hi, a.size) + 1):
        if mags[q - 1] <= mags[q]:
            continue
        delta = 0.5 * (mags[q - 1] + mags[q])
        s = np.maximum(mags[:q] - delta, 0.0)
        out.append(float(s.sum() / np.sqrt(s @ s)))
    return out


def best_sparse_vector(A: np.ndarray, cfg: DetectorConfig):
    """HBIC-minimal PMD vector over the penalty grid for one column set.

    After the grid pass, the bracket around the minimum is refined at the
    breakpoints of the soft-threshold path of the best solution, so every
    support size between the neighbouring grid solutions gets a candidate.
    Returns ``(PmdResult, hbic_value)``. Ties go to the smaller support, then
    the earlier candidate.
    """
    n, p = A.shape
    grid = (penalty_grid(p, cfg.n_grid) if cfg.penalty_grid is None
            else np.asarray(cfg.penalty_grid, dtype=np.float64))
    grid = grid[grid <= math.sqrt(p) + 1e-12]
    if grid.size == 0:
        grid = np.array([math.sqrt(p)])
    a_np = hbic_penalty(n, p, cfg.hbic_scale)
    total_ss = float(np.einsum("ij,ij->", A, A))
    v_svd = _leading_right_vector(A)
    e = np.zeros(p)
    e[int(np.argmax(np.einsum("ij,ij->j", A, A)))] = 1.0
    results = []
    scored = {}  # the refit score depends on the support only

    def run(c, starts):
        res = _pmd_fit(A, float(c), starts, cfg.max_iter, cfg.tol)
        tag = res.v.astype(bool).tobytes() if cfg.refit else None
        if tag is None or tag not in scored:
            h = hbic(A, res.v, a_np, total_ss, cfg.refit)
            if tag is not None:
                scored[tag] = h
        else:
            h = scored[tag]
        results.append(((h, np.count_nonzero(res.v)), res))
        return res

    # follow the path from the loosest bound down, warm-starting each point
    # from its neighbour; the coordinate start only matters near c = 1
    v_prev = v_svd
    for c in grid[::-1]:
        v_prev = run(c, [v_prev, e] if c < 2.0 else [v_prev]).v
    results.reverse()
    results = [((h, q, i), res) for i, ((h, q), res) in enumerate(results)]
    gi = min(range(len(results)), key=lambda i: results[i][0])
    best = results[gi][1]
    sizes = [r.support.size for _, r in results]
    q_lo = sizes[gi - 1] if gi > 0 else 1
    q_hi = sizes[gi + 1] if gi + 1 < len(sizes) else p
    lo, hi = min(q_lo, q_hi, sizes[gi]), max(q_lo, q_hi, sizes[gi])
    base = len(results)
    for c in _breakpoint_penalties(A.T @ best.u, lo, hi):
        if 1.0 <= c <= math.sqrt(p):
            run(c, [best.v])
    results[base:] = [((h, q, base + i), res) for i, ((h, q), res) in enumerate(results[base:])]
    key, res = min(results, key=lambda kr: kr[0])
    return res, key[0]


def detect_sparse_split(X: DataMatrix, cfg: Optional[DetectorConfig] = None) -> BlockPartition:
    """Recursively split columns on the support of the HBIC-best sparse vector."""
    _require_centered(X, "detect_sparse_split")
    cfg = cfg or DetectorConfig()
    if cfg.penalty_grid is not None and len(cfg.penalty_grid) == 0:
        raise UsageError("penalty grid is empty")
    A = X.values
    col_ss = np.einsum("ij,ij->j", A, A)
    zero = np.flatnonzero(col_ss == 0)
    live = np.flatnonzero(col_ss > 0)
    if cfg.standardize and live.size:
        A = A.copy()
        A[:, live] /= np.sqrt(col_ss[live] / X.n)
    final = [[int(j)] for j in zero]
    stack = [live] if live.size else []
    while stack:
        cols = stack.pop()
        if cols.size == 1:
            final.append(cols.tolist())
            continue
        sub = np.ascontiguousarray(A[:, cols])
        res, _ = best_sparse_vector(sub, cfg)
        supp = np.flatnonzero(res.v)
        if 0 < supp.size < cols.size:
            rest = np.setdiff1d(np.arange(cols.size), supp, assume_unique=True)
            stack.append(cols[rest])
            stack.append(cols[supp])
        else:
            final.append(cols.tolist())
    return BlockPartition(X.p, tuple(tuple(sorted(b)) for b in final)).canonical()


def detect(X: DataMatrix, cfg: DetectorConfig, blocks=None) -> BlockPartition:
    if cfg.strategy == ORACLE:
        if blocks is None:
            raise UsageError("the oracle detector needs an explicit partition")
        return detect_oracle(X.p, blocks)
    if cfg.strategy == THRESHOLD:
        return detect_threshold_graph(X, cfg.threshold)
    return detect_sparse_split(X, cfg)
