"""Monte-Carlo comparison of CDM, IS-PCA variants and PMD on block compound-symmetric data.

Each block covariance is ``(1 - w) I + 2 w 1 1^T`` with ``w ~ U(lo, hi)``
drawn per replicate and block. Five approaches are scored against the
analytic leading eigenpair of every block:

``CDM``           cross-data-matrix SVD of the whole matrix, b components
``OracleIsPca``   IS-PCA on the true partition
``FalseNegIsPca`` IS-PCA on the true blocks merged in adjacent pairs (b/2 blocks)
``PmdIsPca``      IS-PCA on the sparse-split partition, leading component only
``Pmd``           rank-1 PMD on the whole matrix, l1 bound chosen by cross-validation

All IS-PCA arms use CDM within blocks. Estimated components are paired with
blocks greedily by absolute cosine.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import blocks as bd
from .blocks import BlockPartition, DetectorConfig
from .core import DataMatrix, center_columns
from .errors import IspcaError, UsageError
from .model import PER_BLOCK, TOP_K, fit
from .spectra import CDM

APPROACHES = ("CDM", "OracleIsPca", "FalseNegIsPca", "PmdIsPca", "Pmd")

PROFILES = {
    "desk": dict(n=50, p=500, b=10, replicates=20),
    "paper": dict(n=100, p=10_000, b=10, replicates=100),
}


@dataclass
class SimConfig:
    n: int = 50
    p: int = 500
    b: int = 10
    omega_range: tuple = (0.1, 0.3)
    replicates: int = 20
    seed: int = 20240601
    approaches: tuple = APPROACHES
    scale_profile: str = "desk"
    detector: DetectorConfig = field(default_factory=DetectorConfig)

    def __post_init__(self):
        self.omega_range = tuple(float(x) for x in self.omega_range)
        self.approaches = tuple(self.approaches)
        if isinstance(self.detector, dict):
            self.detector = DetectorConfig.from_dict(self.detector)
        if self.b < 1 or self.p % self.b:
            raise UsageError(f"p={self.p} is not divisible into b={self.b} equal blocks")
        lo, hi = self.omega_range
        if not 0 <= lo <= hi < 0.5:
            raise UsageError("omega_range must satisfy 0 <= lo <= hi < 0.5")
        if self.replicates < 1:
            raise UsageError("replicates must be at least 1")
        if self.n < 4:
            raise UsageError("n must be at least 4 for the cross data matrix")
        unknown = set(self.approaches) - set(APPROACHES)
        if unknown:
            raise UsageError(f"unknown approaches {sorted(unknown)}")
        if "FalseNegIsPca" in self.approaches and self.b % 2:
            raise UsageError("FalseNegIsPca needs an even number of blocks")
        if self.seed < 0:
            raise UsageError("seed must be nonnegative")

    @classmethod
    def from_profile(cls, profile: str = "desk", **overrides) -> "SimConfig":
        if profile not in PROFILES:
            raise UsageError(f"unknown profile {profile!r}")
        kw = dict(PROFILES[profile], scale_profile=profile)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["omega_range"] = list(self.omega_range)
        d["approaches"] = list(self.approaches)
        return d


@dataclass(frozen=True)
class BlockTruth:
    block: int
    columns: np.ndarray
    omega: float
    eigenvalues: np.ndarray
    leading_vector: np.ndarray


def population_truth(p_i: int, omega: float):
    """Eigenvalues (descending) and leading eigenvector of ``(1-w) I + 2 w 1 1^T``."""
    if p_i < 1:
        raise UsageError("block size must be positive")
    ev = np.full(p_i, 1.0 - omega)
    ev[0] = (1.0 - omega) + 2.0 * omega * p_i
    return ev, np.full(p_i, 1.0 / math.sqrt(p_i))


def block_rng(seed: int, rep: int, block: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, replicate, block)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep, block])))


def sample_block_gaussian(cfg: SimConfig, rep: int, omegas=None):
    """One replicate: centered data matrix and the truth for every block.

    Rows of block i are ``sqrt(1-w) z + sqrt(2w) s 1`` with z a standard normal
    vector and s a standard normal scalar, which has covariance
    ``(1-w) I + 2 w 1 1^T`` without forming a p x p factor.
    """
    p_i = cfg.p // cfg.b
    lo, hi = cfg.omega_range
    cols, truths = [], []
    for i in range(cfg.b):
        rng = block_rng(cfg.seed, rep, i)
        w = rng.uniform(lo, hi) if omegas is None else float(omegas[i])
        z = rng.standard_normal((cfg.n, p_i))
        s = rng.standard_normal((cfg.n, 1))
        cols.append(math.sqrt(1.0 - w) * z + math.sqrt(2.0 * w) * s)
        ev, v = population_truth(p_i, w)
        truths.append(BlockTruth(i, np.arange(i * p_i, (i + 1) * p_i), w, ev, v))
    X = center_columns(DataMatrix(np.hstack(cols)))
    return X, truths


def greedy_match(V: np.ndarray, T: np.ndarray) -> list:
    """Pair columns of V with columns of T by descending ``|cos|``; returns (j, i) pairs."""
    C = np.abs(V.T @ T)
    C = C / np.outer(np.linalg.norm(V, axis=0), np.linalg.norm(T, axis=0))
    pairs = []
    C = C.copy()
    for _ in range(min(C.shape)):
        j, i = np.unravel_index(np.argmax(C), C.shape)
        pairs.append((int(j), int(i)))
        C[j, :] = -1.0
        C[:, i] = -1.0
    return pairs


def _truth_matrix(truths, p):
    T = np.zeros((p, len(truths)))
    for t in truths:
        T[t.columns, t.block] = t.leading_vector
    return T


def _rows(rep, approach, V, eigs, truths, T):
    out = []
    for j, i in sorted(greedy_match(V, T), key=lambda ji: ji[1]):
        lam = truths[i].eigenvalues[0]
        cos = float(min(1.0, abs(V[:, j] @ T[:, i]) / np.linalg.norm(V[:, j])))
        out.append({"replicate": rep, "approach": approach, "block": i,
                    "omega": truths[i].omega, "cosine": cos,
                    "ratio": float(eigs[j]) / lam})
    return out


def run_replicate(cfg: SimConfig, rep: int):
    """All requested approaches on one replicate; returns (rows, failures)."""
    X, truths = sample_block_gaussian(cfg, rep)
    T = _truth_matrix(truths, cfg.p)
    oracle = BlockPartition(cfg.p, tuple(tuple(t.columns.tolist()) for t in truths))
    rows, failures = [], []
    for approach in cfg.approaches:
        try:
            if approach == "CDM":
                m = fit(X, BlockPartition(cfg.p, (tuple(range(cfg.p)),)), CDM,
                        k=min(cfg.b, cfg.n // 2), policy=PER_BLOCK, cdm_ratio=0.0)
                V, eigs = m.loadings, m.eigenvalues
            elif approach == "OracleIsPca":
                m = fit(X, oracle, CDM, k=1, policy=PER_BLOCK, cdm_ratio=0.0)
                V, eigs = m.loadings, m.eigenvalues
            elif approach == "FalseNegIsPca":
                m = fit(X, bd.merge_pairs(oracle), CDM, k=2, policy=PER_BLOCK, cdm_ratio=0.0)
                V, eigs = m.loadings, m.eigenvalues
            elif approach == "PmdIsPca":
                part = bd.detect_sparse_split(X, cfg.detector)
                m = fit(X, part, CDM, k=1, policy=TOP_K, cdm_ratio=0.0)
                V, eigs = m.loadings, m.eigenvalues
            else:
                A = np.ascontiguousarray(X.values)
                c, _ = bd.cv_penalty(A, seed=cfg.seed + rep)
                res = bd.pmd_rank1(A, c, cfg.detector.max_iter, cfg.detector.tol)
                V = res.v[:, None]
                eigs = np.array([res.d ** 2 / cfg.n])
            rows.extend(_rows(rep, approach, V, eigs, truths, T))
        except (IspcaError, np.linalg.LinAlgError) as exc:
            failures.append({"replicate": rep, "approach": approach,
                             "error": f"{type(exc).__name__}: {exc}"})
    return rows, failures


def _summary(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"count": 0}
    q25, q50, q75 = np.percentile(v, [25, 50, 75])
    return {"count": int(v.size), "mean": float(v.mean()),
            "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
            "q25": float(q25), "median": float(q50), "q75": float(q75)}


@dataclass
class SimResult:
    config: SimConfig
    rows: list
    failures: list

    def aggregates(self) -> dict:
        out = {}
        for a in self.config.approaches:
            sel = [r for r in self.rows if r["approach"] == a]
            out[a] = {"cosine": _summary([r["cosine"] for r in sel]),
                      "ratio": _summary([r["ratio"] for r in sel])}
        return out

    def mean(self, approach: str, metric: str) -> float:
        return self.aggregates()[approach][metric]["mean"]

    def summary(self) -> dict:
        return {"config": self.config.to_dict(), "aggregates": self.aggregates(),
                "n_rows": len(self.rows), "failures": self.failures}


def thread_count(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("ISPCA_THREADS", "1") or 1)
    return max(1, int(threads))


def run_simulation(cfg: SimConfig, threads: Optional[int] = None) -> SimResult:
    """Run every replicate; the result does not depend on ``threads``."""
    reps = range(cfg.replicates)
    nthreads = thread_count(threads)
    if nthreads == 1:
        parts = [run_replicate(cfg, r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=nthreads) as pool:
            parts = list(pool.map(lambda r: run_replicate(cfg, r), reps))
    rows = [row for rr, _ in parts for row in rr]
    failures = [f for _, ff in parts for f in ff]
    return SimResult(cfg, rows, failures)
