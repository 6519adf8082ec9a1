"""Inherently sparse PCA for data with block-diagonal covariance."""
from .blocks import (BlockPartition, DetectorConfig, PmdResult, best_sparse_vector, cv_penalty,
                     detect, detect_oracle, detect_sparse_split, detect_threshold_graph,
                     from_labels, merge_pairs, pmd_rank1)
from .core import (DataMatrix, apply_permutation, as_data_matrix, center_columns,
                   column_variances, covariance, inverse_permutation, select_columns)
from .errors import ConvergenceWarning, DataError, IspcaError, NumericalError, UsageError
from .model import IsPcaModel, assemble_loadings, fit, loading_correlations, scores
from .pla import VarianceReport, explained_variance_eigen, explained_variance_trace, select_principal
from .simulation import SimConfig, SimResult, population_truth, run_simulation, sample_block_gaussian
from .spectra import (SpectralEstimate, cdm_svd, cosine_similarity, eigenvalue_ratio, exact_svd,
                      spectral_norm, weyl_gap_check)

__version__ = "0.1.0"
