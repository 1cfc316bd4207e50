"""icetree: consolidate base clusterings into one interpretable decision tree.

Each split ``feature <= value`` is chosen by its summed chi-squared
association with the base partitions; the tree grows by expanding the leaf
whose best split has the smallest p-value until ``k`` leaves exist.
"""
from .bases import EnsembleSpec, generate_ensemble, kmeans, standardize
from .builder import BuildConfig, build_tree, expansion_trace
from .errors import ContractError, IceError, InputError
from .metrics import MetricsReport, depth_metrics, evaluate, nmi, pairwise_f1, purity
from .model import (CandidateSplit, Dataset, Ensemble, NodeSubset, Tree, apply_split,
                    assign_clusters, distinct_values)
from .split import SearchOutcome, optimal_split
from .stats import aggregate_score, build_tables, chi_sq_log_sf, chi_squared_stat, shift_sample

__version__ = "0.1.0"
