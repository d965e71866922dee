"""Blind separation of mixed sources driven by nonparametric autoregressive
dynamics, scored with the block Amari-index."""
from .errors import FaripaError
from .far import (KernelSpec, MixingSpec, estimate_innovations, fit_linear_ar, mix,
                  nw_regress, recursive_nw_regress, simulate_far)
from .harness import ExperimentConfig, RunReport, boxplot_stats, run_experiment
from .ica import center_whiten, fastica
from .isa import (assemble_separation, dependence_matrix, greedy_cluster, kcca_dependence,
                  ncut_cluster)
from .metrics import BlockStructure, amari_index, block_sums, is_block_permutation

__version__ = "0.1.0"
