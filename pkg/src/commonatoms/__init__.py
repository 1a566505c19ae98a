"""Nested Bayesian nonparametric clustering with a shared atom sequence.

Two exact-target MCMC samplers (a nested slice sampler and a truncated
blocked Gibbs sampler) for two-layer clustering of nested data: units into
distributional clusters, observations into observational clusters on one
common set of atoms.  Continuous data use a Gaussian kernel; count data use
a rounded-Gaussian kernel with optional library-size scaling.
"""

from .draws import DrawStore, load_chains, merge_chains
from .gibbs_sampler import (GibbsConfig, GibbsSampler, TruncationLevels,
                            run_gibbs_chain)
from .model import (DEFAULT_GRID, ConcentrationSetting, Dataset,
                    Hyperparameters, NumericFailure, RoundingGrid,
                    SamplerState, ValidationError, VerificationFailure,
                    dcam_cell_logprob, dcam_cell_prob, slice_envelope,
                    validate_dataset)
from .prior import (correlation_same_set, covariance_sets, mc_verify_prior,
                    prob_equal_distributions, prob_tie_observations,
                    truncation_bound_mixture, truncation_bound_single)
from .rng import (RngStream, draw_beta, draw_categorical_log, draw_gem,
                  draw_nig, draw_truncated_normal)
from .scenarios import (gen_scenario1, gen_scenario2, gen_scenario3,
                        load_abundance_table, read_dataset, read_truth,
                        write_dataset, write_truth)
from .slice_sampler import SliceConfig, SliceSampler, run_chain, slice_level
from .summaries import (PartitionEstimate, abundance_classes, ari,
                        coclustering, crf, minimize_expected_vi, nfd, pcm,
                        vi)

__version__ = "0.1.0"

__all__ = [
    "ConcentrationSetting", "Dataset", "DrawStore", "DEFAULT_GRID",
    "GibbsConfig", "GibbsSampler", "Hyperparameters", "NumericFailure",
    "PartitionEstimate", "RngStream", "RoundingGrid", "SamplerState",
    "SliceConfig", "SliceSampler", "TruncationLevels", "ValidationError",
    "VerificationFailure", "abundance_classes", "ari", "coclustering",
    "correlation_same_set", "covariance_sets", "crf", "dcam_cell_logprob",
    "dcam_cell_prob", "draw_beta", "draw_categorical_log", "draw_gem",
    "draw_nig", "draw_truncated_normal", "gen_scenario1", "gen_scenario2",
    "gen_scenario3", "load_abundance_table", "load_chains", "mc_verify_prior",
    "merge_chains", "minimize_expected_vi", "nfd", "pcm",
    "prob_equal_distributions", "prob_tie_observations", "read_dataset",
    "read_truth", "run_chain", "run_gibbs_chain", "slice_envelope",
    "slice_level", "validate_dataset", "vi", "write_dataset", "write_truth",
]
