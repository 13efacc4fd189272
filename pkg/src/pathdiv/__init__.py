"""Loss probability and rate allocation for block FEC over parallel Gilbert-Elliot paths."""
from .channel import PathType, StatePath, erasures_at_epochs, packet_epochs, packet_transition_probs, \
    sample_state_path, steady_state
from .burst import ErasureProfile, build_profile, mean_bad_fraction, tilted_moments
from .asymptotics import (BracketEscape, InfeasibleCaps, RateFunction, TypeEnsemble, allocation_exponent,
                          ml_error_bounds, rate_u, single_path_pe, solve_lambda, theorem_ii_allocation,
                          waterfill_allocation)
from .engine import AllocationVector, Block, CapViolation, LossPmfTable, exact_pe, per_path_pmf, type_pmf
from .allocation import (AllocationResult, EnumerationLimitExceeded, baseline_best_path, baseline_equal,
                         asymptotic_rounded, dp_lowerbound, dp_suboptimal, exhaustive_optimal,
                         waterfill_rounded)
from .montecarlo import McReport, estimate_pe, estimate_pe_adaptive, fit_log_slope

__version__ = "0.1.0"

__all__ = [
    "PathType", "StatePath", "erasures_at_epochs", "packet_epochs", "packet_transition_probs",
    "sample_state_path", "steady_state",
    "ErasureProfile", "build_profile", "mean_bad_fraction", "tilted_moments",
    "BracketEscape", "InfeasibleCaps", "RateFunction", "TypeEnsemble", "allocation_exponent",
    "ml_error_bounds", "rate_u", "single_path_pe", "solve_lambda", "theorem_ii_allocation",
    "waterfill_allocation",
    "AllocationVector", "Block", "CapViolation", "LossPmfTable", "exact_pe", "per_path_pmf", "type_pmf",
    "AllocationResult", "EnumerationLimitExceeded", "baseline_best_path", "baseline_equal",
    "asymptotic_rounded", "dp_lowerbound", "dp_suboptimal", "exhaustive_optimal", "waterfill_rounded",
    "McReport", "estimate_pe", "estimate_pe_adaptive", "fit_log_slope",
]
