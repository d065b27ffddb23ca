"""Weighted #DNF counting: exact oracle, KLM sampler, generator and a neural estimator."""
from .exact import ExactLimit, ExactLimitError, exact_wmc_enumeration, exact_wmc_inclusion_exclusion
from .formula import (
    DnfFormula,
    FormatError,
    clause_probability,
    evaluate,
    parse_formula,
    read_formula,
    serialize_formula,
    width_stats,
    write_formula,
)
from .klm import (
    GaussianLabel,
    KlmParams,
    KlmResult,
    ZeroHitsError,
    ZeroSumError,
    compute_trials,
    fit_gaussian_label,
    klm_estimate,
)

__version__ = "0.1.0"
