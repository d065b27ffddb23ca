"""Karp-Luby-Madras estimation of weighted DNF counts and Gaussian labels."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend, kernels
from .formula import Clause, DnfFormula, check_weights, clause_probabilities


class KlmError(ArithmeticError):
    pass


class ZeroSumError(KlmError):
    """Every clause has probability 0, so the exact count is 0."""


class ZeroHitsError(KlmError):
    """No trial hit; the estimate would be infinite."""


class NonPositiveEstimateError(KlmError):
    pass


@dataclass(frozen=True)
class KlmParams:
    epsilon: float = 0.1
    delta: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class KlmResult:
    estimate: float
    trials: int
    hits: int
    sum_clause_probs: float


@dataclass(frozen=True)
class GaussianLabel:
    mean: float
    sigma: float


def compute_trials(epsilon: float, delta: float, m: int) -> int:
    """Number of KLM trials, ``ceil(8 (1+eps) m ln(2/delta) / eps^2)``."""
    KlmParams(epsilon, delta)
    if m < 1:
        raise ValueError("m must be at least 1")
    return math.ceil(8.0 * (1.0 + epsilon) * m * math.log(2.0 / delta) / epsilon**2)


# Acklam's rational approximation of the standard normal quantile
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF.

    Acklam's approximation (relative error ~1e-9) followed by one Halley step
    against ``erfc``, which brings it to near machine precision.
    """
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise ValueError("p must lie in [0, 1]")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def stream_keys(seed: int) -> tuple[np.uint64, np.uint64]:
    """Keys of the sample stream and the trial stream for one KLM run."""
    state = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).generate_state(2, np.uint64)
    return np.uint64(state[0]), np.uint64(state[1])


def sample_satisfying_assignment(clause: Clause, probs, rng: np.random.Generator) -> np.ndarray:
    """Draw an assignment from the weight distribution conditioned on ``clause``."""
    probs = np.asarray(probs, dtype=np.float64)
    a = (rng.random(probs.shape[0]) < probs).astype(np.int8)
    for lit in clause:
        a[abs(lit) - 1] = 1 if lit > 0 else 0
    return a


def klm_estimate(
    f: DnfFormula, probs, params: KlmParams = KlmParams(), backend: str | None = None
) -> KlmResult:
    """Run the KLM coverage loop.

    A sample is drawn by picking clause ``C_i`` with probability
    ``p(C_i) / sum_j p(C_j)`` and completing it from the weights.  Each trial
    checks the sample against a uniformly chosen clause; a hit increments the
    counter and discards the sample.
    """
    if f.m == 0:
        raise ValueError("KLM needs at least one clause")
    probs = check_weights(probs, f.n)
    cp = clause_probabilities(f, probs)
    cum = np.cumsum(cp)
    total = float(cum[-1])
    if total <= 0.0:
        raise ZeroSumError("all clause probabilities are zero")
    trials = compute_trials(params.epsilon, params.delta, f.m)
    key_s, key_t = stream_keys(params.seed)
    offsets, vars0, signs = f.packed
    loop = kernels.klm_loop_numba if _backend.resolve(backend) == "numba" else kernels.klm_loop_numpy
    hits = int(loop(offsets, vars0, signs, probs, cum, trials, key_s, key_t))
    if hits == 0:
        raise ZeroHitsError(f"no hits in {trials} trials")
    estimate = trials * total / (f.m * hits)
    return KlmResult(estimate, trials, hits, total)


def fit_gaussian_label(result: KlmResult, params: KlmParams) -> GaussianLabel:
    """Gaussian over ``log mu`` matching the KLM bound ``log(1+eps)`` at confidence ``1-delta``."""
    if not result.estimate > 0:
        raise NonPositiveEstimateError("estimate must be positive to take its log")
    return GaussianLabel(math.log(result.estimate), label_sigma(params.epsilon, params.delta))


def label_sigma(epsilon: float, delta: float) -> float:
    return math.log1p(epsilon) / norm_ppf(1.0 - delta / 2.0)
