"""
Plan - Closed-form annotation budgets for a relative precision target
Part of recallaudit pipeline

A target "within r at confidence c" fixes the required standard error
SE_req = r·p/z(c); each planner solves its estimator's variance for n.
All sizes are rounded up so the target is met, never approached.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError, UndefinedTargetError
from .estimation import Stratification, critical_value

logger = logging.getLogger(__name__)

# relative precision columns of the random-sampling table
DEFAULT_TARGETS = (0.20, 0.10, 0.05)
DEFAULT_PREVALENCES = (0.1, 0.059, 0.01, 0.001)


@dataclass(frozen=True)
class PrecisionTarget:
    """Report p ± r·p with the given confidence"""
    relative_halfwidth: float = 0.20
    confidence: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.relative_halfwidth < 1.0:
            raise InvalidInputError(
                f"relative half-width must lie in (0, 1), got {self.relative_halfwidth}"
            )
        if not 0.0 < self.confidence < 1.0:
            raise InvalidInputError(f"confidence must lie in (0, 1), got {self.confidence}")

    @property
    def z(self) -> float:
        return critical_value(self.confidence)

    @property
    def cv_required(self) -> float:
        """Largest coefficient of variation that meets the target"""
        return self.relative_halfwidth / self.z


def required_se(p: float, target: PrecisionTarget) -> float:
    """SE_req = r·p / z(confidence)"""
    if p <= 0.0:
        raise InvalidInputError(f"prevalence must be positive, got {p}")
    return target.relative_halfwidth * p / target.z


def _ceil(value: float) -> int:
    # guard against 864.0000000000001-style overshoot from the float pipeline
    rounded = round(value)
    if abs(value - rounded) < 1e-9 * max(1.0, abs(value)):
        return int(rounded)
    return int(math.ceil(value))


def samples_needed_random(p: float, target: PrecisionTarget) -> int:
    """n = p(1-p)/SE_req², rounded up"""
    if not 0.0 < p < 1.0:
        raise InvalidInputError(f"prevalence must lie strictly in (0, 1), got {p}")
    se = required_se(p, target)
    return _ceil(p * (1.0 - p) / se ** 2)


def _stratified_inputs(strat: Stratification,
                       prevalence: Optional[float]) -> Tuple[np.ndarray, np.ndarray, float]:
    weights = strat.weights
    p_hat = np.array([s.p_hat for s in strat.strata], dtype=float)
    point = float((weights * p_hat).sum()) if prevalence is None else prevalence
    if point <= 0.0:
        raise UndefinedTargetError(
            "stratified prevalence is 0; a relative precision target is undefined"
        )
    return weights, p_hat, point


def samples_needed_stratified_equal(strat: Stratification, target: PrecisionTarget,
                                    prevalence: Optional[float] = None) -> int:
    """
    Budget for equal allocation over the non-empty strata

    n = (L/SE_req²)·Σ_h W_h²·p_h(1-p_h), population correction dropped.
    Zero-variance strata give n = 0, floored at one annotation per stratum.
    """
    weights, p_hat, point = _stratified_inputs(strat, prevalence)
    num_strata = strat.non_empty
    se = required_se(point, target)
    n = (num_strata / se ** 2) * float(np.sum(weights ** 2 * p_hat * (1.0 - p_hat)))
    return max(_ceil(n), num_strata)


def samples_needed_stratified_optimal(strat: Stratification, target: PrecisionTarget,
                                      prevalence: Optional[float] = None) -> int:
    """
    Budget for Neyman allocation

    n = (1/SE_req²)·Σ_h W_h²·σ_h²/c_h with c_h = N_h·σ_h / Σ_k N_k·σ_k.
    Strata with σ_h = 0 receive nothing and add nothing; when every σ_h is 0
    the result is the number of non-empty strata.

    Args:
        strat: Stratification carrying p_hat (or sigma overrides)
        target: Precision target
        prevalence: Prevalence fixing SE_req; defaults to the stratified point
    """
    weights, _, point = _stratified_inputs(strat, prevalence)
    sigmas = strat.sigmas
    mass = strat.sizes * sigmas
    if not np.any(mass > 0):
        logger.warning("All strata have zero deviation; planning the structural minimum")
        return strat.non_empty
    shares = mass / mass.sum()
    se = required_se(point, target)
    used = shares > 0
    n = float(np.sum(weights[used] ** 2 * sigmas[used] ** 2 / shares[used])) / se ** 2
    return max(_ceil(n), 1)


def power_table(prevalences: Sequence[float] = DEFAULT_PREVALENCES,
                targets: Sequence[float] = DEFAULT_TARGETS,
                confidence: float = 0.95) -> Dict[float, Dict[float, int]]:
    """Random-sampling budgets for every (prevalence, relative target) pair"""
    return {
        p: {r: samples_needed_random(p, PrecisionTarget(r, confidence)) for r in targets}
        for p in prevalences
    }


def efficiency_gain(random_n: int, stratified_n: int) -> float:
    """Relative reduction in annotations from stratification"""
    if random_n <= 0:
        raise InvalidInputError("random-sampling budget must be positive")
    return 1.0 - stratified_n / random_n
