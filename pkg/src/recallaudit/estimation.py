"""
Estimation - Domain types and unbiased prevalence estimators
Part of recallaudit pipeline

Random-sampling and stratified prevalence estimators with normal (Wald)
confidence intervals, precision estimation over removed content, and the
coefficient of variation used as the reporting target.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .errors import InvalidInputError, UnsampledStratumError

logger = logging.getLogger(__name__)

METHODS = ("random", "stratified-equal", "stratified-neyman", "stratified-pilot")

# allocation kind -> estimate method tag
STRATIFIED_METHODS = {
    "equal": "stratified-equal",
    "optimal": "stratified-neyman",
    "pilot": "stratified-pilot",
}


def critical_value(confidence: float) -> float:
    """Two-sided normal critical value, z(0.95) = 1.959964"""
    if not 0.0 < confidence < 1.0:
        raise InvalidInputError(f"confidence must lie in (0, 1), got {confidence}")
    return float(norm.ppf(0.5 + confidence / 2.0))


@dataclass(frozen=True)
class PooledItem:
    """One content item of the pool"""
    id: str
    score: float
    label: Optional[int] = None
    filtered: Optional[bool] = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise InvalidInputError(f"item id must be a non-empty string, got {self.id!r}")
        if not (0.0 <= self.score <= 1.0):
            raise InvalidInputError(f"score of item {self.id} outside [0, 1]: {self.score}")
        if self.label is not None and self.label not in (0, 1):
            raise InvalidInputError(f"label of item {self.id} must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class LabeledSample:
    """Positive count out of a simple random sample of annotated items"""
    positives: int
    total: int

    def __post_init__(self):
        if self.total < 0 or self.positives < 0:
            raise InvalidInputError("sample counts must be non-negative")
        if self.positives > self.total:
            raise InvalidInputError(
                f"positives ({self.positives}) exceed sample total ({self.total})"
            )

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "LabeledSample":
        values = np.fromiter(labels, dtype=np.int64)
        if np.any((values != 0) & (values != 1)):
            raise InvalidInputError("labels must be binary")
        return cls(positives=int(values.sum()), total=int(values.size))


@dataclass(frozen=True)
class StratumSummary:
    """
    One stratum of a stratification.

    ``sigma`` overrides the plug-in standard deviation; it carries the true
    within-stratum value for oracle allocation or the pseudocount-smoothed
    value after a pilot.
    """
    index: int
    population_size: int
    score_low: float
    score_high: float
    annotated: int = 0
    positives: int = 0
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.population_size < 0:
            raise InvalidInputError(f"stratum {self.index}: negative population size")
        if not (0 <= self.positives <= self.annotated <= self.population_size):
            raise InvalidInputError(
                f"stratum {self.index}: need 0 <= positives ({self.positives}) <= "
                f"annotated ({self.annotated}) <= size ({self.population_size})"
            )
        if self.sigma is not None and self.sigma < 0:
            raise InvalidInputError(f"stratum {self.index}: negative sigma")

    @property
    def p_hat(self) -> float:
        if self.annotated == 0:
            return 0.0
        return self.positives / self.annotated

    @property
    def sigma_hat(self) -> float:
        if self.sigma is not None:
            return self.sigma
        p = self.p_hat
        return math.sqrt(p * (1.0 - p))

    @property
    def is_empty(self) -> bool:
        return self.population_size == 0


@dataclass(frozen=True)
class Stratification:
    """
    Ordered partition of a pool into strata by score boundaries.

    ``members`` holds, per stratum, the positions of its items in the pool the
    stratification was built from (sorted ascending).
    """
    boundaries: Tuple[float, ...]
    strata: Tuple[StratumSummary, ...]
    total_size: int
    members: Tuple[np.ndarray, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if len(self.strata) < 1:
            raise InvalidInputError("a stratification needs at least one stratum")
        if len(self.boundaries) != len(self.strata) + 1:
            raise InvalidInputError("boundaries must have one more entry than strata")
        if sum(s.population_size for s in self.strata) != self.total_size:
            raise InvalidInputError("stratum sizes do not sum to the pool size")

    @property
    def num_strata(self) -> int:
        return len(self.strata)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.population_size for s in self.strata], dtype=np.int64)

    @property
    def weights(self) -> np.ndarray:
        return self.sizes / float(self.total_size)

    @property
    def annotated(self) -> np.ndarray:
        return np.array([s.annotated for s in self.strata], dtype=np.int64)

    @property
    def positives(self) -> np.ndarray:
        return np.array([s.positives for s in self.strata], dtype=np.int64)

    @property
    def sigmas(self) -> np.ndarray:
        return np.array([s.sigma_hat for s in self.strata], dtype=float)

    @property
    def non_empty(self) -> int:
        return sum(1 for s in self.strata if not s.is_empty)

    def with_counts(self, annotated: Sequence[int], positives: Sequence[int]) -> "Stratification":
        """Copy with per-stratum annotation counts replaced (sigma overrides cleared)"""
        self._check_aligned(annotated)
        self._check_aligned(positives)
        strata = tuple(
            replace(s, annotated=int(n), positives=int(k), sigma=None)
            for s, n, k in zip(self.strata, annotated, positives)
        )
        return replace(self, strata=strata)

    def with_sigmas(self, sigmas: Sequence[float]) -> "Stratification":
        """Copy with per-stratum standard deviations fixed"""
        self._check_aligned(sigmas)
        strata = tuple(replace(s, sigma=float(v)) for s, v in zip(self.strata, sigmas))
        return replace(self, strata=strata)

    def _check_aligned(self, values: Sequence) -> None:
        if len(values) != self.num_strata:
            raise InvalidInputError(
                f"expected {self.num_strata} per-stratum values, got {len(values)}"
            )


@dataclass(frozen=True)
class PrevalenceEstimate:
    """Point estimate with standard error and two-sided normal interval"""
    point: float
    se: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    n_total: int = 0
    method: str = "random"

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown estimate method {self.method!r}")
        if self.se < 0:
            raise InvalidInputError("standard error must be non-negative")
        if not (self.ci_low <= self.point <= self.ci_high):
            raise InvalidInputError(
                f"interval [{self.ci_low}, {self.ci_high}] does not contain {self.point}"
            )

    @property
    def cv(self) -> float:
        return coefficient_of_variation(self)

    @classmethod
    def from_point(cls, point: float, se: float, confidence: float = 0.95,
                   n_total: int = 0, method: str = "random") -> "PrevalenceEstimate":
        """Build the clamped Wald interval point ± z·se"""
        half = critical_value(confidence) * se
        return cls(
            point=point,
            se=se,
            ci_low=max(0.0, point - half),
            ci_high=min(1.0, point + half),
            confidence=confidence,
            n_total=n_total,
            method=method,
        )

    def to_dict(self) -> dict:
        cv = self.cv
        return {
            "point": self.point,
            "se": self.se,
            "cv": None if math.isinf(cv) else cv,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "confidence": self.confidence,
            "n_total": self.n_total,
            "method": self.method,
        }


def estimate_random(sample: LabeledSample, confidence: float = 0.95) -> PrevalenceEstimate:
    """
    Random-sampling prevalence estimator

    Args:
        sample: Positives out of a simple random sample
        confidence: Two-sided interval level

    Returns:
        PrevalenceEstimate: p = k/n with SE sqrt(p(1-p)/n)
    """
    if sample.total < 1:
        raise InvalidInputError("cannot estimate prevalence from an empty sample")
    point = sample.positives / sample.total
    se = math.sqrt(point * (1.0 - point) / sample.total)
    return PrevalenceEstimate.from_point(point, se, confidence, sample.total, "random")


def estimate_precision(sample: LabeledSample, confidence: float = 0.95) -> PrevalenceEstimate:
    """Precision of removals: the positive rate of a random sample of removed items"""
    return estimate_random(sample, confidence)


def estimate_stratified(strat: Stratification, confidence: float = 0.95,
                        apply_fpc: bool = True, squared_fpc: bool = False,
                        allocation_kind: str = "equal") -> PrevalenceEstimate:
    """
    Stratified prevalence estimator

    Args:
        strat: Stratification with per-stratum annotation counts
        confidence: Two-sided interval level
        apply_fpc: Apply the finite population correction (1 - n_h/N_h)
        squared_fpc: Use the squared correction instead (compatibility form)
        allocation_kind: equal, optimal or pilot; selects the method tag

    Returns:
        PrevalenceEstimate: weighted mean of stratum rates and its SE
    """
    if allocation_kind not in STRATIFIED_METHODS:
        raise InvalidInputError(f"unknown allocation kind {allocation_kind!r}")

    point = 0.0
    variance_terms = []
    n_total = 0
    for stratum in strat.strata:
        if stratum.is_empty:
            logger.warning(f"Stratum {stratum.index} is empty and contributes weight 0")
            continue
        if stratum.annotated == 0:
            raise UnsampledStratumError(stratum.index)

        weight = stratum.population_size / strat.total_size
        p = stratum.p_hat
        n = stratum.annotated
        fpc = 1.0
        if apply_fpc:
            fpc = 1.0 - n / stratum.population_size
            if squared_fpc:
                fpc = fpc ** 2
        point += weight * p
        variance_terms.append(weight ** 2 * fpc * p * (1.0 - p) / n)
        n_total += n

    se = math.sqrt(math.fsum(variance_terms))
    # rounding in the weighted sum may leave the point a hair outside [0, 1]
    point = min(max(point, 0.0), 1.0)
    return PrevalenceEstimate.from_point(
        point, se, confidence, n_total, STRATIFIED_METHODS[allocation_kind]
    )


def coefficient_of_variation(est: PrevalenceEstimate) -> float:
    """se/point, +inf when point is 0 with positive se, 0 when both are 0"""
    if est.point == 0.0:
        return math.inf if est.se > 0 else 0.0
    return est.se / est.point


def stratified_variance(population_sizes: Sequence[int], sigmas: Sequence[float],
                        allocation: Sequence[int], apply_fpc: bool = False) -> float:
    """
    Analytic variance of the stratified estimator for known sigmas.

    A non-empty stratum with positive sigma and no allocation has infinite
    variance.
    """
    sizes = np.asarray(population_sizes, dtype=float)
    sig = np.asarray(sigmas, dtype=float)
    alloc = np.asarray(allocation, dtype=float)
    if not (sizes.shape == sig.shape == alloc.shape):
        raise InvalidInputError("sizes, sigmas and allocation must be aligned")
    total = sizes.sum()
    if total <= 0:
        raise InvalidInputError("pool is empty")

    variance = 0.0
    for size, sigma, n in zip(sizes, sig, alloc):
        if size == 0 or sigma == 0:
            continue
        if n <= 0:
            return math.inf
        fpc = (1.0 - n / size) if apply_fpc else 1.0
        variance += (size / total) ** 2 * fpc * sigma ** 2 / n
    return variance
