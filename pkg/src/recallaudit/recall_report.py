"""
Recall Report - From prevalence estimates to moderation recall
Part of recallaudit pipeline

Recall = TP/(TP+FN) with FN estimated as p̂·|N| over the visible
(predicted-negative) pool. Intervals come from plugging the prevalence
interval endpoints into the recall equation, or from a stratified bootstrap.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import truncnorm

from .errors import (
    InvalidInputError,
    UndefinedRecallError,
    UnsampledStratumError,
    ValidationError,
)
from .estimation import PooledItem, PrevalenceEstimate, Stratification, estimate_stratified

logger = logging.getLogger(__name__)

TP_SOURCES = ("exact-count", "estimated", "removals-upper-bound")
PROVENANCE = ("exact", "estimated")
DEFAULT_REPLICATES = 10_000


@dataclass(frozen=True)
class ConfusionCounts:
    """TP/FP/TN/FN with the provenance of each count"""
    tp: float
    fp: float
    tn: float
    fn: float
    provenance: Mapping[str, str] = field(
        default_factory=lambda: {"tp": "exact", "fp": "exact", "tn": "exact", "fn": "exact"}
    )

    @classmethod
    def from_pool(cls, pool: Sequence[PooledItem]) -> "ConfusionCounts":
        """Exact counts over a pool whose items carry both label and filtered flag"""
        tp = fp = tn = fn = 0
        for item in pool:
            if item.label is None or item.filtered is None:
                raise InvalidInputError(f"item {item.id} lacks a label or filtered flag")
            if item.filtered:
                tp, fp = tp + item.label, fp + (1 - item.label)
            else:
                fn, tn = fn + item.label, tn + (1 - item.label)
        return cls(tp=tp, fp=fp, tn=tn, fn=fn)

    @classmethod
    def estimated(cls, tp: float, fp: float, visible_size: int,
                  prev: PrevalenceEstimate, removals_exact: bool = True) -> "ConfusionCounts":
        """
        Counts with FN = p̂·|N| and TN = |N| − FN over the visible pool.
        ``removals_exact`` False marks TP and FP as estimated as well.
        """
        fn = prev.point * visible_size
        removals = "exact" if removals_exact else "estimated"
        return cls(
            tp=tp, fp=fp, tn=visible_size - fn, fn=fn,
            provenance={"tp": removals, "fp": removals, "tn": "estimated", "fn": "estimated"},
        )

    @property
    def total(self) -> float:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> Optional[float]:
        return _ratio(self.tp + self.tn, self.total)

    @property
    def precision(self) -> Optional[float]:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> Optional[float]:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> Optional[float]:
        precision, recall = self.precision, self.recall
        if precision is None or recall is None or precision + recall == 0:
            return None
        return 2 * precision * recall / (precision + recall)

    def violations(self, total: Optional[float] = None,
                   removed: Optional[float] = None) -> List[str]:
        """Identities the counts break, empty when consistent"""
        problems = []
        for name in ("tp", "fp", "tn", "fn"):
            value = getattr(self, name)
            if not math.isfinite(value):
                problems.append(f"{name} is not finite")
            elif value < 0:
                problems.append(f"{name} = {value} is negative")
        for name, source in self.provenance.items():
            if source not in PROVENANCE:
                problems.append(f"provenance of {name} is {source!r}")
        if total is not None and not math.isclose(self.total, total, rel_tol=1e-9, abs_tol=1e-6):
            problems.append(f"tp+fp+tn+fn = {self.total} != total {total}")
        if removed is not None and not math.isclose(self.tp + self.fp, removed, rel_tol=1e-9, abs_tol=1e-6):
            problems.append(f"tp+fp = {self.tp + self.fp} != removed {removed}")
        return problems


def _ratio(numerator: float, denominator: float) -> Optional[float]:
    if denominator == 0:
        return None
    return numerator / denominator


@dataclass(frozen=True)
class RecallReport:
    """Recall point estimate and interval with its provenance"""
    tp_source: str
    tp_value: float
    negatives_pool_size: int
    prevalence: PrevalenceEstimate
    recall_point: float
    recall_ci: Tuple[float, float]
    interval_method: str
    tp_se: Optional[float] = None
    bootstrap_replicates: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.tp_source not in TP_SOURCES:
            raise InvalidInputError(f"unknown tp source {self.tp_source!r}")
        low, high = self.recall_ci
        if not (low <= self.recall_point <= high):
            raise InvalidInputError(
                f"recall interval [{low}, {high}] does not contain {self.recall_point}"
            )

    @property
    def is_upper_bound(self) -> bool:
        return self.tp_source == "removals-upper-bound"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tp_source": self.tp_source,
            "tp_value": self.tp_value,
            "tp_se": self.tp_se,
            "negatives_pool_size": self.negatives_pool_size,
            "prevalence": self.prevalence.to_dict(),
            "recall_point": self.recall_point,
            "recall_ci": list(self.recall_ci),
            "interval_method": self.interval_method,
            "bootstrap_replicates": self.bootstrap_replicates,
            "seed": self.seed,
            "upper_bound": self.is_upper_bound,
        }


def recall_from_counts(tp: float, fn: float) -> float:
    """TP/(TP+FN)"""
    if tp < 0 or fn < 0:
        raise InvalidInputError("counts must be non-negative")
    if tp + fn == 0:
        raise UndefinedRecallError("recall is undefined with no true positives or false negatives")
    return tp / (tp + fn)


def recall_interval_plugin(tp: float, pool_size: int, prev: PrevalenceEstimate,
                           tp_source: str = "exact-count") -> RecallReport:
    """
    Recall with the prevalence interval plugged into TP/(TP + p·|N|)

    Recall falls as p rises, so the low recall endpoint comes from the high
    prevalence endpoint and vice versa.
    """
    if pool_size < 1:
        raise InvalidInputError("negatives pool size must be positive")

    def recall_at(p: float) -> float:
        return recall_from_counts(tp, p * pool_size)

    point = recall_at(prev.point)
    low = recall_at(prev.ci_high)
    high = recall_at(prev.ci_low) if (tp > 0 or prev.ci_low > 0) else point
    return RecallReport(
        tp_source=tp_source,
        tp_value=tp,
        negatives_pool_size=pool_size,
        prevalence=prev,
        recall_point=point,
        recall_ci=(min(low, point), max(high, point)),
        interval_method="plugin",
    )


def recall_upper_bound(removed: int, pool_size: int, prev: PrevalenceEstimate) -> RecallReport:
    """Recall treating every removal as a true positive, flagged as an upper bound"""
    return recall_interval_plugin(float(removed), pool_size, prev, tp_source="removals-upper-bound")


def recall_interval_bootstrap(tp_est: Tuple[float, Optional[float]], pool_size: int,
                              strat: Stratification, B: int = DEFAULT_REPLICATES,
                              confidence: float = 0.95, seed: int = 0,
                              allocation_kind: str = "equal") -> RecallReport:
    """
    Percentile bootstrap interval on recall

    Each replicate resamples every stratum's annotations with replacement
    (n_h draws from its labels), recomputes the stratified prevalence, and
    draws TP from a normal truncated at 0 when TP is estimated (se given) or
    holds it fixed when exact.

    Args:
        tp_est: (point, se); se None or 0 means TP is an exact count
        pool_size: Size of the visible (predicted-negative) pool
        strat: Annotated stratification of the visible pool
        B: Number of replicates (>= 1000)
        confidence: Interval level
        seed: Seed of the replicate generator
    """
    if B < 1000:
        raise InvalidInputError(f"bootstrap needs at least 1000 replicates, got {B}")
    if pool_size < 1:
        raise InvalidInputError("negatives pool size must be positive")
    for stratum in strat.strata:
        if not stratum.is_empty and stratum.annotated == 0:
            raise UnsampledStratumError(stratum.index)

    tp_point, tp_se = tp_est
    exact = not tp_se
    prev = estimate_stratified(strat, confidence, allocation_kind=allocation_kind)
    point = recall_from_counts(tp_point, prev.point * pool_size)

    rng = np.random.default_rng(seed)
    used = [s for s in strat.strata if not s.is_empty]
    weights = np.array([s.population_size for s in used], dtype=float) / strat.total_size
    n_h = np.array([s.annotated for s in used], dtype=np.int64)
    p_h = np.array([s.p_hat for s in used], dtype=float)

    # (B, L) binomial draws are label resampling for binary annotations
    resampled = rng.binomial(n_h, p_h, size=(B, n_h.size)) / n_h
    prevalence_star = resampled @ weights

    if exact:
        tp_star = np.full(B, float(tp_point))
    else:
        lower = (0.0 - tp_point) / tp_se
        tp_star = truncnorm.rvs(lower, np.inf, loc=tp_point, scale=tp_se, size=B, random_state=rng)

    denominator = tp_star + prevalence_star * pool_size
    with np.errstate(invalid="ignore", divide="ignore"):
        recall_star = np.where(denominator > 0, tp_star / denominator, np.nan)
    valid = np.sort(recall_star[np.isfinite(recall_star)])
    if valid.size == 0:
        raise UndefinedRecallError("every bootstrap replicate has undefined recall")
    if valid.size < B:
        logger.warning(f"Dropped {B - valid.size} bootstrap replicates with undefined recall")

    low, high = np.quantile(valid, [(1.0 - confidence) / 2.0, (1.0 + confidence) / 2.0])
    return RecallReport(
        tp_source="exact-count" if exact else "estimated",
        tp_value=float(tp_point),
        tp_se=None if exact else float(tp_se),
        negatives_pool_size=pool_size,
        prevalence=prev,
        recall_point=point,
        recall_ci=(min(float(low), point), max(float(high), point)),
        interval_method="bootstrap",
        bootstrap_replicates=B,
        seed=seed,
    )


def build_transparency_report(counts: ConfusionCounts, prev: Optional[PrevalenceEstimate] = None,
                              metadata: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """
    Serialisable TP/FP/TN/FN bundle with derived metrics

    ``metadata`` may carry ``total`` and ``removed`` (checked against the
    counts), ``reporting_period`` and any method description; undefined
    metrics are None.
    """
    metadata = dict(metadata or {})
    problems = counts.violations(total=metadata.get("total"), removed=metadata.get("removed"))
    if problems:
        raise ValidationError("inconsistent confusion counts", problems)

    return {
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "provenance": dict(counts.provenance),
        "metrics": {
            "accuracy": counts.accuracy,
            "precision": counts.precision,
            "recall": counts.recall,
            "f1": counts.f1,
        },
        "prevalence": prev.to_dict() if prev is not None else None,
        "reporting_period": metadata.pop("reporting_period", None),
        "metadata": metadata,
    }
