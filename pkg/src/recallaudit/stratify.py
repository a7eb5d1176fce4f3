"""
Stratify - Score-based binning of a pool into strata
Part of recallaudit pipeline

Equal-width, quantile and oracle (label-aware recursive bisection) binning.
Stratum membership is always a function of the score alone: half-open
intervals [low, high), the last one closed.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .estimation import PooledItem, Stratification, StratumSummary

logger = logging.getLogger(__name__)

BINNING_METHODS = ("equal-width", "quantile", "oracle")


@dataclass(frozen=True)
class BinningSpec:
    """How to bin a pool: method, number of bins and tie handling"""
    method: str = "quantile"
    num_bins: int = 8
    boundary_policy: str = "keep-ties"

    def __post_init__(self):
        if self.method not in BINNING_METHODS:
            raise InvalidInputError(
                f"unknown binning method {self.method!r} (expected one of {', '.join(BINNING_METHODS)})"
            )
        if self.num_bins < 1:
            raise InvalidInputError(f"number of bins must be >= 1, got {self.num_bins}")
        if self.method == "oracle" and not _is_power_of_two(self.num_bins):
            raise InvalidInputError(f"oracle binning needs a power of two bins, got {self.num_bins}")
        if self.boundary_policy != "keep-ties":
            raise InvalidInputError(f"unsupported boundary policy {self.boundary_policy!r}")

    @classmethod
    def parse(cls, text: str) -> "BinningSpec":
        """Parse the command-line form ``method:L`` (e.g. ``quantile:8``)"""
        method, _, bins = text.partition(":")
        method = method.strip().lower()
        if method == "quantiles":
            method = "quantile"
        try:
            num_bins = int(bins) if bins else 8
        except ValueError:
            raise InvalidInputError(f"bad bin count in {text!r}")
        return cls(method=method, num_bins=num_bins)

    def __str__(self) -> str:
        return f"{self.method}:{self.num_bins}"


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and (value & (value - 1)) == 0


def _pool_scores(pool: Sequence[PooledItem]) -> np.ndarray:
    if len(pool) == 0:
        raise InvalidInputError("cannot stratify an empty pool")
    return np.fromiter((item.score for item in pool), dtype=float, count=len(pool))


def assign_strata(scores: np.ndarray, boundaries: Sequence[float]) -> np.ndarray:
    """Zero-based stratum index of every score"""
    cuts = np.asarray(boundaries, dtype=float)[1:-1]
    return np.searchsorted(cuts, np.asarray(scores, dtype=float), side="right")


def _build(scores: np.ndarray, boundaries: Sequence[float]) -> Stratification:
    boundaries = tuple(float(b) for b in boundaries)
    num_strata = len(boundaries) - 1
    index = assign_strata(scores, boundaries)
    order = np.argsort(index, kind="stable")
    counts = np.bincount(index, minlength=num_strata)
    members = tuple(np.split(order, np.cumsum(counts)[:-1]))
    strata = tuple(
        StratumSummary(
            index=h + 1,
            population_size=int(counts[h]),
            score_low=boundaries[h],
            score_high=boundaries[h + 1],
        )
        for h in range(num_strata)
    )
    return Stratification(
        boundaries=boundaries,
        strata=strata,
        total_size=int(scores.size),
        members=members,
    )


def _cut_between(sorted_scores: np.ndarray, k: int) -> float:
    """Boundary separating sorted_scores[:k] from sorted_scores[k:]"""
    n = sorted_scores.size
    if k <= 0:
        return 0.0
    if k >= n:
        return 1.0
    low, high = sorted_scores[k - 1], sorted_scores[k]
    mid = (low + high) / 2.0
    # adjacent floats: the midpoint can round down onto the lower score
    return float(mid if mid > low else high)


def bin_equal_width(pool: Sequence[PooledItem], L: int) -> Stratification:
    """Split [0, 1] into L equal-width intervals"""
    if L < 1:
        raise InvalidInputError(f"number of bins must be >= 1, got {L}")
    scores = _pool_scores(pool)
    boundaries = np.linspace(0.0, 1.0, L + 1)
    boundaries[0], boundaries[-1] = 0.0, 1.0
    return _build(scores, boundaries)


def bin_quantile(pool: Sequence[PooledItem], L: int) -> Stratification:
    """
    Split the pool into L bins of (nearly) equal size

    Cut positions sit at the empirical quantiles; a cut that would separate two
    items with the same score moves to the nearest gap between distinct scores
    (the lower one on a tie), so equal scores always share a stratum. Cuts that
    collapse onto each other or onto the ends of the pool are merged, so heavy
    ties give fewer than L strata with strictly increasing boundaries.
    """
    if L < 1:
        raise InvalidInputError(f"number of bins must be >= 1, got {L}")
    scores = _pool_scores(pool)
    n = scores.size
    if L > n:
        raise InvalidInputError(f"cannot build {L} quantile bins from {n} items")

    sorted_scores = np.sort(scores)
    # valid cut positions: 0, n and every k with a strict increase at k
    valid = np.concatenate(
        ([0], np.flatnonzero(sorted_scores[1:] > sorted_scores[:-1]) + 1, [n])
    )

    cuts: List[int] = []
    moved = 0
    for h in range(1, L):
        target = (h * n) // L
        j = int(np.searchsorted(valid, target))
        if j < valid.size and valid[j] == target:
            cuts.append(target)
            continue
        lower, upper = int(valid[j - 1]), int(valid[j])
        cuts.append(lower if target - lower <= upper - target else upper)
        moved += 1

    if moved:
        logger.warning(
            f"Tied scores moved {moved} quantile boundaries; strata sizes are unbalanced"
        )

    distinct = sorted({k for k in cuts if 0 < k < n})
    if len(distinct) < len(cuts):
        logger.warning(
            f"Tied scores merged quantile bins; building {len(distinct) + 1} strata instead of {L}"
        )

    boundaries = [0.0] + [_cut_between(sorted_scores, k) for k in distinct] + [1.0]
    return _build(scores, boundaries)


def _best_split(scores: np.ndarray, labels: np.ndarray) -> Tuple[float, float]:
    """
    Best single cut of one stratum under the objective N_a·σ_a + N_b·σ_b.

    Returns (cut, objective); the lowest cut wins ties. A stratum without two
    distinct scores cannot be split and returns cut = nan.
    """
    n = scores.size
    if n < 2:
        return math.nan, 0.0
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = labels[order]
    candidates = np.flatnonzero(s[1:] > s[:-1]) + 1
    if candidates.size == 0:
        return math.nan, 0.0

    cum = np.cumsum(y)
    total_pos = cum[-1]
    left_n = candidates.astype(float)
    left_pos = cum[candidates - 1].astype(float)
    right_n = n - left_n
    right_pos = total_pos - left_pos
    p_left = left_pos / left_n
    p_right = right_pos / right_n
    objective = (
        left_n * np.sqrt(p_left * (1.0 - p_left))
        + right_n * np.sqrt(p_right * (1.0 - p_right))
    )
    best = objective.min()
    tol = 1e-12 * max(1.0, abs(best))
    pick = int(np.flatnonzero(objective <= best + tol)[0])
    return _cut_between(s, int(candidates[pick])), float(objective[pick])


def bin_oracle(pool: Sequence[PooledItem], L: int) -> Stratification:
    """
    Label-aware recursive bisection into L = 2^k strata

    Every round splits each current stratum once at the cut minimising
    N_a·σ_a + N_b·σ_b, the Neyman variance numerator of the two halves.
    """
    if not _is_power_of_two(L):
        raise InvalidInputError(f"oracle binning needs a power of two bins, got {L}")
    if any(item.label is None for item in pool):
        raise InvalidInputError("oracle binning requires every item to carry a label")
    scores = _pool_scores(pool)
    labels = np.fromiter((item.label for item in pool), dtype=np.int64, count=len(pool))

    boundaries = [0.0, 1.0]
    for _ in range(int(math.log2(L))):
        index = assign_strata(scores, boundaries)
        new_cuts = []
        for h in range(len(boundaries) - 1):
            inside = index == h
            cut, _ = _best_split(scores[inside], labels[inside])
            if math.isnan(cut):
                # nothing to separate; the empty half keeps the bin count
                cut = (boundaries[h] + boundaries[h + 1]) / 2.0
            new_cuts.append(cut)
        boundaries = sorted(boundaries + new_cuts)

    return _build(scores, boundaries)


def bin_pool(pool: Sequence[PooledItem], spec: BinningSpec) -> Stratification:
    """Dispatch to the binning method named by ``spec``"""
    logger.debug(f"Binning {len(pool)} items with {spec}")
    if spec.method == "equal-width":
        return bin_equal_width(pool, spec.num_bins)
    if spec.method == "quantile":
        return bin_quantile(pool, spec.num_bins)
    return bin_oracle(pool, spec.num_bins)


def apply_stratification(strat: Stratification, pool: Sequence[PooledItem]) -> Stratification:
    """Re-bin another pool with the boundaries of an existing stratification"""
    return _build(_pool_scores(pool), strat.boundaries)


def neyman_objective(strat: Stratification, labels: np.ndarray) -> float:
    """Σ_h N_h·σ_h with σ_h the exact within-stratum label deviation"""
    total = 0.0
    for stratum, members in zip(strat.strata, strat.members):
        if members.size == 0:
            continue
        p = float(labels[members].mean())
        total += members.size * math.sqrt(p * (1.0 - p))
    return total
