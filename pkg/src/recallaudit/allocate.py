"""
Allocate - Per-stratum annotation budgets and the annotation oracle
Part of recallaudit pipeline

Equal and Neyman-optimal allocation, and the two-phase pilot procedure:
a fixed pilot per stratum estimates the stratum deviations (with pseudocounts),
then each stratum is topped up towards its approximated optimal share.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Protocol, Sequence, Tuple

import numpy as np

from .errors import DegenerateAllocationError, InvalidInputError
from .estimation import PooledItem, Stratification
from .plan import PrecisionTarget, samples_needed_stratified_optimal

logger = logging.getLogger(__name__)

ALLOCATION_KINDS = ("equal", "optimal", "pilot")


@dataclass(frozen=True)
class Allocation:
    """Per-stratum annotation counts, planned or realized"""
    per_stratum: Tuple[int, ...]
    kind: str
    exhausted: Tuple[bool, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ALLOCATION_KINDS:
            raise InvalidInputError(f"unknown allocation kind {self.kind!r}")
        if any(n < 0 for n in self.per_stratum):
            raise InvalidInputError("allocations must be non-negative")

    @property
    def total(self) -> int:
        return int(sum(self.per_stratum))

    def check_against(self, strat: Stratification) -> None:
        """Raise unless the allocation is aligned with and fits inside the strata"""
        if len(self.per_stratum) != strat.num_strata:
            raise InvalidInputError("allocation is not aligned with the stratification")
        for stratum, n in zip(strat.strata, self.per_stratum):
            if n > stratum.population_size:
                raise InvalidInputError(
                    f"stratum {stratum.index}: allocation {n} exceeds size {stratum.population_size}"
                )


@dataclass(frozen=True)
class AllocationSpec:
    """Allocation method with its pilot size (pilot only)"""
    kind: str = "pilot"
    pilot_per_stratum: int = 50

    def __post_init__(self):
        if self.kind not in ALLOCATION_KINDS:
            raise InvalidInputError(
                f"unknown allocation {self.kind!r} (expected one of {', '.join(ALLOCATION_KINDS)})"
            )
        if self.pilot_per_stratum < 1:
            raise InvalidInputError("pilot size must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "AllocationSpec":
        """Parse ``equal``, ``optimal`` (alias ``neyman``) or ``pilot:m``"""
        kind, _, m = text.partition(":")
        kind = kind.strip().lower()
        if kind in ("neyman", "neyman-oracle"):
            kind = "optimal"
        try:
            pilot = int(m) if m else 50
        except ValueError:
            raise InvalidInputError(f"bad pilot size in {text!r}")
        return cls(kind=kind, pilot_per_stratum=pilot)

    def __str__(self) -> str:
        return f"pilot:{self.pilot_per_stratum}" if self.kind == "pilot" else self.kind


@dataclass(frozen=True)
class PilotConfig:
    """
    Two-phase pilot settings. ``total_budget`` None means the budget is
    planned from the pilot against a precision target. With ``reuse_pilot``
    off the pilot only shapes the allocation and every topped-up stratum is
    estimated from its top-up draw alone.
    """
    pilot_per_stratum: int = 50
    pseudocounts: bool = True
    reuse_pilot: bool = True
    total_budget: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.pilot_per_stratum < 1:
            raise InvalidInputError("pilot size must be >= 1")
        if self.total_budget is not None and self.total_budget < 1:
            raise InvalidInputError("total budget must be >= 1")


class AnnotationOracle(Protocol):
    """
    Label source that charges one unit of budget per distinct item.

    Items are addressed by id through ``annotate`` or in bulk by their
    position in the pool the stratification was built from.
    """

    @property
    def consumed(self) -> int: ...

    def annotate(self, item_id: str) -> int: ...

    def reveal(self, positions: np.ndarray) -> np.ndarray: ...


class PoolOracle:
    """
    Oracle over a labeled pool: annotating reveals the stored label.

    Labels are cached, so asking twice for the same item costs once.
    Positions index the pool the oracle was built from.
    """

    def __init__(self, labels: np.ndarray, ids: Optional[Sequence[str]] = None):
        self._labels = np.asarray(labels)
        if np.any((self._labels != 0) & (self._labels != 1)):
            raise InvalidInputError("oracle labels must be binary")
        self._ids = ids
        self._positions: Optional[Dict[str, int]] = None
        self._revealed = np.zeros(self._labels.size, dtype=bool)
        self._consumed = 0

    @classmethod
    def from_pool(cls, pool: Sequence[PooledItem]) -> "PoolOracle":
        missing = [item.id for item in pool if item.label is None]
        if missing:
            raise InvalidInputError(
                f"{len(missing)} pool items have no label (first: {missing[0]})"
            )
        labels = np.fromiter((item.label for item in pool), dtype=np.int8, count=len(pool))
        return cls(labels, [item.id for item in pool])

    @property
    def consumed(self) -> int:
        return self._consumed

    def annotate(self, item_id: str) -> int:
        if self._ids is None:
            raise InvalidInputError("this oracle was built without item ids")
        if self._positions is None:
            self._positions = {item_id: i for i, item_id in enumerate(self._ids)}
        try:
            position = self._positions[item_id]
        except KeyError:
            raise InvalidInputError(f"unknown item id {item_id!r}")
        return int(self.reveal(np.array([position]))[0])

    def reveal(self, positions: np.ndarray) -> np.ndarray:
        """Labels at the given pool positions, charging only unseen ones"""
        positions = np.asarray(positions, dtype=np.int64)
        fresh = np.unique(positions[~self._revealed[positions]])
        self._revealed[fresh] = True
        self._consumed += int(fresh.size)
        return self._labels[positions]


def _largest_remainder(shares: np.ndarray, total: int) -> np.ndarray:
    """Round non-negative real shares to integers summing to total (lowest index wins ties)"""
    floors = np.floor(shares).astype(np.int64)
    extra = int(total - floors.sum())
    if extra > 0:
        fractions = shares - floors
        order = np.lexsort((np.arange(shares.size), -fractions))
        floors[order[:extra]] += 1
    return floors


def allocate_equal(strat: Stratification, n: int) -> Allocation:
    """
    Split n equally over the non-empty strata

    The remainder goes one each to the lowest-indexed strata; a stratum that
    cannot take its share is clamped to its size and the surplus is split
    again by the same rule among the strata that still have room.
    """
    sizes = strat.sizes
    active = [h for h in range(sizes.size) if sizes[h] > 0]
    if n < len(active):
        raise InvalidInputError(
            f"budget {n} is smaller than the number of non-empty strata ({len(active)})"
        )
    alloc = np.zeros(sizes.size, dtype=np.int64)
    remaining = n
    while remaining > 0 and active:
        base, rem = divmod(remaining, len(active))
        for rank, h in enumerate(active):
            alloc[h] += base + (1 if rank < rem else 0)
        surplus = int(np.maximum(alloc - sizes, 0).sum())
        alloc = np.minimum(alloc, sizes)
        remaining = surplus
        active = [h for h in active if alloc[h] < sizes[h]]
    if remaining > 0:
        logger.warning(f"Budget exceeds the pool; {remaining} annotations left unallocated")
    return Allocation(per_stratum=tuple(int(v) for v in alloc), kind="equal")


def allocate_neyman(strat: Stratification, n: int, kind: str = "optimal") -> Allocation:
    """
    Neyman allocation n_h ∝ N_h·σ_h

    Args:
        strat: Stratification whose strata carry sigma_hat
        n: Total budget
        kind: Allocation tag to record (optimal, or pilot for the pilot top-up)

    Returns:
        Allocation: largest-remainder rounding, clamped to stratum sizes with
        the surplus redistributed proportionally
    """
    if n < 1:
        raise InvalidInputError(f"budget must be >= 1, got {n}")
    sizes = strat.sizes
    weights = sizes * strat.sigmas
    if not np.any(weights > 0):
        raise DegenerateAllocationError(
            "every stratum has zero standard deviation; the estimator variance is already 0"
        )

    alloc = np.zeros(sizes.size, dtype=np.int64)
    active = weights > 0
    remaining = n
    while True:
        shares = np.zeros(sizes.size)
        shares[active] = remaining * weights[active] / weights[active].sum()
        saturated = active & (shares >= sizes)
        if saturated.any():
            alloc[saturated] = sizes[saturated]
            remaining -= int(sizes[saturated].sum())
            active &= ~saturated
            if remaining <= 0 or not active.any():
                break
            continue
        alloc[active] = _largest_remainder(shares[active], remaining)
        remaining = 0
        break

    if remaining > 0:
        logger.warning(
            f"Budget exceeds the strata with non-zero deviation; {remaining} annotations unallocated"
        )
    return Allocation(per_stratum=tuple(int(v) for v in alloc), kind=kind)


def pilot_sigmas(annotated: Sequence[int], positives: Sequence[int],
                 pseudocounts: bool = True) -> np.ndarray:
    """Stratum deviations from pilot counts, optionally adding one positive and one negative"""
    n = np.asarray(annotated, dtype=float)
    k = np.asarray(positives, dtype=float)
    if pseudocounts:
        p = (k + 1.0) / (n + 2.0)
    else:
        p = np.divide(k, n, out=np.zeros_like(k), where=n > 0)
    sigmas = np.sqrt(p * (1.0 - p))
    sigmas[n == 0] = 0.0
    return sigmas


def _planning_stratification(strat: Stratification, annotated: np.ndarray,
                             positives: np.ndarray, pseudocounts: bool) -> Stratification:
    counted = strat.with_counts(annotated, positives)
    return counted.with_sigmas(pilot_sigmas(annotated, positives, pseudocounts))


def plan_pilot_budget(planning: Stratification, target: PrecisionTarget,
                      pseudocounts: bool = True) -> int:
    """
    Total budget needed under the pilot-approximated optimal allocation.

    The prevalence fixing the required SE is the pilot estimate, or the
    pseudocount-smoothed one when the pilot found no positives.
    """
    weights = planning.weights
    annotated = planning.annotated.astype(float)
    positives = planning.positives.astype(float)
    raw = np.divide(positives, annotated, out=np.zeros_like(positives), where=annotated > 0)
    prevalence = float((weights * raw).sum())
    if prevalence <= 0.0 and pseudocounts:
        smoothed = (positives + 1.0) / (annotated + 2.0)
        prevalence = float((weights * smoothed).sum())
    return samples_needed_stratified_optimal(planning, target, prevalence=prevalence)


@dataclass
class PilotDraw:
    """
    State after the first phase. ``orders`` fixes the annotation sequence of
    each stratum; ``planning`` carries the pseudocount deviations.
    """
    orders: Tuple[np.ndarray, ...]
    annotated: np.ndarray
    positives: np.ndarray
    planning: Stratification

    @property
    def pilot_total(self) -> int:
        return int(self.annotated.sum())

    def realized_allocation(self, budget: int) -> np.ndarray:
        """Per-stratum counts after topping up towards the Neyman share of budget"""
        if np.any(self.planning.sizes * self.planning.sigmas > 0):
            optimal = np.asarray(allocate_neyman(self.planning, budget, kind="pilot").per_stratum)
        else:
            optimal = self.annotated
        sizes = np.array([order.size for order in self.orders], dtype=np.int64)
        return np.minimum(np.maximum(optimal, self.annotated), sizes)


def draw_pilot(strat: Stratification, cfg: PilotConfig, oracle: AnnotationOracle) -> PilotDraw:
    """Phase 1: annotate min(m, N_h) random items of every stratum"""
    rng = np.random.default_rng(cfg.seed)
    orders = tuple(rng.permutation(members) for members in strat.members)

    annotated = np.zeros(strat.num_strata, dtype=np.int64)
    positives = np.zeros(strat.num_strata, dtype=np.int64)
    for h, order in enumerate(orders):
        take = min(cfg.pilot_per_stratum, order.size)
        if take:
            positives[h] = int(oracle.reveal(order[:take]).sum())
            annotated[h] = take

    planning = _planning_stratification(strat, annotated, positives, cfg.pseudocounts)
    return PilotDraw(orders=orders, annotated=annotated, positives=positives, planning=planning)


def complete_pilot(strat: Stratification, draw: PilotDraw, budget: int,
                   oracle: AnnotationOracle,
                   reuse_pilot: bool = True) -> Tuple[Allocation, Stratification]:
    """
    Phase 2: annotate each stratum's shortfall against its share of budget

    A stratum whose pilot already covers its share gets no further
    annotations. With ``reuse_pilot`` off the returned counts cover the
    top-up draw only; a stratum without a top-up falls back to its pilot.
    """
    annotated = draw.annotated.copy()
    positives = draw.positives.copy()
    fresh_n = np.zeros_like(annotated)
    fresh_k = np.zeros_like(positives)
    target = draw.realized_allocation(budget)

    for h, order in enumerate(draw.orders):
        start = int(annotated[h])
        extra = int(target[h] - start)
        if extra > 0:
            found = int(oracle.reveal(order[start:start + extra]).sum())
            positives[h] += found
            annotated[h] += extra
            fresh_n[h], fresh_k[h] = extra, found

    exhausted = tuple(
        bool(s.population_size > 0 and annotated[h] >= s.population_size)
        for h, s in enumerate(strat.strata)
    )
    for h, flag in enumerate(exhausted):
        if flag:
            logger.info(f"Stratum {h + 1} fully annotated")

    allocation = Allocation(
        per_stratum=tuple(int(v) for v in annotated),
        kind="pilot",
        exhausted=exhausted,
    )
    if reuse_pilot:
        return allocation, strat.with_counts(annotated, positives)
    topped = fresh_n > 0
    for h in np.flatnonzero(~topped & (draw.annotated > 0)):
        if not exhausted[h]:
            logger.warning(f"Stratum {h + 1} has no top-up draw; estimating it from its pilot")
    return allocation, strat.with_counts(
        np.where(topped, fresh_n, annotated), np.where(topped, fresh_k, positives)
    )


def run_pilot(pool: Sequence[PooledItem], strat: Stratification, cfg: PilotConfig,
              oracle: AnnotationOracle,
              target: Optional[PrecisionTarget] = None) -> Tuple[Allocation, Stratification]:
    """
    Two-phase pilot allocation

    Phase 1 annotates min(m, N_h) items per stratum. Phase 2 computes the
    Neyman allocation of the total budget over the pseudocount deviations and
    annotates only the shortfall of strata whose pilot is below their share;
    leftover budget is not moved elsewhere. The returned stratification counts
    every annotation (pilot plus top-up) unless ``cfg.reuse_pilot`` is off;
    pseudocounts never reach it.

    Returns:
        (realized Allocation, annotated Stratification)
    """
    if len(pool) != strat.total_size:
        raise InvalidInputError("pool does not match the stratification it was binned into")
    if cfg.total_budget is None and target is None:
        raise InvalidInputError("pilot needs either a total budget or a precision target")

    draw = draw_pilot(strat, cfg, oracle)
    budget = cfg.total_budget
    if budget is None:
        budget = plan_pilot_budget(draw.planning, target, cfg.pseudocounts)
        logger.info(f"Planned total budget {budget} from {draw.pilot_total} pilot annotations")
    return complete_pilot(strat, draw, budget, oracle, cfg.reuse_pilot)


def sample_allocation(strat: Stratification, allocation: Allocation, oracle: AnnotationOracle,
                      seed: int = 0) -> Stratification:
    """Annotate a planned allocation, uniformly without replacement within strata"""
    allocation.check_against(strat)
    rng = np.random.default_rng(seed)
    annotated = np.zeros(strat.num_strata, dtype=np.int64)
    positives = np.zeros(strat.num_strata, dtype=np.int64)
    for h, (members, n_h) in enumerate(zip(strat.members, allocation.per_stratum)):
        if n_h == 0:
            continue
        chosen = rng.choice(members, size=n_h, replace=False)
        positives[h] = int(oracle.reveal(chosen).sum())
        annotated[h] = n_h
    return strat.with_counts(annotated, positives)


def ensure_each_sampled(allocation: Allocation, strat: Stratification) -> Allocation:
    """Raise every non-empty stratum with no allocation to one annotation"""
    per_stratum = tuple(
        max(n, 1) if size > 0 else n for n, size in zip(allocation.per_stratum, strat.sizes)
    )
    return replace(allocation, per_stratum=per_stratum)
