"""
Simulation - Synthetic pools, a synthetic labeled corpus and Monte-Carlo cost experiments
Part of recallaudit pipeline

Experiments compare the annotation cost of random sampling with stratified
designs over a grid of prevalence × binning × allocation. Each trial charges
its labels through a PoolOracle, so the reported cost is the number of
distinct items annotated.
"""

import logging
import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

from .allocate import (
    AllocationSpec,
    PilotConfig,
    PilotDraw,
    PoolOracle,
    allocate_equal,
    allocate_neyman,
    complete_pilot,
    draw_pilot,
    ensure_each_sampled,
    sample_allocation,
)
from .errors import InvalidInputError
from .estimation import (
    LabeledSample,
    PooledItem,
    PrevalenceEstimate,
    Stratification,
    estimate_random,
    estimate_stratified,
    stratified_variance,
)
from .plan import (
    PrecisionTarget,
    required_se,
    samples_needed_random,
    samples_needed_stratified_equal,
    samples_needed_stratified_optimal,
)
from .recall_report import ConfusionCounts
from .stratify import BinningSpec, bin_pool
from .text_scorer import (
    KeywordFilter,
    ScorerHyperparams,
    UnigramScorer,
    build_keyword_filter,
    score_pool_from_corpus,
    train_unigram_scorer,
)

logger = logging.getLogger(__name__)

RANDOM = "random"


# ---------------------------------------------------------------------------
# Synthetic pools
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticPoolSpec:
    """
    Labeled pool with Beta-distributed classifier scores.

    Positives score ~ Beta(2 + s, 2) and negatives ~ Beta(2, 2 + s) for
    separation s; s = 0 gives a classifier with no information.
    """
    size: int = 50_000
    prevalence: float = 0.041
    separation: float = 4.0
    exact_counts: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise InvalidInputError(f"pool size must be >= 1, got {self.size}")
        if not 0.0 <= self.prevalence <= 1.0:
            raise InvalidInputError(f"prevalence must lie in [0, 1], got {self.prevalence}")
        if self.separation < 0:
            raise InvalidInputError(f"separation must be >= 0, got {self.separation}")


def _item_ids(prefix: str, n: int) -> List[str]:
    width = len(str(max(n - 1, 0)))
    return [f"{prefix}-{i:0{width}d}" for i in range(n)]


def _exact_labels(n: int, prevalence: float, rng: np.random.Generator) -> np.ndarray:
    labels = np.zeros(n, dtype=np.int64)
    labels[rng.permutation(n)[:int(round(prevalence * n))]] = 1
    return labels


def generate_pool(spec: SyntheticPoolSpec) -> List[PooledItem]:
    """Generate a labeled, scored pool; deterministic for a fixed seed"""
    if spec.prevalence * spec.size < 1:
        logger.warning(
            f"Expected positives p·N = {spec.prevalence * spec.size:.3g} < 1; the pool may have none"
        )
    rng = np.random.default_rng(spec.seed)
    if spec.exact_counts:
        labels = _exact_labels(spec.size, spec.prevalence, rng)
    else:
        labels = (rng.random(spec.size) < spec.prevalence).astype(np.int64)

    positive = labels == 1
    a = np.where(positive, 2.0 + spec.separation, 2.0)
    b = np.where(positive, 2.0, 2.0 + spec.separation)
    scores = np.clip(rng.beta(a, b), 0.0, 1.0)

    logger.debug(f"Generated pool of {spec.size} items with {int(labels.sum())} positives")
    return [
        PooledItem(id=item_id, score=float(score), label=int(label))
        for item_id, score, label in zip(_item_ids("item", spec.size), scores, labels)
    ]


def pool_labels(pool: Sequence[PooledItem]) -> np.ndarray:
    if any(item.label is None for item in pool):
        raise InvalidInputError("simulation needs a fully labeled pool")
    return np.fromiter((item.label for item in pool), dtype=np.int64, count=len(pool))


def truth_stratification(strat: Stratification, labels: np.ndarray) -> Stratification:
    """Stratification annotated with every item, so p_h and σ_h are exact"""
    positives = [int(labels[members].sum()) for members in strat.members]
    return strat.with_counts(strat.sizes, positives)


# ---------------------------------------------------------------------------
# Synthetic corpus for the keyword-filter case study
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """
    Labeled texts built from three token families: marker tokens the keyword
    filter should pick up, class cue tokens (own class with probability
    ``cue_fidelity``) and neutral filler drawn the same way for both classes.
    Marker counts are exact: round(rate·class size) texts of each class
    carry one marker token.
    """
    size: int = 50_000
    prevalence: float = 0.059
    marker_tokens: int = 10
    marker_rate_positive: float = 0.33
    marker_rate_negative: float = 0.015
    cue_tokens: int = 4
    cue_vocabulary: int = 50
    cue_fidelity: float = 0.75
    neutral_vocabulary: int = 200
    neutral_tokens: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.size < 2:
            raise InvalidInputError("corpus needs at least two texts")
        if not 0.0 < self.prevalence < 1.0:
            raise InvalidInputError(f"prevalence must lie in (0, 1), got {self.prevalence}")
        for name in ("marker_rate_positive", "marker_rate_negative", "cue_fidelity"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if self.marker_tokens < 1 or self.neutral_vocabulary < 1 or self.cue_vocabulary < 1:
            raise InvalidInputError("token vocabularies must be non-empty")
        if self.cue_tokens < 0 or self.neutral_tokens < 0:
            raise InvalidInputError("token counts must be non-negative")


def generate_corpus(spec: SyntheticCorpusSpec) -> List[Tuple[str, int]]:
    """(text, label) pairs; deterministic for a fixed seed"""
    rng = np.random.default_rng(spec.seed)
    n = spec.size
    labels = _exact_labels(n, spec.prevalence, rng)
    positives = np.flatnonzero(labels == 1)
    negatives = np.flatnonzero(labels == 0)

    has_marker = np.zeros(n, dtype=bool)
    for members, rate in ((positives, spec.marker_rate_positive), (negatives, spec.marker_rate_negative)):
        count = min(int(round(rate * members.size)), members.size)
        has_marker[rng.choice(members, size=count, replace=False)] = True

    markers = rng.integers(0, spec.marker_tokens, size=n)
    neutral = rng.integers(0, spec.neutral_vocabulary, size=(n, spec.neutral_tokens))
    cue_ids = rng.integers(0, spec.cue_vocabulary, size=(n, spec.cue_tokens))
    own_class = rng.random((n, spec.cue_tokens)) < spec.cue_fidelity

    corpus = []
    for i in range(n):
        tokens = [f"word{j:03d}" for j in neutral[i]]
        for j, own in zip(cue_ids[i], own_class[i]):
            positive_cue = own == bool(labels[i])
            tokens.append(f"{'pos' if positive_cue else 'neg'}cue{j:02d}")
        if has_marker[i]:
            tokens.append(f"marker{markers[i]:02d}")
        order = rng.permutation(len(tokens))
        corpus.append((" ".join(tokens[k] for k in order), int(labels[i])))

    logger.debug(
        f"Generated corpus of {n} texts, {positives.size} positive, {int(has_marker.sum())} with markers"
    )
    return corpus


@dataclass
class CaseStudy:
    """Scorer, keyword filter and the exact outcome of filtering a corpus"""
    scorer: UnigramScorer
    keyword_filter: KeywordFilter
    pool: List[PooledItem]
    counts: ConfusionCounts

    @property
    def removed(self) -> List[PooledItem]:
        return [item for item in self.pool if item.filtered]

    @property
    def visible(self) -> List[PooledItem]:
        return [item for item in self.pool if not item.filtered]


def run_case_study(corpus: Sequence[Tuple[str, int]], k: int = 10,
                   hyperparams: Optional[ScorerHyperparams] = None) -> CaseStudy:
    """
    Train a scorer on the corpus, filter on its top-k unigrams and score
    every text; the visible pool is what a recall audit samples from.
    """
    scorer = train_unigram_scorer(corpus, hyperparams)
    keyword_filter = build_keyword_filter(scorer, k)
    pool = score_pool_from_corpus(corpus, scorer, keyword_filter)
    counts = keyword_filter.confusion(corpus)
    logger.info(
        f"Filter removed {int(counts.tp + counts.fp)} of {len(pool)} texts "
        f"(precision {counts.precision:.3f}, recall {counts.recall:.3f})"
    )
    return CaseStudy(scorer=scorer, keyword_filter=keyword_filter, pool=pool, counts=counts)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

class ExperimentConfig(BaseModel):
    """
    Monte-Carlo grid over prevalence × binning × allocation.

    ``pool_path`` replaces the synthetic pool with a labeled JSONL pool;
    the prevalence axis is then the pool's own.
    """
    model_config = ConfigDict(extra="forbid")

    pool_path: Optional[str] = None
    pool_size: int = Field(50_000, ge=1)
    prevalences: List[float] = Field(default_factory=lambda: [0.041], min_length=1)
    separation: float = Field(4.0, ge=0.0)
    exact_counts: bool = True
    binning: List[str] = Field(default_factory=lambda: ["quantile:8"], min_length=1)
    allocations: List[str] = Field(default_factory=lambda: ["equal", "optimal", "pilot:50"], min_length=1)
    include_random: bool = True
    relative_halfwidth: float = Field(0.20, gt=0.0, lt=1.0)
    confidence: float = Field(0.95, gt=0.0, lt=1.0)
    trials: int = Field(30, ge=1)
    seed: int = 0
    pseudocounts: bool = True
    reuse_pilot: bool = True
    min_sequential: int = Field(30, ge=1)

    @field_validator("prevalences")
    @classmethod
    def _check_prevalences(cls, values: List[float]) -> List[float]:
        for p in values:
            if not 0.0 < p < 1.0:
                raise ValueError(f"prevalence must lie in (0, 1), got {p}")
        return values

    @field_validator("binning")
    @classmethod
    def _check_binning(cls, values: List[str]) -> List[str]:
        return [str(BinningSpec.parse(v)) for v in values]

    @field_validator("allocations")
    @classmethod
    def _check_allocations(cls, values: List[str]) -> List[str]:
        return [RANDOM if v.strip().lower() == RANDOM else str(AllocationSpec.parse(v)) for v in values]

    @property
    def target(self) -> PrecisionTarget:
        return PrecisionTarget(self.relative_halfwidth, self.confidence)

    def points(self) -> List["ExperimentPoint"]:
        """Every grid point; random sampling once per prevalence"""
        prevalences = self.prevalences[:1] if self.pool_path else self.prevalences
        stratified = [a for a in self.allocations if a != RANDOM]
        with_random = self.include_random or RANDOM in self.allocations
        points = []
        for p in prevalences:
            if with_random:
                points.append(ExperimentPoint(prevalence=p))
            for binning in self.binning:
                for allocation in stratified:
                    points.append(ExperimentPoint(
                        prevalence=p,
                        binning=BinningSpec.parse(binning),
                        allocation=AllocationSpec.parse(allocation),
                    ))
        return points


@dataclass(frozen=True)
class ExperimentPoint:
    """One grid cell; no allocation means random sampling"""
    prevalence: float
    binning: Optional[BinningSpec] = None
    allocation: Optional[AllocationSpec] = None

    @property
    def method(self) -> str:
        return RANDOM if self.allocation is None else str(self.allocation)

    @property
    def label(self) -> str:
        if self.allocation is None:
            return f"random p={self.prevalence:g}"
        return f"{self.binning} {self.allocation} p={self.prevalence:g}"


@dataclass(frozen=True)
class TrialResult:
    method: str
    binning: Optional[str]
    prevalence: float
    trial_index: int
    annotations: int
    estimate: PrevalenceEstimate
    met_target: bool
    planned_budget: Optional[int] = None
    seed: Optional[int] = None

    @property
    def achieved_cv(self) -> float:
        return self.estimate.cv


@dataclass(frozen=True)
class ExperimentRow:
    """Aggregate over the trials of one grid point"""
    method: str
    binning: Optional[str]
    num_bins: Optional[int]
    pilot_per_stratum: Optional[int]
    prevalence: float
    true_prevalence: float
    trials: int
    mean_cost: float
    std_cost: float
    se_cost: float
    mean_estimate: float
    std_estimate: float
    met_target_rate: float
    analytic_random: Optional[int]

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: List[ExperimentRow] = field(default_factory=list)
    trials: List[TrialResult] = field(default_factory=list)

    def row(self, method: str, binning: Optional[str] = None,
            prevalence: Optional[float] = None) -> ExperimentRow:
        """The single row matching the given method, binning and prevalence"""
        matches = [
            r for r in self.rows
            if r.method == method
            and (binning is None or r.binning == binning)
            and (prevalence is None or math.isclose(r.prevalence, prevalence))
        ]
        if len(matches) != 1:
            raise KeyError(f"{len(matches)} rows match {method} {binning} {prevalence}")
        return matches[0]


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

@dataclass
class TrialContext:
    """Pool and its binning shared by every trial of a grid point"""
    pool: List[PooledItem]
    labels: np.ndarray
    strat: Optional[Stratification] = None
    truth: Optional[Stratification] = None

    @property
    def true_prevalence(self) -> float:
        return float(self.labels.mean())


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _prevalence_key(p: float) -> int:
    return int(round(p * 1e9))


def _sequential_random_trial(labels: np.ndarray, target: PrecisionTarget, seed: int,
                             min_sequential: int) -> Tuple[int, PrevalenceEstimate]:
    """
    Annotate in random order until the running estimate's CV reaches the
    target, after at least ``min_sequential`` labels and one positive.
    """
    rng = np.random.default_rng(seed)
    n_pool = labels.size
    order = rng.permutation(n_pool)
    hits = np.cumsum(labels[order])
    n = np.arange(1, n_pool + 1)
    p = hits / n
    with np.errstate(divide="ignore", invalid="ignore"):
        cv = np.sqrt((1.0 - p) / (n * p))
    reached = (n >= min_sequential) & (hits > 0) & (cv <= target.cv_required * (1.0 + 1e-12))
    stops = np.flatnonzero(reached)
    stop = int(stops[0]) + 1 if stops.size else n_pool

    oracle = PoolOracle(labels)
    sample = LabeledSample.from_labels(oracle.reveal(order[:stop]))
    return oracle.consumed, estimate_random(sample, target.confidence)


def _sequential_single_stratum_trial(strat: Stratification, labels: np.ndarray, target: PrecisionTarget,
                                     seed: int, min_sequential: int,
                                     kind: str) -> Tuple[int, PrevalenceEstimate]:
    """
    Sequential stopping within the only non-empty stratum of ``strat``

    Items of the stratum are annotated in random order until the stratified
    estimator's CV, without population correction, reaches the target. The
    estimate comes from the stratified estimator on the annotated counts.
    """
    h = next(i for i, s in enumerate(strat.strata) if not s.is_empty)
    members = strat.members[h]
    weight = members.size / strat.total_size
    rng = np.random.default_rng(seed)
    order = members[rng.permutation(members.size)]
    hits = np.cumsum(labels[order])
    n = np.arange(1, members.size + 1)
    point = weight * hits / n
    with np.errstate(divide="ignore", invalid="ignore"):
        p = hits / n
        cv = np.sqrt(weight ** 2 * p * (1.0 - p) / n) / point
    reached = (n >= min_sequential) & (hits > 0) & (cv <= target.cv_required * (1.0 + 1e-12))
    stops = np.flatnonzero(reached)
    stop = int(stops[0]) + 1 if stops.size else members.size

    oracle = PoolOracle(labels)
    revealed = oracle.reveal(order[:stop])
    annotated = np.zeros(strat.num_strata, dtype=np.int64)
    positives = np.zeros(strat.num_strata, dtype=np.int64)
    annotated[h], positives[h] = stop, int(revealed.sum())
    estimate = estimate_stratified(strat.with_counts(annotated, positives), target.confidence,
                                   apply_fpc=False, allocation_kind=kind)
    return oracle.consumed, estimate


def _smallest_pilot_budget(draw: PilotDraw, truth: Stratification, variance_required: float) -> int:
    """
    Smallest total budget whose pilot-driven allocation gives the estimator
    the required variance under the true stratum deviations.
    """
    sizes, sigmas = truth.sizes, truth.sigmas

    def variance_at(budget: int) -> float:
        return stratified_variance(sizes, sigmas, draw.realized_allocation(budget))

    high = int(truth.total_size)
    if variance_at(high) > variance_required:
        return high
    low = 1
    while low < high:
        middle = (low + high) // 2
        if variance_at(middle) <= variance_required:
            high = middle
        else:
            low = middle + 1
    return low


class ExperimentRunner:
    """
    Runs the trials of an experiment grid

    Pools and binnings are built once per prevalence and binning and reused
    by every trial; only the sampling differs between trials.
    """

    def __init__(self, config: ExperimentConfig, show_progress: bool = False):
        self.config = config
        self.target = config.target
        self.show_progress = show_progress
        self._pools: Dict[int, TrialContext] = {}
        self._binned: Dict[Tuple[int, str], TrialContext] = {}

    def _pool_context(self, prevalence: float) -> TrialContext:
        key = _prevalence_key(prevalence)
        if key not in self._pools:
            if self.config.pool_path:
                from .pool_io import ingest_pool
                pool = ingest_pool(self.config.pool_path)
            else:
                pool = generate_pool(SyntheticPoolSpec(
                    size=self.config.pool_size,
                    prevalence=prevalence,
                    separation=self.config.separation,
                    exact_counts=self.config.exact_counts,
                    seed=_seed(self.config.seed, key),
                ))
            self._pools[key] = TrialContext(pool=pool, labels=pool_labels(pool))
        return self._pools[key]

    def context(self, point: ExperimentPoint) -> TrialContext:
        base = self._pool_context(point.prevalence)
        if point.binning is None:
            return base
        key = (_prevalence_key(point.prevalence), str(point.binning))
        if key not in self._binned:
            strat = bin_pool(base.pool, point.binning)
            self._binned[key] = TrialContext(
                pool=base.pool,
                labels=base.labels,
                strat=strat,
                truth=truth_stratification(strat, base.labels),
            )
        return self._binned[key]

    def trial_seed(self, point: ExperimentPoint, trial_index: int) -> int:
        """Seed of one trial, distinct per grid point and stable across runs"""
        return _seed(self.config.seed, 1, zlib.crc32(point.label.encode("utf-8")), trial_index)

    def run_trial(self, point: ExperimentPoint, trial_index: int) -> TrialResult:
        """
        One trial of a grid point

        Random sampling annotates sequentially until the target CV is reached.
        Equal and optimal allocation annotate the budget their planner gives
        on the pool's true stratum rates; pilot allocation annotates its pilot,
        then the smallest budget that meets the target under the true rates.
        A binning with one non-empty stratum has no split for a planner to
        exploit, so equal and optimal allocation stop sequentially inside it.
        """
        ctx = self.context(point)
        seed = self.trial_seed(point, trial_index)
        target = self.target
        planned = None

        single_stratum = ctx.strat is not None and ctx.strat.non_empty == 1
        if point.allocation is None:
            cost, estimate = _sequential_random_trial(
                ctx.labels, target, seed, self.config.min_sequential
            )
        elif single_stratum and point.allocation.kind != "pilot":
            cost, estimate = _sequential_single_stratum_trial(
                ctx.strat, ctx.labels, target, seed, self.config.min_sequential, point.allocation.kind
            )
        else:
            strat, truth = ctx.strat, ctx.truth
            oracle = PoolOracle(ctx.labels)
            kind = point.allocation.kind
            if kind == "equal":
                planned = min(samples_needed_stratified_equal(truth, target), strat.total_size)
                allocation = allocate_equal(strat, planned)
                annotated = sample_allocation(strat, allocation, oracle, seed)
            elif kind == "optimal":
                planned = min(samples_needed_stratified_optimal(truth, target), strat.total_size)
                allocation = ensure_each_sampled(allocate_neyman(truth, planned), strat)
                annotated = sample_allocation(strat, allocation, oracle, seed)
            else:
                draw = draw_pilot(strat, PilotConfig(
                    pilot_per_stratum=point.allocation.pilot_per_stratum,
                    pseudocounts=self.config.pseudocounts,
                    seed=seed,
                ), oracle)
                variance_required = required_se(ctx.true_prevalence, target) ** 2
                planned = _smallest_pilot_budget(draw, truth, variance_required)
                _, annotated = complete_pilot(strat, draw, planned, oracle, self.config.reuse_pilot)
            cost = oracle.consumed
            estimate = estimate_stratified(annotated, target.confidence, allocation_kind=kind)

        return TrialResult(
            method=point.method,
            binning=None if point.binning is None else str(point.binning),
            prevalence=point.prevalence,
            trial_index=trial_index,
            annotations=int(cost),
            estimate=estimate,
            met_target=bool(estimate.cv <= target.cv_required),
            planned_budget=planned,
            seed=seed,
        )

    def _summarize(self, point: ExperimentPoint, results: List[TrialResult]) -> ExperimentRow:
        costs = np.array([r.annotations for r in results], dtype=float)
        estimates = np.array([r.estimate.point for r in results], dtype=float)
        spread = float(costs.std(ddof=1)) if costs.size > 1 else 0.0
        true_p = self.context(point).true_prevalence
        analytic = samples_needed_random(true_p, self.target) if 0.0 < true_p < 1.0 else None
        return ExperimentRow(
            method=point.method,
            binning=None if point.binning is None else point.binning.method,
            num_bins=None if point.binning is None else point.binning.num_bins,
            pilot_per_stratum=(
                point.allocation.pilot_per_stratum
                if point.allocation is not None and point.allocation.kind == "pilot" else None
            ),
            prevalence=point.prevalence,
            true_prevalence=true_p,
            trials=len(results),
            mean_cost=float(costs.mean()),
            std_cost=spread,
            se_cost=spread / math.sqrt(costs.size),
            mean_estimate=float(estimates.mean()),
            std_estimate=float(estimates.std(ddof=1)) if estimates.size > 1 else 0.0,
            met_target_rate=float(np.mean([r.met_target for r in results])),
            analytic_random=analytic,
        )

    def run(self) -> ExperimentResult:
        points = self.config.points()
        result = ExperimentResult(config=self.config)
        logger.info(f"Running {len(points)} grid points × {self.config.trials} trials")
        with tqdm(total=len(points) * self.config.trials, disable=not self.show_progress,
                  desc="trials", unit="trial") as progress:
            for point in points:
                progress.set_postfix_str(point.label)
                results = []
                for trial_index in range(self.config.trials):
                    results.append(self.run_trial(point, trial_index))
                    progress.update(1)
                result.trials.extend(results)
                result.rows.append(self._summarize(point, results))
        return result


def run_trial(cfg: ExperimentConfig, point: ExperimentPoint, trial_index: int) -> TrialResult:
    """A single trial; trials with the same seed and index are identical"""
    return ExperimentRunner(cfg).run_trial(point, trial_index)


def run_experiment(cfg: ExperimentConfig, show_progress: bool = False) -> ExperimentResult:
    return ExperimentRunner(cfg, show_progress).run()
