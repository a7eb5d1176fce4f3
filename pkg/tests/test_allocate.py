#!/usr/bin/env python3
"""
Test equal, Neyman and pilot allocation and the annotation oracle
"""

import math

import numpy as np
import pytest

from recallaudit.allocate import (
    Allocation,
    AllocationSpec,
    AnnotationOracle,
    PilotConfig,
    PilotDraw,
    PoolOracle,
    allocate_equal,
    allocate_neyman,
    complete_pilot,
    ensure_each_sampled,
    pilot_sigmas,
    run_pilot,
    sample_allocation,
)
from recallaudit.errors import DegenerateAllocationError, InvalidInputError
from recallaudit.estimation import PooledItem, estimate_stratified, stratified_variance
from recallaudit.plan import PrecisionTarget
from recallaudit.simulation import SyntheticPoolSpec, generate_pool, pool_labels
from recallaudit.stratify import bin_quantile


def test_equal_allocation_remainder(stratification_factory):
    strat = stratification_factory([100, 100, 100])
    assert allocate_equal(strat, 10).per_stratum == (4, 3, 3)


def test_equal_allocation_clamps_small_strata(stratification_factory):
    strat = stratification_factory([2, 100, 100])
    assert allocate_equal(strat, 30).per_stratum == (2, 14, 14)


def test_equal_allocation_skips_empty_strata(stratification_factory):
    strat = stratification_factory([0, 50, 50])
    assert allocate_equal(strat, 10).per_stratum == (0, 5, 5)
    with pytest.raises(InvalidInputError):
        allocate_equal(strat, 1)


def test_neyman_allocation(stratification_factory):
    strat = stratification_factory([1000, 1000]).with_sigmas([0.1, 0.3])
    allocation = allocate_neyman(strat, 100)
    assert allocation.per_stratum == (25, 75)
    assert allocation.kind == "optimal"


def test_neyman_saturation_redistributes(stratification_factory):
    strat = stratification_factory([10, 1000]).with_sigmas([0.5, 0.01])
    assert allocate_neyman(strat, 300).per_stratum == (10, 290)


def test_neyman_rounding_preserves_total(stratification_factory):
    rng = np.random.default_rng(5)
    for _ in range(50):
        sizes = rng.integers(100, 1000, size=6)
        strat = stratification_factory(list(sizes)).with_sigmas(rng.random(6) * 0.5)
        n = int(rng.integers(10, 500))
        assert allocate_neyman(strat, n).total == n


def test_neyman_degenerate(stratification_factory):
    strat = stratification_factory([100, 100]).with_sigmas([0.0, 0.0])
    with pytest.raises(DegenerateAllocationError):
        allocate_neyman(strat, 10)


def test_neyman_minimises_variance(stratification_factory):
    sizes = [4000, 3000, 2000, 1000]
    sigmas = [0.05, 0.1, 0.3, 0.45]
    strat = stratification_factory(sizes).with_sigmas(sigmas)
    n = 400
    best = stratified_variance(sizes, sigmas, allocate_neyman(strat, n).per_stratum)
    rng = np.random.default_rng(17)
    for _ in range(1000):
        shares = rng.dirichlet(np.ones(4))
        other = np.floor(shares * n).astype(int)
        other[0] += n - other.sum()
        assert best <= stratified_variance(sizes, sigmas, other)


def test_ensure_each_sampled(stratification_factory):
    strat = stratification_factory([0, 10, 10])
    allocation = ensure_each_sampled(Allocation((0, 0, 5), "optimal"), strat)
    assert allocation.per_stratum == (0, 1, 5)


def test_allocation_spec_parse():
    assert AllocationSpec.parse("pilot:20") == AllocationSpec("pilot", 20)
    assert AllocationSpec.parse("neyman").kind == "optimal"
    assert str(AllocationSpec.parse("equal")) == "equal"
    with pytest.raises(InvalidInputError):
        AllocationSpec.parse("greedy")


def test_pilot_sigmas_with_pseudocounts():
    sigmas = pilot_sigmas([50, 50, 0], [0, 25, 0])
    assert sigmas[0] == pytest.approx(math.sqrt(1 / 52 * 51 / 52))
    assert sigmas[1] == pytest.approx(0.5)
    assert sigmas[2] == 0.0
    assert pilot_sigmas([50], [0], pseudocounts=False)[0] == 0.0


def test_oracle_charges_each_item_once():
    oracle = PoolOracle(np.array([0, 1, 1, 0]), ["a", "b", "c", "d"])
    assert list(oracle.reveal(np.array([1, 2]))) == [1, 1]
    oracle.reveal(np.array([2, 3]))
    assert oracle.annotate("b") == 1
    assert oracle.consumed == 3
    with pytest.raises(InvalidInputError):
        oracle.annotate("zz")


def test_oracle_needs_labels():
    with pytest.raises(InvalidInputError):
        PoolOracle.from_pool([PooledItem(id="a", score=0.2)])


def test_pilot_with_fixed_budget(small_pool):
    strat = bin_quantile(small_pool, 8)
    oracle = PoolOracle.from_pool(small_pool)
    cfg = PilotConfig(pilot_per_stratum=20, total_budget=600, seed=3)
    allocation, annotated = run_pilot(small_pool, strat, cfg, oracle)
    assert allocation.kind == "pilot"
    assert all(n >= 20 for n in allocation.per_stratum)
    assert allocation.total <= 600 + 8 * 20
    assert oracle.consumed == allocation.total
    assert list(annotated.annotated) == list(allocation.per_stratum)
    assert 0.0 < estimate_stratified(annotated, allocation_kind="pilot").point < 1.0


def test_pilot_exhausts_small_strata(stratification_factory):
    labels = np.array([1, 0, 0] + [0] * 97 + [1] * 20)
    strat = stratification_factory([3, 97, 20])
    oracle = PoolOracle(labels)
    pool = [PooledItem(id=f"i{j}", score=0.5, label=int(y)) for j, y in enumerate(labels)]
    allocation, annotated = run_pilot(pool, strat, PilotConfig(pilot_per_stratum=10, total_budget=40), oracle)
    assert allocation.exhausted[0]
    assert allocation.per_stratum[0] == 3
    assert annotated.strata[0].positives == 1


def test_pilot_plans_its_budget(small_pool):
    strat = bin_quantile(small_pool, 4)
    oracle = PoolOracle.from_pool(small_pool)
    allocation, annotated = run_pilot(
        small_pool, strat, PilotConfig(pilot_per_stratum=30, seed=1), oracle, PrecisionTarget(0.2)
    )
    assert allocation.total >= 4 * 30
    assert estimate_stratified(annotated).n_total == allocation.total




class _ListOracle:
    """Minimal label source keyed by pool position"""

    def __init__(self, labels):
        self.labels = list(labels)
        self.seen = set()

    @property
    def consumed(self):
        return len(self.seen)

    def annotate(self, item_id):
        return int(self.reveal(np.array([int(item_id[1:])]))[0])

    def reveal(self, positions):
        self.seen.update(int(p) for p in positions)
        return np.array([self.labels[int(p)] for p in positions])


def _two_strata_pool(labels):
    return [PooledItem(id=f"i{j}", score=0.5, label=int(y)) for j, y in enumerate(labels)]


def test_pilot_runs_against_any_oracle(stratification_factory):
    labels = [0] * 40
    oracle: AnnotationOracle = _ListOracle(labels)
    strat = stratification_factory([20, 20])
    allocation, annotated = run_pilot(
        _two_strata_pool(labels), strat, PilotConfig(pilot_per_stratum=5, total_budget=10), oracle
    )
    assert allocation.per_stratum == (5, 5)
    assert oracle.consumed == 10
    assert list(annotated.annotated) == [5, 5]


def test_pilot_covering_its_share_draws_nothing_more(stratification_factory):
    labels = np.zeros(40, dtype=int)
    strat = stratification_factory([20, 20])
    for reuse in (True, False):
        oracle = PoolOracle(labels)
        cfg = PilotConfig(pilot_per_stratum=5, total_budget=10, reuse_pilot=reuse, seed=4)
        allocation, annotated = run_pilot(_two_strata_pool(labels), strat, cfg, oracle)
        assert allocation.per_stratum == (5, 5)
        assert oracle.consumed == 10
        assert list(annotated.annotated) == [5, 5]


def test_pilot_top_up_follows_pseudocount_shares(stratification_factory):
    strat = stratification_factory([1000, 1000])
    labels = np.zeros(2000, dtype=int)
    labels[[1000, 1001]] = 1
    annotated, positives = np.array([50, 50]), np.array([0, 2])
    planning = strat.with_counts(annotated, positives).with_sigmas(pilot_sigmas(annotated, positives))
    assert list(planning.sigmas) == pytest.approx([math.sqrt(1 / 52 * 51 / 52), math.sqrt(3 / 52 * 49 / 52)])
    draw = PilotDraw(orders=strat.members, annotated=annotated, positives=positives, planning=planning)
    assert list(draw.realized_allocation(300)) == [111, 189]

    oracle = PoolOracle(labels)
    allocation, counted = complete_pilot(strat, draw, 300, oracle)
    assert allocation.per_stratum == (111, 189)
    assert oracle.consumed == 61 + 139
    assert list(counted.positives) == [0, 2]


def test_pilot_needs_budget_or_target(small_pool):
    strat = bin_quantile(small_pool, 4)
    with pytest.raises(InvalidInputError):
        run_pilot(small_pool, strat, PilotConfig(), PoolOracle.from_pool(small_pool))


def test_pilot_without_reuse_estimates_from_top_up(small_pool):
    strat = bin_quantile(small_pool, 4)
    oracle = PoolOracle.from_pool(small_pool)
    cfg = PilotConfig(pilot_per_stratum=20, total_budget=400, reuse_pilot=False, seed=2)
    allocation, annotated = run_pilot(small_pool, strat, cfg, oracle)
    assert oracle.consumed == allocation.total
    assert all(0 < n < a for n, a in zip(annotated.annotated, allocation.per_stratum))
    assert annotated.annotated.sum() == allocation.total - 4 * 20


def test_sample_allocation_is_seeded(small_pool):
    labels = pool_labels(small_pool)
    strat = bin_quantile(small_pool, 4)
    allocation = allocate_equal(strat, 200)
    first = sample_allocation(strat, allocation, PoolOracle(labels), seed=7)
    second = sample_allocation(strat, allocation, PoolOracle(labels), seed=7)
    assert list(first.positives) == list(second.positives)
    with pytest.raises(InvalidInputError):
        sample_allocation(strat, Allocation((5000, 0, 0, 0), "equal"), PoolOracle(labels))


@pytest.mark.slow
def test_pipeline_estimating_from_top_up_is_unbiased():
    """Pilot pipeline with reuse_pilot=False: strata are estimated from their top-up draws"""
    pool = generate_pool(SyntheticPoolSpec(size=20_000, prevalence=0.05, seed=21))
    labels = pool_labels(pool)
    strat = bin_quantile(pool, 8)
    points = []
    for trial in range(10_000):
        cfg = PilotConfig(pilot_per_stratum=50, total_budget=2000, reuse_pilot=False, seed=trial)
        _, annotated = run_pilot(pool, strat, cfg, PoolOracle(labels))
        points.append(estimate_stratified(annotated, allocation_kind="pilot").point)
    points = np.array(points)
    se = points.std(ddof=1) / math.sqrt(points.size)
    assert abs(points.mean() - labels.mean()) <= 3 * se


@pytest.mark.slow
def test_default_pilot_reuse_bias_is_small():
    """Pilot pipeline with the default reuse_pilot=True: pilot labels join the estimate"""
    pool = generate_pool(SyntheticPoolSpec(size=20_000, prevalence=0.05, seed=21))
    labels = pool_labels(pool)
    strat = bin_quantile(pool, 8)
    points = []
    for trial in range(2000):
        cfg = PilotConfig(pilot_per_stratum=50, total_budget=2000, seed=trial)
        _, annotated = run_pilot(pool, strat, cfg, PoolOracle(labels))
        points.append(estimate_stratified(annotated, allocation_kind="pilot").point)
    points = np.array(points)
    assert abs(points.mean() - labels.mean()) <= 0.2 * points.std(ddof=1)
