#!/usr/bin/env python3
"""
Test sample-size planning for random and stratified sampling
"""

import numpy as np
import pytest

from recallaudit.allocate import (
    PoolOracle,
    allocate_equal,
    allocate_neyman,
    ensure_each_sampled,
    sample_allocation,
)
from recallaudit.errors import InvalidInputError, UndefinedTargetError
from recallaudit.estimation import estimate_stratified
from recallaudit.plan import (
    PrecisionTarget,
    efficiency_gain,
    power_table,
    required_se,
    samples_needed_random,
    samples_needed_stratified_equal,
    samples_needed_stratified_optimal,
)
from recallaudit.simulation import SyntheticPoolSpec, generate_pool, pool_labels, truth_stratification
from recallaudit.stratify import bin_quantile

RANDOM_SAMPLING_TABLE = {
    0.1: (865, 3458, 13830),
    0.059: (1532, 6127, 24508),
    0.01: (9508, 38031, 152122),
    0.001: (95941, 383762, 1535047),
}


@pytest.mark.parametrize("p", sorted(RANDOM_SAMPLING_TABLE))
def test_random_sampling_table(p):
    for r, expected in zip((0.20, 0.10, 0.05), RANDOM_SAMPLING_TABLE[p]):
        assert samples_needed_random(p, PrecisionTarget(r)) == expected


def test_power_table_matches_cells():
    table = power_table()
    assert table[0.059][0.20] == 1532
    assert table[0.001][0.05] == 1535047


def test_unfiltered_prevalence_budget():
    assert samples_needed_random(0.041, PrecisionTarget(0.2)) == 2247


def test_target_properties():
    target = PrecisionTarget(0.2)
    assert target.cv_required == pytest.approx(0.2 / 1.959964, rel=1e-6)
    assert required_se(0.05, target) == pytest.approx(0.01 / 1.959964, rel=1e-6)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidInputError):
            PrecisionTarget(bad)
    with pytest.raises(InvalidInputError):
        samples_needed_random(0.0, target)


def test_single_stratum_reduces_to_random(stratification_factory):
    strat = stratification_factory([1000], [1000], [59])
    target = PrecisionTarget(0.2)
    assert samples_needed_stratified_equal(strat, target) == 1532
    assert samples_needed_stratified_optimal(strat, target) == 1532


def test_optimal_needs_no_more_than_equal(stratification_factory):
    strat = stratification_factory([2500] * 4, [2500] * 4, [5, 20, 100, 800])
    target = PrecisionTarget(0.1)
    equal = samples_needed_stratified_equal(strat, target)
    optimal = samples_needed_stratified_optimal(strat, target)
    assert optimal <= equal
    assert equal < samples_needed_random(925 / 10_000, target)


def test_zero_prevalence_target_undefined(stratification_factory):
    strat = stratification_factory([100, 100], [100, 100], [0, 0])
    with pytest.raises(UndefinedTargetError):
        samples_needed_stratified_equal(strat, PrecisionTarget(0.2))


def test_zero_variance_strata_need_structural_minimum(stratification_factory):
    strat = stratification_factory([100, 100], [100, 100], [0, 100])
    assert samples_needed_stratified_equal(strat, PrecisionTarget(0.2)) == 2
    assert samples_needed_stratified_optimal(strat, PrecisionTarget(0.2)) == 2


def test_efficiency_gain():
    assert efficiency_gain(2247, 1000) == pytest.approx(1 - 1000 / 2247)
    with pytest.raises(InvalidInputError):
        efficiency_gain(0, 10)


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["equal", "optimal"])
def test_stratified_budgets_meet_their_target(kind):
    pool = generate_pool(SyntheticPoolSpec(size=10_000, prevalence=0.05, separation=2.0, seed=6))
    labels = pool_labels(pool)
    strat = bin_quantile(pool, 4)
    truth = truth_stratification(strat, labels)
    target = PrecisionTarget(0.2)
    if kind == "equal":
        allocation = allocate_equal(strat, samples_needed_stratified_equal(truth, target))
    else:
        n = samples_needed_stratified_optimal(truth, target)
        allocation = ensure_each_sampled(allocate_neyman(truth, n), strat)
    points = np.array([
        estimate_stratified(sample_allocation(strat, allocation, PoolOracle(labels), seed=trial)).point
        for trial in range(2000)
    ])
    assert points.std(ddof=1) <= 1.05 * required_se(labels.mean(), target)
