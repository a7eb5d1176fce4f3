#!/usr/bin/env python3
"""
Test equal-width, quantile and oracle binning
"""

import logging

import numpy as np
import pytest

from recallaudit.errors import InvalidInputError
from recallaudit.estimation import PooledItem
from recallaudit.simulation import SyntheticPoolSpec, generate_pool, pool_labels
from recallaudit.stratify import (
    BinningSpec,
    apply_stratification,
    assign_strata,
    bin_equal_width,
    bin_oracle,
    bin_pool,
    bin_quantile,
    neyman_objective,
)


def _pool(scores, labels=None):
    labels = labels if labels is not None else [None] * len(scores)
    return [PooledItem(id=f"i{j}", score=s, label=y) for j, (s, y) in enumerate(zip(scores, labels))]


def test_equal_width_boundaries():
    strat = bin_equal_width(_pool([0.0, 0.1, 0.5, 0.8, 1.0]), 4)
    assert strat.boundaries == (0.0, 0.25, 0.5, 0.75, 1.0)
    assert list(strat.sizes) == [2, 0, 1, 2]


def test_boundary_scores_go_up():
    boundaries = (0.0, 0.25, 0.5, 0.75, 1.0)
    assert list(assign_strata(np.array([0.0, 0.25, 0.5, 0.999, 1.0]), boundaries)) == [0, 1, 2, 3, 3]


def test_quantile_bins_are_balanced():
    scores = np.linspace(0.0, 1.0, 1000)
    strat = bin_quantile(_pool(scores), 8)
    assert list(strat.sizes) == [125] * 8
    assert sum(len(m) for m in strat.members) == 1000


def test_quantile_never_splits_ties(caplog):
    pool = _pool([0.1] * 6 + [0.9] * 4)
    with caplog.at_level(logging.WARNING):
        strat = bin_quantile(pool, 2)
    assert list(strat.sizes) == [6, 4]
    assert "Tied scores" in caplog.text


def test_heavy_ties_merge_quantile_bins(caplog):
    with caplog.at_level(logging.WARNING):
        strat = bin_quantile(_pool([0.5] * 20 + [0.6]), 4)
    assert all(a < b for a, b in zip(strat.boundaries, strat.boundaries[1:]))
    assert list(strat.sizes) == [20, 1]
    assert "merged quantile bins" in caplog.text


def test_identical_scores_give_one_stratum(caplog):
    with caplog.at_level(logging.WARNING):
        strat = bin_quantile(_pool([0.5] * 12), 4)
    assert "Tied scores" in caplog.text
    assert strat.boundaries == (0.0, 1.0)
    assert list(strat.sizes) == [12]


def test_membership_is_a_function_of_score():
    rng = np.random.default_rng(0)
    scores = np.round(rng.random(2000), 2)
    strat = bin_quantile(_pool(scores), 8)
    index = np.empty(scores.size, dtype=int)
    for h, members in enumerate(strat.members):
        index[members] = h
    for value in np.unique(scores):
        assert np.unique(index[scores == value]).size == 1


def test_too_many_bins():
    with pytest.raises(InvalidInputError):
        bin_quantile(_pool([0.1, 0.2, 0.3]), 4)


def test_empty_pool():
    with pytest.raises(InvalidInputError):
        bin_equal_width([], 4)


def test_oracle_requirements():
    with pytest.raises(InvalidInputError):
        bin_oracle(_pool([0.1, 0.9], [0, 1]), 3)
    with pytest.raises(InvalidInputError):
        bin_oracle(_pool([0.1, 0.9]), 2)


def test_oracle_separates_labels():
    pool = _pool([0.1, 0.2, 0.3, 0.7, 0.8, 0.9], [0, 0, 0, 1, 1, 1])
    strat = bin_oracle(pool, 2)
    assert list(strat.sizes) == [3, 3]
    assert neyman_objective(strat, pool_labels(pool)) == 0.0


def test_oracle_beats_score_binning(small_pool):
    labels = pool_labels(small_pool)
    oracle_two = neyman_objective(bin_oracle(small_pool, 2), labels)
    assert oracle_two <= neyman_objective(bin_quantile(small_pool, 2), labels) + 1e-9
    assert oracle_two <= neyman_objective(bin_equal_width(small_pool, 2), labels) + 1e-9
    oracle_four = neyman_objective(bin_oracle(small_pool, 4), labels)
    assert oracle_four <= neyman_objective(bin_quantile(small_pool, 4), labels)


@pytest.mark.parametrize("seed", range(5))
def test_oracle_split_matches_exhaustive_search(seed):
    rng = np.random.default_rng(seed)
    scores = np.sort(rng.choice(np.arange(1, 100) / 100.0, size=12, replace=False))
    labels = (rng.random(12) < scores).astype(int)
    pool = _pool(scores, [int(y) for y in labels])

    def objective(k):
        total = 0.0
        for part in (labels[:k], labels[k:]):
            p = part.mean()
            total += part.size * np.sqrt(p * (1.0 - p))
        return total

    best = min(objective(k) for k in range(1, 12))
    assert neyman_objective(bin_oracle(pool, 2), labels) == pytest.approx(best)


@pytest.mark.parametrize("num_bins", [4, 8, 16])
def test_oracle_dominates_score_binning(num_bins):
    for seed in range(6):
        pool = generate_pool(SyntheticPoolSpec(size=5000, prevalence=0.05, separation=4.0, seed=seed))
        labels = pool_labels(pool)
        oracle = neyman_objective(bin_oracle(pool, num_bins), labels)
        assert oracle <= neyman_objective(bin_quantile(pool, num_bins), labels) + 1e-9
        assert oracle <= neyman_objective(bin_equal_width(pool, num_bins), labels) + 1e-9


def test_apply_stratification_reuses_boundaries(small_pool):
    strat = bin_quantile(small_pool, 4)
    other = generate_pool(SyntheticPoolSpec(size=1000, prevalence=0.05, seed=9))
    applied = apply_stratification(strat, other)
    assert applied.boundaries == strat.boundaries
    assert applied.total_size == 1000


def test_binning_spec_parse():
    assert BinningSpec.parse("quantile:8") == BinningSpec("quantile", 8)
    assert BinningSpec.parse("quantiles:4").method == "quantile"
    assert str(BinningSpec.parse("oracle:8")) == "oracle:8"
    for bad in ("oracle:6", "bogus:2", "quantile:x", "quantile:0"):
        with pytest.raises(InvalidInputError):
            BinningSpec.parse(bad)


def test_bin_pool_dispatch(small_pool):
    strat = bin_pool(small_pool, BinningSpec("equal-width", 4))
    assert strat.boundaries == (0.0, 0.25, 0.5, 0.75, 1.0)
