#!/usr/bin/env python3
"""
Test recall intervals and the transparency report bundle
"""

import pytest

from recallaudit.errors import InvalidInputError, UndefinedRecallError, UnsampledStratumError, ValidationError
from recallaudit.estimation import PooledItem, PrevalenceEstimate, critical_value
from recallaudit.recall_report import (
    ConfusionCounts,
    build_transparency_report,
    recall_from_counts,
    recall_interval_bootstrap,
    recall_interval_plugin,
    recall_upper_bound,
)


def _unfiltered_prevalence():
    """4.1% ± 20% over the visible pool"""
    return PrevalenceEstimate(
        point=0.041, se=0.0082 / critical_value(0.95), ci_low=0.0328, ci_high=0.0492,
    )


def test_recall_from_counts():
    assert recall_from_counts(30, 70) == pytest.approx(0.3)
    assert recall_from_counts(0, 10) == 0.0
    with pytest.raises(UndefinedRecallError):
        recall_from_counts(0, 0)
    with pytest.raises(InvalidInputError):
        recall_from_counts(-1, 5)


def test_plugin_interval_from_prevalence_interval():
    report = recall_interval_plugin(33_000, 1_634_000, _unfiltered_prevalence())
    assert report.recall_point == pytest.approx(33_000 / (33_000 + 0.041 * 1_634_000))
    low, high = report.recall_ci
    assert low == pytest.approx(0.289, abs=0.005)
    assert high == pytest.approx(0.379, abs=0.005)
    assert report.tp_source == "exact-count"
    assert not report.is_upper_bound


def test_plugin_endpoints_swap():
    """Higher prevalence means lower recall"""
    prev = _unfiltered_prevalence()
    report = recall_interval_plugin(100, 10_000, prev)
    assert report.recall_ci[0] == pytest.approx(recall_from_counts(100, prev.ci_high * 10_000))
    assert report.recall_ci[1] == pytest.approx(recall_from_counts(100, prev.ci_low * 10_000))


def test_zero_true_positives():
    report = recall_interval_plugin(0, 10_000, _unfiltered_prevalence())
    assert report.recall_point == 0.0
    assert report.recall_ci == (0.0, 0.0)


def test_upper_bound_is_flagged():
    prev = _unfiltered_prevalence()
    bound = recall_upper_bound(1680, 28_320, prev)
    exact = recall_interval_plugin(974, 28_320, prev)
    assert bound.is_upper_bound
    assert bound.to_dict()["upper_bound"] is True
    assert bound.recall_point >= exact.recall_point


def test_bootstrap_interval(stratification_factory):
    strat = stratification_factory([20_000, 20_000], [200, 200], [2, 30])
    first = recall_interval_bootstrap((500.0, None), 40_000, strat, B=2000, seed=4)
    second = recall_interval_bootstrap((500.0, None), 40_000, strat, B=2000, seed=4)
    assert first.recall_ci == second.recall_ci
    low, high = first.recall_ci
    assert low < first.recall_point < high
    assert first.tp_source == "exact-count"
    assert first.interval_method == "bootstrap"
    assert first.bootstrap_replicates == 2000


def test_bootstrap_with_estimated_tp_is_wider(stratification_factory):
    strat = stratification_factory([20_000, 20_000], [200, 200], [2, 30])
    exact = recall_interval_bootstrap((500.0, None), 40_000, strat, B=4000, seed=1)
    estimated = recall_interval_bootstrap((500.0, 100.0), 40_000, strat, B=4000, seed=1)
    assert estimated.tp_source == "estimated"
    assert estimated.tp_se == 100.0
    width = lambda r: r.recall_ci[1] - r.recall_ci[0]  # noqa: E731
    assert width(estimated) > width(exact)


def test_bootstrap_rejects_bad_input(stratification_factory):
    strat = stratification_factory([100, 100], [10, 0], [1, 0])
    with pytest.raises(InvalidInputError):
        recall_interval_bootstrap((5.0, None), 200, strat, B=10)
    with pytest.raises(UnsampledStratumError):
        recall_interval_bootstrap((5.0, None), 200, strat, B=1000)


def test_confusion_counts_from_pool():
    pool = [
        PooledItem("a", 0.9, label=1, filtered=True),
        PooledItem("b", 0.8, label=0, filtered=True),
        PooledItem("c", 0.2, label=1, filtered=False),
        PooledItem("d", 0.1, label=0, filtered=False),
        PooledItem("e", 0.1, label=0, filtered=False),
    ]
    counts = ConfusionCounts.from_pool(pool)
    assert (counts.tp, counts.fp, counts.fn, counts.tn) == (1, 1, 1, 2)
    assert counts.accuracy == pytest.approx(0.6)
    assert counts.precision == 0.5
    assert counts.recall == 0.5
    assert counts.f1 == 0.5
    with pytest.raises(InvalidInputError):
        ConfusionCounts.from_pool([PooledItem("x", 0.5, label=1)])


def test_estimated_counts_provenance():
    counts = ConfusionCounts.estimated(974, 706, 28_320, _unfiltered_prevalence())
    assert counts.fn == pytest.approx(0.041 * 28_320)
    assert counts.tn == pytest.approx(28_320 - 0.041 * 28_320)
    assert counts.provenance == {"tp": "exact", "fp": "exact", "tn": "estimated", "fn": "estimated"}
    bounded = ConfusionCounts.estimated(1680, 0, 28_320, _unfiltered_prevalence(), removals_exact=False)
    assert bounded.provenance["tp"] == "estimated"


def test_transparency_report():
    counts = ConfusionCounts(tp=974, fp=706, tn=27159, fn=1161)
    bundle = build_transparency_report(
        counts, _unfiltered_prevalence(), {"total": 30_000, "removed": 1680, "reporting_period": "2026-Q3"}
    )
    assert bundle["metrics"]["precision"] == pytest.approx(974 / 1680)
    assert bundle["reporting_period"] == "2026-Q3"
    assert bundle["prevalence"]["point"] == 0.041
    with pytest.raises(ValidationError):
        build_transparency_report(counts, metadata={"total": 29_999})


def test_undefined_metrics_are_none():
    bundle = build_transparency_report(ConfusionCounts(tp=0, fp=0, tn=10, fn=0))
    assert bundle["metrics"]["precision"] is None
    assert bundle["metrics"]["recall"] is None
    assert bundle["metrics"]["f1"] is None
    assert bundle["metrics"]["accuracy"] == 1.0


def test_plugin_recall_falls_as_prevalence_rises():
    reports = [
        recall_interval_plugin(500, 20_000, PrevalenceEstimate(point=p, se=0.002, ci_low=p - 0.004,
                                                               ci_high=p + 0.004))
        for p in (0.01, 0.02, 0.04, 0.08)
    ]
    points = [r.recall_point for r in reports]
    lows = [r.recall_ci[0] for r in reports]
    highs = [r.recall_ci[1] for r in reports]
    for values in (points, lows, highs):
        assert all(a > b for a, b in zip(values, values[1:]))


def test_bootstrap_without_positives_is_degenerate(stratification_factory):
    strat = stratification_factory([1000, 1000], [100, 100], [0, 0])
    report = recall_interval_bootstrap((40.0, None), 2000, strat, B=1000, seed=3)
    assert report.recall_point == 1.0
    assert report.recall_ci == (1.0, 1.0)


def test_bootstrap_agrees_with_plugin(stratification_factory):
    strat = stratification_factory([200_000, 200_000], [1000, 1000], [10, 60])
    bootstrap = recall_interval_bootstrap((20_000.0, None), 400_000, strat, B=10_000, seed=8)
    plugin = recall_interval_plugin(20_000, 400_000, bootstrap.prevalence)
    assert bootstrap.recall_point == pytest.approx(plugin.recall_point)
    for boot, plug in zip(bootstrap.recall_ci, plugin.recall_ci):
        assert boot == pytest.approx(plug, abs=0.01)
