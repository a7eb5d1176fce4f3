#!/usr/bin/env python3
"""
Main CLI entry point for recallaudit
Power calculations, stratified estimation and recall reporting over scored pools
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import yaml
from rich.console import Console
from rich.logging import RichHandler

from recallaudit import __version__
from recallaudit.allocate import (
    Allocation,
    AllocationSpec,
    PilotConfig,
    PoolOracle,
    allocate_equal,
    allocate_neyman,
    ensure_each_sampled,
    run_pilot,
    sample_allocation,
)
from recallaudit.config_manager import ConfigManager, Settings
from recallaudit.errors import ConfigError, InvalidInputError, RecallAuditError, UsageError
from recallaudit.estimation import (
    LabeledSample,
    PooledItem,
    PrevalenceEstimate,
    Stratification,
    critical_value,
    estimate_random,
    estimate_stratified,
)
from recallaudit.plan import (
    DEFAULT_PREVALENCES,
    DEFAULT_TARGETS,
    PrecisionTarget,
    efficiency_gain,
    power_table,
    samples_needed_random,
    samples_needed_stratified_equal,
    samples_needed_stratified_optimal,
)
from recallaudit.pool_io import build_report, ingest_pool, render, strata_table, write_pool
from recallaudit.recall_report import (
    ConfusionCounts,
    RecallReport,
    build_transparency_report,
    recall_interval_bootstrap,
    recall_interval_plugin,
    recall_upper_bound,
)
from recallaudit.simulation import (
    ExperimentConfig,
    SyntheticCorpusSpec,
    SyntheticPoolSpec,
    generate_corpus,
    generate_pool,
    pool_labels,
    run_case_study,
    run_experiment,
    truth_stratification,
)
from recallaudit.stratify import BinningSpec, bin_pool

logger = logging.getLogger("recallaudit")

INTERNAL_ERROR_EXIT = 1


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports bad usage as exit code 1"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def setup_logging(level: str, verbose: bool = False, quiet: bool = False) -> None:
    """Install a rich handler on stderr; stdout carries only results"""
    if verbose:
        level = "DEBUG"
    elif quiet:
        level = "ERROR"
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=Console(stderr=True), show_path=False, show_time=False))
    root.setLevel(level)


# ============================================================================
# Shared helpers
# ============================================================================

def _load_pool(path: Path, visible_only: bool = False) -> List[PooledItem]:
    pool = ingest_pool(path)
    if visible_only:
        pool = [item for item in pool if not item.filtered]
        logger.info(f"Restricted to {len(pool)} visible (not filtered) items")
        if not pool:
            raise InvalidInputError("no visible items left after dropping filtered ones")
    return pool


def _target(args, settings: Settings) -> PrecisionTarget:
    rel = args.rel if getattr(args, "rel", None) is not None else settings.plan.relative_halfwidth
    if isinstance(rel, list):
        rel = rel[0]
    return PrecisionTarget(rel, args.confidence)


def _binning(args, settings: Settings) -> BinningSpec:
    if getattr(args, "bins", None):
        return BinningSpec.parse(args.bins)
    return BinningSpec(method=settings.binning.method, num_bins=settings.binning.num_bins)


def _allocation(args, settings: Settings) -> AllocationSpec:
    if getattr(args, "alloc", None):
        return AllocationSpec.parse(args.alloc)
    return AllocationSpec(kind=settings.allocation.method,
                          pilot_per_stratum=settings.allocation.pilot_per_stratum)


def _estimate_pool(pool: List[PooledItem], args, settings: Settings
                   ) -> Tuple[PrevalenceEstimate, Optional[Stratification], Optional[Allocation]]:
    """
    Annotate a labeled pool through the oracle and estimate its prevalence

    Random sampling and equal/optimal allocation annotate ``--budget`` items;
    pilot allocation uses the budget when given, otherwise plans one from the
    pilot against ``--rel``. Optimal allocation uses the pool's true stratum
    deviations.
    """
    oracle = PoolOracle.from_pool(pool)
    confidence = args.confidence

    if args.method == "random":
        if args.budget is None:
            raise UsageError("random sampling needs --budget")
        rng = np.random.default_rng(args.seed)
        positions = rng.choice(len(pool), size=min(args.budget, len(pool)), replace=False)
        sample = LabeledSample.from_labels(oracle.reveal(positions))
        return estimate_random(sample, confidence), None, None

    strat = bin_pool(pool, _binning(args, settings))
    spec = _allocation(args, settings)
    if spec.kind == "pilot":
        cfg = PilotConfig(
            pilot_per_stratum=spec.pilot_per_stratum,
            pseudocounts=settings.allocation.pseudocounts,
            reuse_pilot=_reuse_pilot(args, settings),
            total_budget=args.budget,
            seed=args.seed,
        )
        allocation, annotated = run_pilot(pool, strat, cfg, oracle, _target(args, settings))
    else:
        if args.budget is None:
            raise UsageError(f"{spec.kind} allocation needs --budget")
        if spec.kind == "equal":
            allocation = allocate_equal(strat, args.budget)
        else:
            truth = truth_stratification(strat, pool_labels(pool))
            allocation = ensure_each_sampled(allocate_neyman(truth, args.budget), strat)
        annotated = sample_allocation(strat, allocation, oracle, args.seed)

    estimate = estimate_stratified(
        annotated,
        confidence,
        apply_fpc=not args.no_fpc and settings.estimation.apply_fpc,
        squared_fpc=args.squared_fpc or settings.estimation.squared_fpc,
        allocation_kind=spec.kind,
    )
    logger.info(f"Annotated {oracle.consumed} items; prevalence {estimate.point:.4g} ± {estimate.se:.2g}")
    return estimate, annotated, allocation


def _reuse_pilot(args, settings: Settings) -> bool:
    return settings.allocation.reuse_pilot and not args.no_pilot_reuse


def _estimate_rows(estimate: PrevalenceEstimate) -> List[Dict[str, Any]]:
    return [estimate.to_dict()]


def _config_echo(args, settings: Settings) -> Dict[str, Any]:
    echo = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "verbose", "quiet", "output", "format", "no_timestamp", "no_pilot_reuse"):
            continue
        echo[key] = str(value) if isinstance(value, Path) else value
    if getattr(args, "method", None) == "stratified" and _allocation(args, settings).kind == "pilot":
        echo["reuse_pilot"] = _reuse_pilot(args, settings)
    return echo


def _emit(args, settings: Settings, document: Any, rows: Sequence[Dict[str, Any]], title: str) -> None:
    render(document, rows, fmt=args.format or settings.output.format, output=args.output, title=title,
           digits=settings.output.significant_digits)


# ============================================================================
# Subcommands
# ============================================================================

def cmd_plan(args, settings: Settings) -> int:
    prevalences = args.p or list(DEFAULT_PREVALENCES)
    targets = args.rel or ([settings.plan.relative_halfwidth] if args.p else list(DEFAULT_TARGETS))

    if args.pool:
        pool = _load_pool(args.pool, args.visible)
        truth = truth_stratification(bin_pool(pool, _binning(args, settings)), pool_labels(pool))
        rows = []
        for r in targets:
            target = PrecisionTarget(r, args.confidence)
            random_n = samples_needed_random(float(pool_labels(pool).mean()), target)
            for method, n in (
                ("random", random_n),
                ("stratified-equal", samples_needed_stratified_equal(truth, target)),
                ("stratified-neyman", samples_needed_stratified_optimal(truth, target)),
            ):
                rows.append({
                    "method": method,
                    "relative_halfwidth": r,
                    "samples": n,
                    "reduction": efficiency_gain(random_n, n),
                })
        _emit(args, settings, rows, rows, "Annotations needed")
        return 0

    table = power_table(prevalences, targets, args.confidence)
    rows = [
        {"prevalence": p, **{f"{r:.0%}": n for r, n in cells.items()}}
        for p, cells in table.items()
    ]
    if len(prevalences) == 1 and len(targets) == 1:
        document: Any = table[prevalences[0]][targets[0]]
    else:
        document = {str(p): {str(r): n for r, n in cells.items()} for p, cells in table.items()}
    _emit(args, settings, document, rows, "Random-sampling annotations needed")
    return 0


def cmd_bin(args, settings: Settings) -> int:
    pool = _load_pool(args.pool, args.visible)
    spec = _binning(args, settings)
    strat = bin_pool(pool, spec)
    rows = strata_table(strat)
    document = {"binning": str(spec), "boundaries": list(strat.boundaries), "strata": rows}
    _emit(args, settings, document, rows, f"Strata ({spec})")
    return 0


def cmd_estimate(args, settings: Settings) -> int:
    pool = _load_pool(args.pool, args.visible)
    estimate, annotated, _ = _estimate_pool(pool, args, settings)
    report = build_report(
        _config_echo(args, settings), [args.seed], [estimate], annotated,
        timestamp=None if args.no_timestamp else "now",
    )
    _emit(args, settings, report, _estimate_rows(estimate), "Prevalence estimate")
    return 0


def cmd_pilot(args, settings: Settings) -> int:
    pool = _load_pool(args.pool, args.visible)
    args.method = "stratified"
    if args.alloc is None:
        args.alloc = f"pilot:{settings.allocation.pilot_per_stratum}"
    if not args.alloc.startswith("pilot"):
        raise UsageError("pilot expects --alloc pilot:m")
    estimate, annotated, allocation = _estimate_pool(pool, args, settings)
    rows = [
        dict(row, exhausted=flag)
        for row, flag in zip(strata_table(annotated), allocation.exhausted)
    ]
    document = {
        "allocation": list(allocation.per_stratum),
        "total": allocation.total,
        "strata": rows,
        "estimate": estimate.to_dict(),
    }
    _emit(args, settings, document, rows, "Pilot allocation")
    return 0


def _recall_report(args, settings: Settings, prev: PrevalenceEstimate, pool_size: int,
                   annotated: Optional[Stratification], removed: Optional[int]) -> RecallReport:
    if args.upper_bound:
        if removed is None:
            raise UsageError("--upper-bound needs --removed")
        return recall_upper_bound(removed, pool_size, prev)
    if args.tp is None:
        raise UsageError("recall needs --tp (or --upper-bound with --removed)")
    if args.interval == "bootstrap":
        if annotated is None:
            raise UsageError("bootstrap intervals need a stratified estimate from --pool")
        return recall_interval_bootstrap(
            (args.tp, args.tp_se), pool_size, annotated,
            B=args.replicates or settings.bootstrap.replicates,
            confidence=args.confidence, seed=args.seed,
            allocation_kind=prev.method.replace("stratified-", "").replace("neyman", "optimal"),
        )
    return recall_interval_plugin(args.tp, pool_size, prev,
                                  tp_source="estimated" if args.tp_se else "exact-count")


def cmd_recall(args, settings: Settings) -> int:
    annotated = None
    if args.pool:
        pool = _load_pool(args.pool, visible_only=True)
        prev, annotated, _ = _estimate_pool(pool, args, settings)
        pool_size = args.negatives or len(pool)
    else:
        if args.p is None or args.negatives is None:
            raise UsageError("recall needs --pool, or --p with --negatives")
        if args.se is not None:
            prev = PrevalenceEstimate.from_point(args.p, args.se, args.confidence)
        elif args.ci_low is not None and args.ci_high is not None:
            prev = PrevalenceEstimate(
                point=args.p, se=(args.ci_high - args.ci_low) / 2.0 / critical_value(args.confidence),
                ci_low=args.ci_low, ci_high=args.ci_high, confidence=args.confidence,
            )
        else:
            raise UsageError("give the prevalence uncertainty as --se or --ci-low/--ci-high")
        pool_size = args.negatives
    report = _recall_report(args, settings, prev, pool_size, annotated, args.removed)
    _emit(args, settings, report.to_dict(), [_recall_row(report)], "Recall")
    return 0


def _recall_row(report: RecallReport) -> Dict[str, Any]:
    return {
        "tp_source": report.tp_source,
        "recall": report.recall_point,
        "ci_low": report.recall_ci[0],
        "ci_high": report.recall_ci[1],
        "interval": report.interval_method,
        "prevalence": report.prevalence.point,
        "upper_bound": report.is_upper_bound,
    }


def cmd_simulate(args, settings: Settings) -> int:
    fields: Dict[str, Any] = {}
    if args.experiment:
        try:
            with open(args.experiment, "r", encoding="utf-8") as f:
                fields = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"Cannot load experiment {args.experiment}: {e}")
    else:
        sim = settings.simulation
        fields = {
            "pool_size": sim.pool_size,
            "prevalences": [sim.prevalence],
            "separation": sim.separation,
            "trials": sim.trials,
            "seed": sim.seed,
        }
    overrides = {
        "pool_path": str(args.pool) if args.pool else None,
        "prevalences": args.prevalence,
        "binning": args.bins,
        "allocations": args.alloc,
        "trials": args.trials,
        "relative_halfwidth": args.rel,
        "confidence": args.confidence,
        "seed": args.seed if args.seed_given else None,
    }
    fields.update({k: v for k, v in overrides.items() if v is not None})
    try:
        config = ExperimentConfig.model_validate(fields)
    except ValueError as e:
        raise ConfigError(f"Invalid experiment: {e}")

    result = run_experiment(config, show_progress=not args.quiet)
    rows = [row.to_dict() for row in result.rows]
    document = {"config": config.model_dump(), "rows": rows}
    _emit(args, settings, document, rows, "Annotation cost")
    return 0


def cmd_generate(args, settings: Settings) -> int:
    if args.output is None:
        raise UsageError("generate needs --output for the pool file")
    if args.corpus:
        study = run_case_study(generate_corpus(SyntheticCorpusSpec(
            size=args.size, prevalence=args.prevalence, seed=args.seed,
        )), k=args.keywords)
        write_pool(args.output, study.pool)
        logger.info(f"Keyword filter: {', '.join(study.keyword_filter.keywords)}")
        return 0
    pool = generate_pool(SyntheticPoolSpec(
        size=args.size,
        prevalence=args.prevalence,
        separation=args.separation,
        exact_counts=args.exact,
        seed=args.seed,
    ))
    write_pool(args.output, pool)
    return 0


def cmd_report(args, settings: Settings) -> int:
    """Filtered, labeled pool to a full transparency report"""
    full = _load_pool(args.pool)
    if any(item.filtered is None for item in full):
        raise InvalidInputError("report needs every item to carry a filtered flag")
    removed = [item for item in full if item.filtered]
    visible = [item for item in full if not item.filtered]
    if not visible:
        raise InvalidInputError("every item was filtered; nothing to estimate")

    prev, annotated, _ = _estimate_pool(visible, args, settings)
    removals_exact = all(item.label is not None for item in removed)
    if removals_exact:
        tp = float(sum(item.label for item in removed))
        fp = float(len(removed) - tp)
        args.tp = args.tp if args.tp is not None else tp
    else:
        tp, fp = float(len(removed)), 0.0
        args.upper_bound = True
    recall = _recall_report(args, settings, prev, len(visible), annotated, len(removed))
    counts = ConfusionCounts.estimated(tp, fp, len(visible), prev, removals_exact)
    bundle = build_transparency_report(
        counts, prev,
        {"total": len(full), "removed": len(removed), "reporting_period": args.period},
    )
    report = build_report(
        _config_echo(args, settings), [args.seed], [prev], annotated, counts=bundle, recall=recall,
        timestamp=None if args.no_timestamp else "now",
    )
    rows = [dict(_recall_row(recall), **{k: v for k, v in bundle["metrics"].items()})]
    _emit(args, settings, report, rows, "Transparency report")
    return 0


# ============================================================================
# Argument parsing
# ============================================================================

def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Random seed (default: 0)")
    common.add_argument("--confidence", type=float, default=None, help="Interval confidence level")
    common.add_argument("--output", "-o", type=Path, help="Write results to this file instead of stdout")
    common.add_argument("--format", choices=["json", "csv", "table"], help="Output format")
    common.add_argument("--config", type=Path, help="Path to configuration file")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose output")
    common.add_argument("--quiet", "-q", action="store_true", help="Only log errors")
    return common


def _estimation_flags(parser: argparse.ArgumentParser, method: bool = True) -> None:
    parser.add_argument("--pool", type=Path, required=True, help="JSONL pool file")
    if method:
        parser.add_argument("--method", choices=["random", "stratified"], default="stratified")
    parser.add_argument("--bins", help="Binning as method:L, e.g. quantile:8")
    parser.add_argument("--alloc", help="Allocation: equal, optimal or pilot:m")
    parser.add_argument("--budget", type=int, help="Total annotation budget")
    parser.add_argument("--rel", type=float, help="Relative half-width target for planned budgets")
    parser.add_argument("--visible", action="store_true", help="Drop items flagged as filtered")
    parser.add_argument("--no-fpc", action="store_true", help="Omit the finite population correction")
    parser.add_argument("--squared-fpc", action="store_true", help="Use the squared population correction")
    parser.add_argument("--no-pilot-reuse", action="store_true",
                        help="Estimate pilot-allocated strata from their top-up draw only")


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(
        prog="recallaudit",
        description="Prevalence, precision and recall estimation for content moderation audits",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""Examples:
  recallaudit plan --p 0.059 --rel 0.20
  recallaudit generate --size 50000 --prevalence 0.041 -o pool.jsonl
  recallaudit estimate --pool pool.jsonl --bins quantile:8 --alloc pilot:50
  recallaudit recall --tp 33000 --negatives 1634000 --p 0.041 --ci-low 0.0328 --ci-high 0.0492
  recallaudit simulate --bins quantile:2 quantile:4 quantile:8 --alloc optimal pilot:50
        """,
    )
    parser.add_argument("--version", action="version", version=f"recallaudit {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    plan = sub.add_parser("plan", parents=[common], help="Annotation budgets for a precision target")
    plan.add_argument("--p", type=float, nargs="+", help="Prevalence(s)")
    plan.add_argument("--rel", type=float, nargs="+", help="Relative half-width(s), e.g. 0.20")
    plan.add_argument("--pool", type=Path, help="Labeled pool for stratified budgets")
    plan.add_argument("--bins", help="Binning for stratified budgets")
    plan.add_argument("--visible", action="store_true", help="Drop items flagged as filtered")
    plan.set_defaults(func=cmd_plan)

    binning = sub.add_parser("bin", parents=[common], help="Stratify a pool by score")
    binning.add_argument("--pool", type=Path, required=True, help="JSONL pool file")
    binning.add_argument("--bins", help="Binning as method:L")
    binning.add_argument("--visible", action="store_true", help="Drop items flagged as filtered")
    binning.set_defaults(func=cmd_bin)

    estimate = sub.add_parser("estimate", parents=[common], help="Estimate prevalence over a labeled pool")
    _estimation_flags(estimate)
    estimate.add_argument("--no-timestamp", action="store_true", help="Leave the report header empty")
    estimate.set_defaults(func=cmd_estimate)

    pilot = sub.add_parser("pilot", parents=[common], help="Run the two-phase pilot allocation")
    _estimation_flags(pilot, method=False)
    pilot.set_defaults(func=cmd_pilot)

    recall = sub.add_parser("recall", parents=[common], help="Recall with a propagated interval")
    recall.add_argument("--tp", type=float, help="True positives among removals")
    recall.add_argument("--tp-se", type=float, help="Standard error of an estimated TP")
    recall.add_argument("--negatives", type=int, help="Size of the visible (predicted-negative) pool")
    recall.add_argument("--p", type=float, help="Prevalence estimate over the visible pool")
    recall.add_argument("--se", type=float, help="Standard error of the prevalence estimate")
    recall.add_argument("--ci-low", type=float, help="Lower prevalence interval endpoint")
    recall.add_argument("--ci-high", type=float, help="Upper prevalence interval endpoint")
    recall.add_argument("--removed", type=int, help="Number of removals (for --upper-bound)")
    recall.add_argument("--upper-bound", action="store_true", help="Treat every removal as a true positive")
    recall.add_argument("--interval", choices=["plugin", "bootstrap"], default="plugin")
    recall.add_argument("--replicates", type=int, help="Bootstrap replicates (>= 1000)")
    recall.add_argument("--pool", type=Path, help="Labeled pool to estimate the visible prevalence from")
    recall.add_argument("--method", choices=["random", "stratified"], default="stratified")
    recall.add_argument("--bins", help="Binning as method:L")
    recall.add_argument("--alloc", help="Allocation: equal, optimal or pilot:m")
    recall.add_argument("--budget", type=int, help="Total annotation budget")
    recall.add_argument("--rel", type=float, help="Relative half-width target for planned budgets")
    recall.add_argument("--no-fpc", action="store_true", help="Omit the finite population correction")
    recall.add_argument("--squared-fpc", action="store_true", help="Use the squared population correction")
    recall.add_argument("--no-pilot-reuse", action="store_true",
                        help="Estimate pilot-allocated strata from their top-up draw only")
    recall.set_defaults(func=cmd_recall)

    simulate = sub.add_parser("simulate", parents=[common], help="Monte-Carlo annotation cost experiments")
    simulate.add_argument("--experiment", type=Path, help="Experiment YAML file")
    simulate.add_argument("--pool", type=Path, help="Labeled pool instead of a synthetic one")
    simulate.add_argument("--prevalence", type=float, nargs="+", help="Synthetic prevalences")
    simulate.add_argument("--bins", nargs="+", help="Binnings as method:L")
    simulate.add_argument("--alloc", nargs="+", help="Allocations: random, equal, optimal, pilot:m")
    simulate.add_argument("--trials", type=int, help="Trials per grid point")
    simulate.add_argument("--rel", type=float, help="Relative half-width target")
    simulate.set_defaults(func=cmd_simulate)

    generate = sub.add_parser("generate", parents=[common], help="Write a synthetic labeled pool")
    generate.add_argument("--size", type=int, default=50_000)
    generate.add_argument("--prevalence", type=float, default=0.041)
    generate.add_argument("--separation", type=float, default=4.0, help="Score separation of the classes")
    generate.add_argument("--exact", action="store_true", help="Exactly round(p·N) positives")
    generate.add_argument("--corpus", action="store_true",
                          help="Generate a keyword-filtered text corpus and write its scored pool")
    generate.add_argument("--keywords", type=int, default=10, help="Keyword filter size (with --corpus)")
    generate.set_defaults(func=cmd_generate)

    report = sub.add_parser("report", parents=[common], help="Transparency report for a filtered pool")
    _estimation_flags(report)
    report.add_argument("--tp", type=float, help="True positives among removals (default: counted)")
    report.add_argument("--tp-se", type=float, help="Standard error of an estimated TP")
    report.add_argument("--interval", choices=["plugin", "bootstrap"], default="plugin")
    report.add_argument("--replicates", type=int, help="Bootstrap replicates (>= 1000)")
    report.add_argument("--period", help="Reporting period label")
    report.add_argument("--no-timestamp", action="store_true", help="Leave the report header empty")
    report.set_defaults(func=cmd_report, upper_bound=False, removed=None)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for the recallaudit CLI"""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return UsageError.exit_code

    args = None
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("no subcommand given")

        manager = ConfigManager(args.config)
        settings = manager.settings
        setup_logging(settings.logging.level, args.verbose, args.quiet)

        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = 0
        if args.confidence is None:
            args.confidence = settings.estimation.confidence
        if not 0.0 < args.confidence < 1.0:
            raise InvalidInputError(f"confidence must lie in (0, 1), got {args.confidence}")
        for name in ("no_fpc", "squared_fpc", "visible", "upper_bound", "tp", "tp_se",
                     "removed", "rel", "replicates", "interval", "no_pilot_reuse", "budget"):
            if not hasattr(args, name):
                setattr(args, name, None)
        if args.budget is not None and args.budget < 1:
            raise InvalidInputError(f"budget must be >= 1, got {args.budget}")

        return args.func(args, settings)

    except UsageError as e:
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
    except RecallAuditError as e:
        print(f"Error: {e}", file=sys.stderr)
        if args is not None and getattr(args, "verbose", False):
            import traceback
            traceback.print_exc()
        return e.exit_code
    except KeyboardInterrupt:
        print("\nInterrupted by user", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error(f"Unexpected error: {e}")
        if args is not None and getattr(args, "verbose", False):
            import traceback
            traceback.print_exc()
        return INTERNAL_ERROR_EXIT


if __name__ == "__main__":
    sys.exit(main())
