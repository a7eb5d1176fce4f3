"""
recallaudit - Prevalence, precision and recall estimation for content moderation
Part of the ucli-tools ecosystem

Estimates how much violating content a moderation system misses by
annotating a small, score-stratified sample of the content it left up, and
turns the estimate into recall with an honest confidence interval.
"""

__version__ = "0.1.0"
__author__ = "ucli-tools"
__email__ = "contact@ucli-tools.org"
__license__ = "Apache 2.0"

from .estimation import (
    LabeledSample,
    PooledItem,
    PrevalenceEstimate,
    Stratification,
    estimate_precision,
    estimate_random,
    estimate_stratified,
)
from .stratify import BinningSpec, bin_pool
from .allocate import (
    AllocationSpec,
    AnnotationOracle,
    PilotConfig,
    PoolOracle,
    allocate_equal,
    allocate_neyman,
    run_pilot,
)
from .plan import PrecisionTarget, samples_needed_random
from .recall_report import ConfusionCounts, RecallReport, recall_interval_bootstrap, recall_interval_plugin
from .simulation import ExperimentConfig, run_experiment

__all__ = [
    "LabeledSample",
    "PooledItem",
    "PrevalenceEstimate",
    "Stratification",
    "estimate_precision",
    "estimate_random",
    "estimate_stratified",
    "BinningSpec",
    "bin_pool",
    "AllocationSpec",
    "PilotConfig",
    "AnnotationOracle",
    "PoolOracle",
    "allocate_equal",
    "allocate_neyman",
    "run_pilot",
    "PrecisionTarget",
    "samples_needed_random",
    "ConfusionCounts",
    "RecallReport",
    "recall_interval_bootstrap",
    "recall_interval_plugin",
    "ExperimentConfig",
    "run_experiment",
]
