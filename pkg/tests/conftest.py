"""
Shared fixtures for the recallaudit test suite
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from recallaudit.estimation import Stratification, StratumSummary  # noqa: E402
from recallaudit.simulation import SyntheticPoolSpec, generate_pool  # noqa: E402


def make_stratification(sizes, annotated=None, positives=None):
    """Stratification over contiguous members with evenly spaced boundaries"""
    num = len(sizes)
    annotated = annotated or [0] * num
    positives = positives or [0] * num
    boundaries = tuple(float(b) for b in np.linspace(0.0, 1.0, num + 1))
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    return Stratification(
        boundaries=boundaries,
        strata=tuple(
            StratumSummary(
                index=h + 1,
                population_size=int(sizes[h]),
                score_low=boundaries[h],
                score_high=boundaries[h + 1],
                annotated=int(annotated[h]),
                positives=int(positives[h]),
            )
            for h in range(num)
        ),
        total_size=int(sum(sizes)),
        members=tuple(np.arange(offsets[h], offsets[h + 1]) for h in range(num)),
    )


@pytest.fixture
def stratification_factory():
    return make_stratification


@pytest.fixture(scope="session")
def small_pool():
    """5,000 items, exactly 250 positives, well separated scores"""
    return generate_pool(SyntheticPoolSpec(size=5000, prevalence=0.05, separation=4.0, seed=1))


@pytest.fixture
def write_jsonl(tmp_path):
    """Write records (dicts or raw strings) one per line and return the path"""
    def _write(records, name="pool.jsonl"):
        path = tmp_path / name
        with path.open("w", encoding="utf-8") as handle:
            for record in records:
                handle.write((record if isinstance(record, str) else json.dumps(record)) + "\n")
        return path
    return _write
