"""
Pool I/O - JSONL pools, JSON reports and result rendering
Part of recallaudit pipeline

Pools are one JSON object per line (id, score, optional label and filtered
flag). Reports are a single JSON document validated against REPORT_SCHEMA;
the generation timestamp lives only in the header so the rest of the report
is byte-reproducible.
"""

import csv
import io
import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from jsonschema import Draft202012Validator
from rich.console import Console
from rich.table import Table

from . import __version__
from .errors import InvalidInputError, PoolIOError, ValidationError
from .estimation import PooledItem, PrevalenceEstimate, Stratification
from .recall_report import RecallReport

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
OUTPUT_FORMATS = ("json", "csv", "table")
SIGNIFICANT_DIGITS = 6

POOL_ITEM_SCHEMA = {
    "type": "object",
    "required": ["id", "score"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "score": {"type": "number", "minimum": 0, "maximum": 1},
        "label": {"enum": [0, 1, None]},
        "filtered": {"type": ["boolean", "null"]},
    },
}

_ESTIMATE_SCHEMA = {
    "type": "object",
    "required": ["point", "se", "ci_low", "ci_high", "confidence", "n_total", "method"],
    "properties": {
        "point": {"type": "number", "minimum": 0, "maximum": 1},
        "se": {"type": "number", "minimum": 0},
        "cv": {"type": ["number", "null"]},
        "ci_low": {"type": "number"},
        "ci_high": {"type": "number"},
        "confidence": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "n_total": {"type": "integer", "minimum": 0},
        "method": {"enum": ["random", "stratified-equal", "stratified-neyman", "stratified-pilot"]},
    },
}

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "recallaudit report",
    "type": "object",
    "required": ["header", "tool", "seeds", "config", "estimates", "strata", "totals"],
    "properties": {
        "header": {
            "type": "object",
            "required": ["generated_at"],
            "properties": {"generated_at": {"type": ["string", "null"]}},
        },
        "tool": {
            "type": "object",
            "required": ["name", "version"],
            "properties": {"name": {"const": "recallaudit"}, "version": {"type": "string"}},
        },
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "config": {"type": "object"},
        "counts": {"type": ["object", "null"]},
        "estimates": {"type": "array", "items": _ESTIMATE_SCHEMA},
        "recall": {"type": ["object", "null"]},
        "strata": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["index", "score_low", "score_high", "population_size", "annotated", "positives"],
                "properties": {
                    "index": {"type": "integer", "minimum": 1},
                    "score_low": {"type": "number"},
                    "score_high": {"type": "number"},
                    "population_size": {"type": "integer", "minimum": 0},
                    "annotated": {"type": "integer", "minimum": 0},
                    "positives": {"type": "integer", "minimum": 0},
                },
            },
        },
        "totals": {
            "type": "object",
            "required": ["population_size", "annotated", "positives"],
            "properties": {
                "population_size": {"type": "integer", "minimum": 0},
                "annotated": {"type": "integer", "minimum": 0},
                "positives": {"type": "integer", "minimum": 0},
            },
        },
    },
}


# ============================================================================
# Pools
# ============================================================================

def ingest_pool(path: PathLike) -> List[PooledItem]:
    """
    Stream a JSONL pool file

    Args:
        path: File with one item object per line; blank lines are skipped

    Returns:
        List[PooledItem]: items in file order

    Raises:
        ValidationError: malformed line, schema violation or duplicate id,
            reported with its line number; also an empty file
        PoolIOError: the file cannot be read
    """
    path = Path(path)
    validator = Draft202012Validator(POOL_ITEM_SCHEMA)
    items: List[PooledItem] = []
    seen = set()
    labeled = filtered = 0

    try:
        with path.open("r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValidationError(f"{path}:{lineno}: invalid JSON", [str(e)])
                problems = [
                    f"{'.'.join(map(str, err.path)) or 'record'}: {err.message}"
                    for err in validator.iter_errors(record)
                ]
                if problems:
                    raise ValidationError(f"{path}:{lineno}: invalid pool item", problems)
                if isinstance(record["score"], bool) or isinstance(record.get("label"), bool):
                    raise ValidationError(f"{path}:{lineno}: score and label must be numbers, not booleans")
                item_id = record["id"]
                if item_id in seen:
                    raise ValidationError(f"{path}:{lineno}: duplicate id {item_id!r}")
                seen.add(item_id)
                try:
                    item = PooledItem(
                        id=item_id,
                        score=float(record["score"]),
                        label=None if record.get("label") is None else int(record["label"]),
                        filtered=record.get("filtered"),
                    )
                except InvalidInputError as e:
                    raise ValidationError(f"{path}:{lineno}: {e}")
                labeled += item.label is not None
                filtered += bool(item.filtered)
                items.append(item)
    except OSError as e:
        raise PoolIOError(f"cannot read pool file {path}: {e}")

    if not items:
        raise ValidationError(f"pool file {path} contains no items")
    logger.info(f"Ingested {len(items)} items from {path} ({labeled} labeled, {filtered} filtered)")
    return items


def _item_record(item: PooledItem) -> Dict[str, Any]:
    record: Dict[str, Any] = {"id": item.id, "score": item.score}
    if item.label is not None:
        record["label"] = item.label
    if item.filtered is not None:
        record["filtered"] = item.filtered
    return record


def write_pool(path: PathLike, items: Iterable[PooledItem]) -> int:
    """Write items as JSONL; returns the number written"""
    path = Path(path)
    count = 0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            for item in items:
                handle.write(json.dumps(_item_record(item)) + "\n")
                count += 1
    except OSError as e:
        raise PoolIOError(f"cannot write pool file {path}: {e}")
    logger.info(f"Wrote {count} items to {path}")
    return count


# ============================================================================
# Reports
# ============================================================================

def round_significant(value: Any, digits: int = SIGNIFICANT_DIGITS) -> Any:
    """Round every float in a nested structure to the given significant digits"""
    if isinstance(value, bool) or value is None:
        return value
    if isinstance(value, float):
        if not math.isfinite(value) or value == 0.0:
            return value
        return float(f"{value:.{digits}g}")
    if isinstance(value, Mapping):
        return {key: round_significant(v, digits) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_significant(v, digits) for v in value]
    return value


def strata_table(strat: Stratification) -> List[Dict[str, Any]]:
    return [
        {
            "index": s.index,
            "score_low": s.score_low,
            "score_high": s.score_high,
            "population_size": s.population_size,
            "annotated": s.annotated,
            "positives": s.positives,
        }
        for s in strat.strata
    ]


def build_report(config: Mapping[str, Any], seeds: Sequence[int],
                 estimates: Sequence[PrevalenceEstimate] = (),
                 strat: Optional[Stratification] = None,
                 counts: Optional[Mapping[str, Any]] = None,
                 recall: Optional[RecallReport] = None,
                 timestamp: Optional[str] = "now") -> Dict[str, Any]:
    """
    Assemble a report document

    ``counts`` is a transparency bundle (see build_transparency_report).
    ``timestamp`` "now" stamps the current UTC time; None leaves the header
    empty for byte-comparable output.
    """
    if timestamp == "now":
        timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    strata = strata_table(strat) if strat is not None else []
    report = {
        "header": {"generated_at": timestamp},
        "tool": {"name": "recallaudit", "version": __version__},
        "seeds": [int(s) for s in seeds],
        "config": dict(config),
        "counts": dict(counts) if counts is not None else None,
        "estimates": [e.to_dict() for e in estimates],
        "recall": recall.to_dict() if recall is not None else None,
        "strata": strata,
        "totals": {
            key: int(sum(row[key] for row in strata))
            for key in ("population_size", "annotated", "positives")
        },
    }
    report = round_significant(report)
    validate_report(report)
    return report


def validate_report(report: Mapping[str, Any]) -> None:
    """Check the schema and that the stratum table sums to the totals"""
    problems = [
        f"{'.'.join(map(str, err.path)) or 'report'}: {err.message}"
        for err in Draft202012Validator(REPORT_SCHEMA).iter_errors(report)
    ]
    if not problems:
        for key, total in report["totals"].items():
            summed = sum(row[key] for row in report["strata"])
            if summed != total:
                problems.append(f"strata {key} sum to {summed}, totals say {total}")
        for row in report["strata"]:
            if not row["positives"] <= row["annotated"] <= row["population_size"]:
                problems.append(f"stratum {row['index']}: positives <= annotated <= size violated")
    if problems:
        raise ValidationError("invalid report", problems)


def dump_json(document: Any) -> str:
    return json.dumps(document, indent=2, sort_keys=True) + "\n"


def write_text(path: PathLike, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise PoolIOError(f"cannot write {path}: {e}")


# ============================================================================
# Rendering
# ============================================================================

def rows_to_csv(rows: Sequence[Mapping[str, Any]], digits: int = SIGNIFICANT_DIGITS) -> str:
    """Delimited table of flat rows, columns in first-row order"""
    if not rows:
        return ""
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else v for k, v in round_significant(dict(row), digits).items()})
    return buffer.getvalue()


def rows_to_table(rows: Sequence[Mapping[str, Any]], title: Optional[str] = None,
                  digits: int = SIGNIFICANT_DIGITS) -> Table:
    table = Table(title=title, show_header=True, header_style="bold")
    if not rows:
        return table
    columns = list(rows[0].keys())
    for column in columns:
        table.add_column(column, justify="left" if column in ("method", "binning") else "right")
    for row in rows:
        rounded = round_significant(dict(row), digits)
        table.add_row(*("" if rounded[c] is None else str(rounded[c]) for c in columns))
    return table


def render(document: Any, rows: Sequence[Mapping[str, Any]], fmt: str = "json",
           output: Optional[PathLike] = None, title: Optional[str] = None,
           console: Optional[Console] = None, digits: int = SIGNIFICANT_DIGITS) -> None:
    """
    Emit a result

    ``json`` writes the full document; ``csv`` and ``table`` the flat rows.
    Output goes to ``output`` when given, otherwise to stdout.
    """
    if fmt not in OUTPUT_FORMATS:
        raise InvalidInputError(f"unknown output format {fmt!r}")
    console = console or Console(soft_wrap=True)

    if fmt == "table":
        table = rows_to_table(rows, title, digits)
        if output is None:
            console.print(table)
        else:
            recorder = Console(record=True, width=160, file=io.StringIO())
            recorder.print(table)
            write_text(output, recorder.export_text())
        return

    text = dump_json(round_significant(document, digits)) if fmt == "json" else rows_to_csv(rows, digits)
    if output is None:
        console.file.write(text)
        console.file.flush()
    else:
        write_text(output, text)
        logger.info(f"Wrote {fmt} output to {output}")
