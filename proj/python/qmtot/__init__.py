"""Python access to the qmtot engine: scoring helpers, run records and the CLI."""

import json

from ._qmtot import (
    Error,
    RangeError,
    SchemaError,
    ScoreParseError,
    classify,
    extract_answer,
    extract_score,
    extract_verdict,
    final_score,
    run_cli,
)
from . import _qmtot


def aggregate(chains):
    """Per-option count, mean and max fs over answered, scored chain dicts."""
    return json.loads(_qmtot._aggregate(json.dumps(chains)))


def load_records(path):
    """Run records of a JSONL run file, as dicts."""
    return json.loads(_qmtot._load_records(str(path)))


def build_report(records, manifest=()):
    return json.loads(_qmtot._build_report(json.dumps(list(records)), json.dumps(list(manifest))))


__all__ = [
    "Error",
    "RangeError",
    "SchemaError",
    "ScoreParseError",
    "aggregate",
    "build_report",
    "classify",
    "extract_answer",
    "extract_score",
    "extract_verdict",
    "final_score",
    "load_records",
    "run_cli",
]
