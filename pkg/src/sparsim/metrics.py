"""Per-iteration metrics and CSV/JSON emission.

CSV files start with one ``# config: {...}`` comment line carrying the run
configuration as JSON, followed by a header row and one row per iteration
in :data:`COLUMNS` order. JSON files hold ``{"config": ..., "records": [...]}``.
Phase times are modeled, not measured.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence


@dataclass(frozen=True)
class IterationRecord:
    t: int
    lr: float
    loss: float
    threshold: float
    union_size: int
    total_selected: int
    max_worker_count: int
    actual_density: float
    redundant_traffic_factor: float
    buildup_factor: float
    error_norm: float
    time_grad: float
    time_selection: float
    time_communication: float
    time_overhead: float


COLUMNS = tuple(f.name for f in fields(IterationRecord))
_INT_COLUMNS = {"t", "union_size", "total_selected", "max_worker_count"}


def actual_density(agg, n_g: int) -> float:
    """Fraction of the model aggregated this iteration."""
    if n_g <= 0:
        raise ValueError("n_g must be positive")
    return agg.union_size / n_g if hasattr(agg, "union_size") else len(agg.indices) / n_g


def threshold_error_scaling(deltas: Sequence[float], errors: Sequence[float]) -> float | None:
    """Ratio ``sum(deltas) / sum(errors)`` that maps the error series onto the
    threshold's range. ``None`` when the errors sum to zero."""
    if len(deltas) != len(errors) or len(deltas) == 0:
        raise ValueError("threshold and error series must be nonempty and of equal length")
    total = math.fsum(errors)
    if total == 0:
        return None
    return math.fsum(deltas) / total


def scaled_errors(deltas, errors) -> list[float] | None:
    factor = threshold_error_scaling(deltas, errors)
    if factor is None:
        return None
    return [factor * e for e in errors]


def _format(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def to_csv(records: Sequence[IterationRecord], config: dict | None = None) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(config or {}, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for r in records:
        writer.writerow([_format(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def to_json(records: Sequence[IterationRecord], config: dict | None = None) -> str:
    payload = {"config": config or {}, "records": [asdict(r) for r in records]}
    return json.dumps(payload, indent=1, sort_keys=False, allow_nan=True) + "\n"


def emit(records: Sequence[IterationRecord], fmt: str, path, config: dict | None = None) -> None:
    if fmt == "csv":
        text = to_csv(records, config)
    elif fmt == "json":
        text = to_json(records, config)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"could not write metrics to {path}: {exc}") from exc


def _parse_row(row: dict) -> IterationRecord:
    return IterationRecord(**{k: int(v) if k in _INT_COLUMNS else float(v) for k, v in row.items()})


def load_csv(path) -> tuple[dict, list[IterationRecord]]:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("# config: "):
            raise ValueError(f"{path}: missing config header line")
        config = json.loads(first[len("# config: "):])
        return config, [_parse_row(row) for row in csv.DictReader(fh)]


def load_json(path) -> tuple[dict, list[IterationRecord]]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return payload["config"], [IterationRecord(**r) for r in payload["records"]]
