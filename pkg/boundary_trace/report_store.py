"""
Byte-stable JSON and CSV report emission, plus a keyed JSON store of run summaries.
"""
import csv
import io
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from boundary_trace.domain_file import format_exact
from boundary_trace.errors import ReportIOError
from boundary_trace.whitney import CubeAnchor, WhitneyDecomposition

logger = logging.getLogger(__name__)

CUBE_FIELDS = ("index", "cx", "cy", "r", "depth", "aQx", "aQy", "sector_id")
FORMATS = ("json", "csv")


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become strings, Fractions exact decimals."""
    if isinstance(value, BaseModel):
        return to_jsonable(value.model_dump())
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, Fraction):
        return format_exact(value)
    if isinstance(value, (float, np.floating)):
        number = float(value)
        if math.isfinite(number):
            return number
        return "inf" if number > 0 else ("-inf" if number < 0 else "nan")
    return value


def dumps(report: Any) -> str:
    """Sorted keys and shortest round-trip floats, newline terminated."""
    return json.dumps(to_jsonable(report), indent=2, sort_keys=True) + "\n"


def _csv_text(rows: Sequence[Mapping[str, Any]], fieldnames: Optional[Sequence[str]]) -> str:
    if fieldnames is None:
        fieldnames = list(rows[0].keys()) if rows else []
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
    if fieldnames:
        writer.writeheader()
    for row in rows:
        writer.writerow({k: to_jsonable(v) for k, v in row.items()})
    return buffer.getvalue()


def emit_report(
    report: Any,
    path: Union[str, Path],
    format: str = "json",
    fieldnames: Optional[Sequence[str]] = None,
) -> None:
    """Write ``report`` as JSON, or rows of mappings as CSV.

    Raises:
        ReportIOError: If the file cannot be written
    """
    if format not in FORMATS:
        raise ValueError(f"unknown report format {format!r}")
    text = dumps(report) if format == "json" else _csv_text(list(report), fieldnames)
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise ReportIOError(f"cannot write report {path}: {e}") from e
    logger.info(f"Wrote {format} report to {path}")


def cube_rows(dec: WhitneyDecomposition, table: Optional[Mapping[int, CubeAnchor]] = None) -> List[Dict[str, Any]]:
    """One row per cube in the fixed cube CSV schema."""
    rows = []
    for k, cube in enumerate(dec.cubes):
        anchor = table[k] if table else None
        rows.append(
            {
                "index": k,
                "cx": format_exact(cube.center.x),
                "cy": format_exact(cube.center.y),
                "r": format_exact(cube.half_side),
                "depth": cube.depth,
                "aQx": format_exact(anchor.a_q.point.x) if anchor else "",
                "aQy": format_exact(anchor.a_q.point.y) if anchor else "",
                "sector_id": anchor.omega_q.sector_id if anchor else "",
            }
        )
    return rows


class ReportStore:
    """Run summaries kept in one JSON file, keyed by name.

    Example:
        store = ReportStore("runs.json")
        store.set("check-fp", report)
        store.get("check-fp")["gamma_hat"]
    """

    def __init__(self, store_file: Union[str, Path] = "runs.json"):
        self.store_file = Path(store_file)
        if not self.store_file.exists():
            self._save({})

    def _load(self) -> Dict[str, Any]:
        if not self.store_file.exists():
            return {}
        try:
            with open(self.store_file, "r", encoding="utf-8") as f:
                return json.load(f)
        except (json.JSONDecodeError, OSError) as e:
            logger.warning(f"Ignoring unreadable report store {self.store_file}: {e}")
            return {}

    def _save(self, data: Dict[str, Any]) -> None:
        try:
            with open(self.store_file, "w", encoding="utf-8", newline="") as f:
                f.write(dumps(data))
        except OSError as e:
            raise ReportIOError(f"cannot write report store {self.store_file}: {e}") from e

    def set(self, key: str, value: Any) -> None:
        data = self._load()
        data[key] = to_jsonable(value)
        self._save(data)

    def get(self, key: str, default: Any = None) -> Any:
        return self._load().get(key, default)

    def get_all(self) -> Dict[str, Any]:
        return self._load()

    def delete(self, key: str) -> bool:
        data = self._load()
        if key in data:
            del data[key]
            self._save(data)
            return True
        return False

    def keys(self) -> Iterable[str]:
        return sorted(self._load())
