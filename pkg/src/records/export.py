"""CSV result files with a JSON sidecar ``<name>.csv.json`` holding parameters and summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from core.config import RESULTS_DIR


def to_jsonable(obj: Any) -> Any:
    """numpy scalars and arrays to plain JSON values; complex numbers become [re, im]."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def resolve_output(path: str | Path) -> Path:
    """Bare file names go to the results directory; anything with a folder is kept as given."""
    path = Path(path)
    if not path.is_absolute() and path.parent == Path("."):
        path = RESULTS_DIR / path
    return path


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.name + ".json")


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[dict], meta: dict | None = None) -> Path:
    """Write a header row plus one row per dict, then the JSON sidecar when ``meta`` is given."""
    path = resolve_output(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v) for k, v in row.items()})
    if meta is not None:
        write_json(sidecar_path(path), meta)
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(payload), indent=2) + "\n", encoding="utf-8")
    return path


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
