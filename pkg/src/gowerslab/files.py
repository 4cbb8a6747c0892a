"""Reading and writing dense complex vectors (functions and spectra)."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np


def read_values(path: str | Path) -> np.ndarray:
    """Load a complex vector from CSV (columns re,im) or JSON ([[re, im], ...])."""
    path = Path(path)
    text = path.read_text()
    if not text.strip():
        raise ValueError(f"input: file {path} is empty")
    if path.suffix.lower() == ".json" or text.lstrip().startswith("["):
        return _parse_json(text, path)
    return _parse_csv(text, path)


def _parse_json(text: str, path: Path) -> np.ndarray:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"input: {path} is not valid JSON ({exc})") from exc
    if isinstance(data, dict):
        data = data.get("values")
    if not isinstance(data, list) or not data:
        raise ValueError(f"input: {path} must hold a non-empty list of [re, im] pairs")
    out = np.empty(len(data), dtype=complex)
    for i, pair in enumerate(data):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ValueError(f"input: entry {i} of {path} is not a [re, im] pair")
        out[i] = complex(float(pair[0]), float(pair[1]))
    return out


def _parse_csv(text: str, path: Path) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and rows[0][0].strip().lower() in ("re", "real"):
        rows = rows[1:]
    if not rows:
        raise ValueError(f"input: {path} has no data rows")
    out = np.empty(len(rows), dtype=complex)
    for i, row in enumerate(rows):
        if len(row) not in (1, 2):
            raise ValueError(f"input: row {i + 1} of {path} must have columns re,im")
        try:
            re_part = float(row[0])
            im_part = float(row[1]) if len(row) == 2 else 0.0
        except ValueError as exc:
            raise ValueError(f"input: row {i + 1} of {path} is not numeric") from exc
        out[i] = complex(re_part, im_part)
    return out


def values_to_csv(values: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re", "im"])
    for v in np.asarray(values, dtype=complex):
        w.writerow([repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue()


def values_to_json(values: np.ndarray) -> list[list[float]]:
    return [[float(v.real), float(v.imag)] for v in np.asarray(values, dtype=complex)]


def write_values(path: str | Path, values: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(values_to_json(values)))
    else:
        path.write_text(values_to_csv(values))
