"""CSV datasets with JSON sidecars; all writes go through a temp file and rename."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np


class DatasetError(ValueError):
    """A dataset file could not be parsed."""


def _fmt(v) -> str:
    return repr(float(v))


def atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns: dict[str, np.ndarray]) -> str:
    names = list(columns)
    rows = zip(*(np.asarray(columns[n], dtype=float) for n in names))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_dataset(out_dir: Path, stem: str, columns: dict[str, np.ndarray],
                  metadata: dict) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path, meta_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    csv_body, meta_body = csv_text(columns), json_text(metadata)
    atomic_write_text(csv_path, csv_body)
    atomic_write_text(meta_path, meta_body)
    return csv_path, meta_path


def read_csv_columns(path: Path, required: tuple[str, ...] | None = None) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read ({exc.strerror})") from None
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DatasetError(f"{path}: empty file") from None
    if required and any(r not in header for r in required):
        raise DatasetError(f"{path}:1: header must contain {', '.join(required)}; got {header}")
    data = [[] for _ in header]
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: cannot parse {cell!r} as a number") from None
            if not math.isfinite(v):
                raise DatasetError(f"{path}:{lineno}: non-finite value {cell!r}")
            data[j].append(v)
    return {h: np.asarray(col) for h, col in zip(header, data)}


def read_metadata(csv_path: Path) -> dict:
    meta_path = Path(csv_path).with_suffix(".json")
    if not meta_path.exists():
        return {}
    try:
        return json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{meta_path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise DatasetError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None


def complex_from(value) -> complex:
    """Accept a number, a [re, im] pair, or a string like '1+0.5j'."""
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", ""))
    return complex(value)
