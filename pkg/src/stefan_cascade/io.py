"""Atomic file output: JSON, CSV and PGM."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a sibling temp file, fsync, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, infinities as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: str | Path, obj: Any) -> None:
    atomic_write_text(path, dumps(obj))


def write_csv(path: str | Path, header: list[str], rows: Any) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def _csv_cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        x = float(v)
        return "inf" if math.isinf(x) and x > 0 else repr(x)
    return str(v)


def field_to_pgm(values: NDArray[np.float64], cap: float | None = None) -> bytes:
    """8-bit binary PGM of a 2D field; infinite cells map to white.

    Row 0 of the image is the top (largest ``y``); ``values`` is indexed ``[i_x, j_y]``.
    """
    v = np.asarray(values, dtype=float)
    finite = np.isfinite(v)
    top = cap if cap is not None and math.isfinite(cap) else (float(v[finite].max()) if finite.any() else 1.0)
    top = top if top > 0 else 1.0
    img = np.where(finite, np.clip(v / top, 0.0, 1.0) * 254.0, 255.0).round().astype(np.uint8)
    img = img.T[::-1]
    ny, nx = img.shape
    return f"P5\n{nx} {ny}\n255\n".encode() + img.tobytes()


def write_pgm(path: str | Path, values: NDArray[np.float64], cap: float | None = None) -> None:
    atomic_write_bytes(path, field_to_pgm(values, cap))


def read_pgm(path: str | Path) -> NDArray[np.uint8]:
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    nx, ny = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(ny, nx)
