"""Atomic, deterministic file output (CSV, JSON, binary)."""
from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np


def _atomic_write(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)  # mkstemp creates 0600 files
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    _atomic_write(path, text.encode("utf-8"))


def atomic_write_bytes(path, data: bytes):
    _atomic_write(path, data)


def fmt_number(x) -> str:
    """Plain decimal below 1e6 in magnitude, scientific notation from 1e6 up."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)) and abs(int(x)) < 10**6:
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if abs(x) >= 1e6:
        return f"{x:.12e}"
    return repr(x) if x == 0 else f"{x:.15g}"


def format_csv_rows(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_number(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    atomic_write_text(path, format_csv_rows(header, rows))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None  # non-finite values become null
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps_json(obj))


KERNEL_MAGIC = b"IUKERNL1"


def write_kernel_binary(path, matrix: np.ndarray, t: float, K: int, log_scale: float = 0.0):
    """Header: magic, N (int64), t (float64), K (int64), log_scale (float64); then
    N*N float64 entries, row-major, little endian."""
    matrix = np.ascontiguousarray(matrix, dtype="<f8")
    N = matrix.shape[0]
    header = KERNEL_MAGIC + struct.pack("<qdqd", N, float(t), int(K), float(log_scale))
    atomic_write_bytes(path, header + matrix.tobytes(order="C"))


def read_kernel_binary(path):
    data = Path(path).read_bytes()
    if data[:8] != KERNEL_MAGIC:
        raise ValueError("not a kernel file")
    N, t, K, log_scale = struct.unpack("<qdqd", data[8:40])
    mat = np.frombuffer(data[40:], dtype="<f8").reshape(N, N)
    return mat, t, K, log_scale
