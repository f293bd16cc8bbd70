"""Atomic, deterministic file output.

Every artifact is written to a temporary file in the target directory and
renamed into place, so a crash never leaves a partially written output.
JSON is serialized with sorted keys and non-finite floats mapped to the
strings "inf"/"-inf"/"nan" (strict JSON has no literals for them), which
keeps files byte-identical across reruns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from contextlib import suppress
from pathlib import Path

import numpy as np


def jsonify(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats into
    strict-JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    return obj


def dumps_json(obj) -> str:
    return json.dumps(jsonify(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with suppress(OSError):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps_json(obj))


def write_csv(path, rows) -> Path:
    """RFC-4180 CSV (CRLF line endings, '.' decimal separator)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    for row in rows:
        writer.writerow(row)
    return atomic_write_text(path, buf.getvalue())
