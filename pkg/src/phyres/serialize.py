"""JSON emission with full-precision decimal floats.

The stock json encoder writes shortest-round-trip floats; file formats in
this package promise >= 15 significant digits, so floats are rendered with
'%.17g' (17 significant digits round-trip any binary64 exactly).
"""

from __future__ import annotations

import json

import numpy as np


def _fmt_float(x: float) -> str:
    if x != x:
        raise ValueError("NaN is not representable in the file formats")
    if x in (float("inf"), float("-inf")):
        raise ValueError("infinity is not representable in the file formats")
    return format(float(x), ".17g")


def dumps(obj) -> str:
    """Serialize to compact JSON with 17-significant-digit floats."""
    if isinstance(obj, float) or isinstance(obj, np.floating):
        return _fmt_float(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist())
    if isinstance(obj, dict):
        items = ",".join(f"{json.dumps(str(k))}:{dumps(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(dumps(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
