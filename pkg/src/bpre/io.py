"""CSV/JSON artifact writers with a fixed, round-trip-exact float format."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def dumps(payload, config=None) -> str:
    doc = {"format_version": FORMAT_VERSION}
    if config is not None:
        doc["config"] = config
    doc.update(payload)
    return json.dumps(to_jsonable(doc), sort_keys=True, indent=2) + "\n"


def write_json(path, payload, config=None) -> Path:
    path = Path(path)
    path.write_text(dumps(payload, config))
    return path


def write_csv(path, header, rows, config=None) -> Path:
    """CSV with ``#``-prefixed metadata lines (format version and resolved config)."""
    path = Path(path)
    lines = [f"# format_version={FORMAT_VERSION}"]
    if config is not None:
        lines.append("# config=" + json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":")))
    lines.append(",".join(header))
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path):
    """Header and rows (as strings) of a CSV written by :func:`write_csv`."""
    body = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = body[0].split(",")
    return header, [ln.split(",") for ln in body[1:]]
