"""Deterministic CSV/JSON writers shared by the experiment outputs."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["fmt", "dumps", "write_csv", "write_json"]


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.12g" % float(v)


def write_csv(path, header, rows) -> Path:
    """Write ``rows`` under a one-line header, 12 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            if len(r) != len(header):
                raise ValueError(f"row has {len(r)} fields, header has {len(header)}")
            f.write(",".join(fmt(v) for v in r) + "\n")
    return path


def _plain(o):
    if isinstance(o, np.ndarray):
        return [_plain(v) for v in o.tolist()]
    if isinstance(o, (np.floating, float)):
        return float("%.12g" % float(o))
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    return o


def dumps(obj) -> str:
    """JSON text with sorted keys and floats rounded to 12 significant digits."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path
