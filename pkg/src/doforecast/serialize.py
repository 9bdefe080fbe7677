"""Versioned text format for model parameters.

Layout (UTF-8, one item per line)::

    doforecast-params 1
    meta <single-line JSON object>
    param <name> <ndim> <dim_0> ... <dim_n-1>
    <row-major values, space separated, Python float repr>
    ...
    end

``repr`` of a float64 is the shortest string that parses back to the same
bits, so save/load is exact. Parameters appear in sorted name order.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import DataError
from .models import Forecaster, model_from_params

MAGIC = "doforecast-params"
VERSION = 1


def save_params(path, params: dict[str, np.ndarray], meta: dict | None = None) -> Path:
    path = Path(path)
    lines = [f"{MAGIC} {VERSION}", "meta " + json.dumps(meta or {}, sort_keys=True)]
    for name in sorted(params):
        arr = np.asarray(params[name], dtype=np.float64)
        if any(c.isspace() for c in name):
            raise ValueError(f"parameter name {name!r} contains whitespace")
        lines.append(" ".join(["param", name, str(arr.ndim), *map(str, arr.shape)]))
        lines.append(" ".join(map(repr, arr.ravel().tolist())))
    lines.append("end")
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_params(path):
    """Returns ``(params, meta)``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such parameter file: {path}")
    lines = path.read_text(encoding="utf-8").split("\n")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MAGIC:
        raise DataError(f"{path} is not a parameter file")
    if int(head[1]) != VERSION:
        raise DataError(f"{path} has format version {head[1]}, expected {VERSION}")
    if not lines[1].startswith("meta "):
        raise DataError(f"{path}: missing meta line")
    meta = json.loads(lines[1][5:])
    params = {}
    i = 2
    while i < len(lines) and lines[i] != "end":
        parts = lines[i].split()
        if not parts or parts[0] != "param":
            raise DataError(f"{path}:{i + 1}: expected a param header")
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(d) for d in parts[3:3 + ndim])
        raw = lines[i + 1].split() if i + 1 < len(lines) else []
        values = np.array([float(v) for v in raw], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise DataError(f"{path}:{i + 2}: {name} holds {values.size} values, shape {shape}")
        params[name] = values.reshape(shape)
        i += 2
    if i >= len(lines):
        raise DataError(f"{path}: truncated (no end marker)")
    return params, meta


def save_model(path, model: Forecaster, extra: dict | None = None) -> Path:
    meta = {"model": model.config(), **(extra or {})}
    return save_params(path, model.params, meta)


def load_model(path):
    """Returns ``(model, meta)``; ``meta["model"]`` holds the architecture."""
    params, meta = load_params(path)
    if "model" not in meta:
        raise DataError(f"{path} carries no model description")
    return model_from_params(meta["model"], params), meta
