"""File formats: instances, parameter vectors, distributions (JSON) and result tables (CSV)."""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .core import ParameterVector, WeightMatrix
from .errors import AllocLabError, ConfigError

__all__ = [
    "BUILTIN_INSTANCES",
    "fmt",
    "instance_to_json",
    "instance_from_json",
    "load_instance",
    "save_instance",
    "load_params",
    "save_params",
    "load_json",
    "dump_json",
    "write_csv",
]

BUILTIN_INSTANCES = {
    "two_by_two": [[1.0, 2.0], [2.0, 1.0]],
    "three_by_three": [[1.0, 2.0, 3.0], [3.0, 1.0, 2.0], [2.0, 3.0, 1.0]],
    "restricted_pair": [[1.0, "inf", 2.0], ["inf", 1.0, 2.0]],
}


def fmt(v) -> str:
    """17 significant digits, enough to read back the identical double."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


def _num(v):
    # JSON numbers are written from the 17-digit string so files match fmt()
    return float(fmt(v)) if math.isfinite(float(v)) else ("inf" if v > 0 else "-inf")


def instance_to_json(P: WeightMatrix, **extra) -> dict:
    out = {"m": P.m, "n": P.n, "weights": [[_num(v) if a else "inf" for v, a in zip(vr, ar)]
                                            for vr, ar in zip(P.values, P.admissible)]}
    out.update(extra)
    return out


def instance_from_json(data) -> WeightMatrix:
    try:
        rows = data["weights"]
        P = WeightMatrix.from_rows(rows)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed instance: {exc}") from exc
    if ("m" in data and data["m"] != P.m) or ("n" in data and data["n"] != P.n):
        raise ConfigError("declared m/n do not match the weight matrix")
    return P


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc


def dump_json(obj, path=None):
    """Deterministic JSON (sorted keys, fixed separators); stdout when ``path`` is None."""
    text = json.dumps(obj, sort_keys=True, indent=1, separators=(",", ": ")) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def load_instance(ref) -> WeightMatrix:
    """Read an instance file, or build one of the named instances in BUILTIN_INSTANCES."""
    if isinstance(ref, str) and ref in BUILTIN_INSTANCES and not Path(ref).exists():
        return WeightMatrix.from_rows(BUILTIN_INSTANCES[ref])
    return instance_from_json(load_json(ref))


def save_instance(P: WeightMatrix, path, **extra):
    dump_json(instance_to_json(P, **extra), path)


def load_params(path) -> ParameterVector:
    data = load_json(path)
    try:
        return ParameterVector(np.array([float(v) for v in data["logw"]]))
    except (KeyError, TypeError, ValueError, AllocLabError) as exc:
        raise ConfigError(f"malformed parameter file: {exc}") from exc


def save_params(params: ParameterVector, path, **extra):
    out = {"logw": [_num(v) for v in params.logw]}
    out.update(extra)
    dump_json(out, path)


def write_csv(header, rows, path=None):
    """CSV with a header row and ``\\n`` line endings; floats via :func:`fmt`."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer)) and not isinstance(v, bool) else v
                    for v in row])
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
