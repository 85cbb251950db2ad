"""Lossless text output: every float is written with 17 significant digits."""
import json
import math
from importlib import resources

import numpy as np

__all__ = ["fmt", "dumps", "load_schema", "SCHEMAS"]

SCHEMAS = ("fit_result", "bootstrap_summary", "portfolio_summary")


def fmt(x):
    """17 significant digits; non-finite values become ``nan``/``inf`` text."""
    return format(float(x), ".17g")


def dumps(obj, indent=2, _level=0):
    """JSON text with every float written to 17 significant digits.

    Non-finite floats are written as ``null``.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not seq:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in seq]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def load_schema(name):
    """JSON Schema shipped with the package for ``fit_result``, ``bootstrap_summary``
    or ``portfolio_summary`` output."""
    if name not in SCHEMAS:
        raise KeyError(f"unknown schema {name!r}; choose from {SCHEMAS}")
    text = resources.files("nsvt").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)
