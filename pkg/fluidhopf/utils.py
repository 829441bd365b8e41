# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

import csv
import importlib
import json
import logging
import math
import os

import numpy as np

from fluidhopf.exceptions import ConfigError, FluidHopfError

APP_LOGGER = "fluidhopf"

_error_log = []


def logger(module=None):
    """
    Named logger of the app, or of one of its units (``logger("mc_oracle")``).
    """
    if not module:
        return logging.getLogger(APP_LOGGER)
    return logging.getLogger(f"{APP_LOGGER}.{module}")


def log_error(message, title="fluidhopf"):
    """
    Log an error under a title and keep it in the in-process error log.
    """
    _error_log.append({"title": title, "message": str(message)})
    logger().error("[%s] %s", title, message)


def error_log():
    return list(_error_log)


def clear_error_log():
    _error_log.clear()


def throw(message, exc=FluidHopfError, title=None):
    log_error(message, title or exc.__name__)
    raise exc(message)


def get_attr(method_path):
    """
    Resolve a dotted path such as ``fluidhopf.cli.run_factorize``.
    """
    module_name, _, attr = method_path.rpartition(".")
    if not module_name:
        raise ConfigError(f"Not a dotted path: {method_path}")
    module = importlib.import_module(module_name)
    try:
        return getattr(module, attr)
    except AttributeError:
        raise ConfigError(f"{module_name} has no attribute {attr}") from None


def thread_count(default=1):
    """
    Worker-thread cap from ``FLUIDHOPF_THREADS``.
    """
    raw = os.environ.get("FLUIDHOPF_THREADS")
    if not raw:
        return default
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"FLUIDHOPF_THREADS must be an integer, got {raw!r}") from None
    return max(1, threads)


def format_float(value):
    return format(float(value), ".17g")


def _to_plain(obj):
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        # 17 significant digits; non-finite values have no JSON literal
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, (int, str)):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = [f"{pad}{_emit(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"Cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent=2):
    """
    JSON text with every float written with 17 significant digits.
    """
    return _emit(_to_plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))


def write_csv(path, header, rows):
    """
    CSV with a header row, '.' decimals and '\\n' line endings.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
