# Copyright (c) 2026, fluidhopf contributors
# For license information, please see license.txt

"""
Run configuration: a JSON file with the sections declared in
fluid_config.json, checked field by field and filled with defaults.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from fluidhopf import hooks
from fluidhopf.exceptions import ConfigError, ModelError
from fluidhopf.fluid_passage.model.model import (
    ConstantFamily,
    FluidModel,
    FourierPolynomialFamily,
    FourierTerm,
    PiecewiseConstantFamily,
    PolynomialTerm,
    StateSpace,
    validate_model,
)
from fluidhopf.fluid_passage.passage_pde.passage_pde import BoundaryFunction
from fluidhopf.fluid_passage.verify.verify import check_tolerances
from fluidhopf.utils import logger

SCHEMA_PATH = Path(__file__).resolve().parent.parent / hooks.config_schema


@dataclass(frozen=True)
class Field:
    fieldname: str
    fieldtype: str
    default: object = None
    reqd: bool = False
    options: tuple = ()


@dataclass(frozen=True)
class Section:
    name: str
    fields: dict
    reqd: bool = False
    always: bool = False


def _default(fieldtype, raw):
    if raw is None:
        return None
    if fieldtype == "Float":
        return float(raw)
    if fieldtype == "Int":
        return int(raw)
    if fieldtype == "JSON":
        return json.loads(raw)
    return str(raw)


@lru_cache(maxsize=1)
def load_schema(path=SCHEMA_PATH):
    """
    Sections of the config schema, in file order. Every Section Break opens
    a section; a section with a default is created even when absent.
    """
    with open(path) as f:
        doc = json.load(f)
    sections = {}
    current = None
    for df in doc["fields"]:
        if df["fieldtype"] == "Section Break":
            current = Section(df["fieldname"], {}, bool(df.get("reqd")), "default" in df)
            sections[current.name] = current
            continue
        current.fields[df["fieldname"]] = Field(
            fieldname=df["fieldname"],
            fieldtype=df["fieldtype"],
            default=_default(df["fieldtype"], df.get("default")),
            reqd=bool(df.get("reqd")),
            options=tuple(df.get("options", "").split("\n")) if df.get("options") else (),
        )
    return sections


def _coerce(key, df, value):
    if value is None:
        if df.reqd:
            raise ConfigError(f"{key} is required")
        return None
    kind = df.fieldtype
    if kind == "Float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if kind == "Int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if kind in ("Data", "Select"):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        if df.options and value not in df.options:
            raise ConfigError(f"{key} must be one of {list(df.options)}, got {value!r}")
        return value
    return copy.deepcopy(value)


@dataclass(frozen=True)
class Config:
    data: dict

    def section(self, name):
        if name not in self.data:
            raise ConfigError(f"config has no {name} section")
        return copy.deepcopy(self.data[name])

    def has(self, name):
        return name in self.data

    @property
    def seed(self):
        return self.data["numerics"]["seed"]

    def to_dict(self):
        return copy.deepcopy(self.data)

    @property
    def config_hash(self):
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def parse(data):
    """Check a raw config mapping against the schema and fill defaults."""
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    schema = load_schema()
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config section {unknown[0]!r}")

    out = {}
    for name, section in schema.items():
        raw = data.get(name)
        if raw is None:
            if section.reqd:
                raise ConfigError(f"config section {name!r} is required")
            if not section.always:
                continue
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        extra = sorted(set(raw) - set(section.fields))
        if extra:
            raise ConfigError(f"unknown config key {name}.{extra[0]}")
        out[name] = {
            key: _coerce(f"{name}.{key}", df, copy.deepcopy(df.default) if raw.get(key) is None else raw[key])
            for key, df in section.fields.items()
        }
    check_tolerances(out["numerics"]["tolerances"])
    return Config(out)


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data, overrides=(), seed=None):
    """
    Apply ``section.key=value`` overrides (value parsed as JSON, else kept
    as a string) and an optional seed to a raw config mapping.
    """
    data = copy.deepcopy(data)
    for item in overrides:
        path, sep, text = item.partition("=")
        section, dot, key = path.partition(".")
        if not sep or not dot or not section or not key:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        target = data.setdefault(section, {})
        if not isinstance(target, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        target[key] = _parse_value(text)
    if seed is not None:
        data.setdefault("numerics", {})["seed"] = int(seed)
    return data


def load(path, overrides=(), seed=None):
    try:
        with open(path) as f:
            raw = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    config = parse(apply_overrides(raw, overrides, seed))
    logger("config").info("loaded %s config_hash=%s", path, config.config_hash)
    return config


def build_state_space(config):
    model = config.section("model")
    try:
        return StateSpace(tuple(str(x) for x in model["states"]), tuple(float(x) for x in model["v"]))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"model.states / model.v: {e}") from None


def build_family(entry, bound_K=None):
    """Generator family from its config form (the family's ``to_dict`` output)."""
    if not isinstance(entry, dict):
        raise ConfigError("model.generator must be an object")
    kind = entry.get("kind")
    try:
        if kind == "constant":
            return ConstantFamily(entry["matrix"], bound_K)
        if kind == "piecewise_constant":
            return PiecewiseConstantFamily(entry["breakpoints"], entry["matrices"], bound_K)
        if kind == "fourier_polynomial":
            fourier = [FourierTerm(np.asarray(t["matrix"], dtype=float), t["frequency"], t.get("phase", 0.0)) for t in entry.get("fourier", [])]
            polynomial = [PolynomialTerm(np.asarray(t["matrix"], dtype=float), t["degree"]) for t in entry.get("polynomial", [])]
            return FourierPolynomialFamily(entry["base"], fourier, polynomial, bound_K)
    except KeyError as e:
        raise ConfigError(f"model.generator of kind {kind!r} is missing {e}") from None
    raise ConfigError(f"unknown generator kind {kind!r}")


def build_model(config):
    """
    Validated FluidModel of the config; any violated structural assumption
    is a ConfigError.
    """
    section = config.section("model")
    numerics = config.section("numerics")
    space = build_state_space(config)
    try:
        family = build_family(section["generator"], section["bound_K"])
        report = validate_model(space, family, numerics["check_resolution"], section["horizon"])
        report.raise_for_violations()
        return FluidModel(space, family, section["horizon"])
    except ModelError as e:
        raise ConfigError(f"invalid model: {e}") from e


def _state(space, label, key):
    try:
        return space.index(str(label))
    except (KeyError, ValueError):
        raise ConfigError(f"{key}: unknown state {label!r}") from None


def build_boundary(entry, state_space, key="boundary"):
    """BoundaryFunction from its config form; states are given by label."""
    if not isinstance(entry, dict):
        raise ConfigError(f"{key} must be an object")
    kind = entry.get("kind")
    try:
        if kind == "exp_indicator":
            return BoundaryFunction.exp_indicator(entry["c"], _state(state_space, entry["j"], key), entry.get("eta"))
        if kind == "table":
            states = [_state(state_space, label, key) for label in entry["states"]]
            return BoundaryFunction.table(entry["s_nodes"], entry["values"], states, bool(entry.get("smooth", False)))
        if kind == "indicator":
            return BoundaryFunction.indicator([_state(state_space, label, key) for label in entry["states"]])
        if kind == "zero":
            return BoundaryFunction.zero()
    except ConfigError:
        raise
    except KeyError as e:
        raise ConfigError(f"{key} of kind {kind!r} is missing {e}") from None
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    raise ConfigError(f"unknown boundary kind {kind!r}")
