"""Experiment and estimator configuration, JSON schema, and seed derivation.

A config file is a JSON object validated against :data:`EXPERIMENT_SCHEMA`.
Every run embeds its fully resolved config in the report, so replaying a run
only needs that embedded object.

Seeds: one master seed per experiment; component seeds come from
``derive_seed(master, name)``, which feeds ``[master, crc32(name)]`` to
``numpy.random.SeedSequence`` and takes its first 63-bit word.
"""

from __future__ import annotations

import dataclasses
import json
import re
import zlib
from dataclasses import dataclass, field
from typing import Any

import jsonschema
import numpy as np

from .affine import AffineConfig
from .corruption import ADVERSARIES, CorruptionSpec
from .robust_stats import FilterConfig, WarmStartConfig
from .rotation import RotationConfig
from .shift_scale import ShiftScaleConfig

MODES = ("shift_scale", "rotation", "affine")


class ConfigError(ValueError):
    """Invalid configuration; ``line`` is the 1-based line in the source text when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def derive_seed(master: int, name: str) -> int:
    ss = np.random.SeedSequence([int(master), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# --------------------------------------------------------------------------- dataclass <-> dict

def as_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: as_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, tuple):
        return list(obj)
    return obj


def build(cls, obj: dict | None):
    """Build ``cls`` from a (possibly partial) dict, recursing into dataclass fields."""
    obj = obj or {}
    kwargs = {}
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    for f in dataclasses.fields(cls):
        if f.name not in obj:
            continue
        cur = getattr(defaults, f.name)
        val = obj[f.name]
        if dataclasses.is_dataclass(cur):
            val = build(type(cur), val)
        elif isinstance(cur, tuple):
            val = tuple(val)
        kwargs[f.name] = val
    return cls(**kwargs)


# --------------------------------------------------------------------------- configs

@dataclass
class EstimatorConfig:
    """All tunable constants, grouped by component."""

    robust: FilterConfig = field(default_factory=FilterConfig)
    warm: WarmStartConfig = field(default_factory=WarmStartConfig)
    shift_scale: ShiftScaleConfig = field(default_factory=ShiftScaleConfig)
    rotation: RotationConfig = field(default_factory=lambda: RotationConfig(patience=200))
    c_stop: float = 1.0
    max_rounds: int = 10
    plateau_rounds: int = 2
    max_condition: float = 100.0
    warm_mode: str = "moment"
    oracle_delta: float = 0.05
    mc_samples: int = 200_000

    def affine(self) -> AffineConfig:
        rot = dataclasses.replace(self.rotation, mean_filter=self.robust)
        return AffineConfig(c_stop=self.c_stop, max_rounds=self.max_rounds,
                            plateau_rounds=self.plateau_rounds, warm_mode=self.warm_mode,
                            oracle_delta=self.oracle_delta, max_condition=self.max_condition,
                            shift_scale=self.shift_scale, rotation=rot, warm=self.warm)


@dataclass
class TruthConfig:
    mode: str = "affine"
    max_condition: float = 5.0  # for random affine truths
    side_range: tuple[float, float] = (0.5, 2.0)  # for random boxes
    center_range: tuple[float, float] = (-1.0, 1.0)
    body: dict | None = None  # explicit Parallelopiped; overrides the random draw


@dataclass
class ExperimentConfig:
    d: int = 3
    n: int = 200_000
    mode: str | None = None  # estimator; defaults to the truth mode
    truth: TruthConfig = field(default_factory=TruthConfig)
    corruption: dict = field(default_factory=lambda: {"epsilon": 0.02, "adversary": "corner_shift"})
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    seed: int = 0
    output: dict = field(default_factory=dict)

    @property
    def estimator_mode(self) -> str:
        return self.mode or self.truth.mode

    @property
    def epsilon(self) -> float:
        return float(self.corruption.get("epsilon", 0.0))

    def corruption_spec(self) -> CorruptionSpec:
        c = dict(self.corruption)
        c.setdefault("seed", derive_seed(self.seed, "corruption"))
        return CorruptionSpec.from_dict(c)

    def seeds(self) -> dict[str, int]:
        return {name: derive_seed(self.seed, name) for name in ("truth", "sample", "estimator", "tv")} | {
            "corruption": self.corruption_spec().seed}

    def to_dict(self) -> dict:
        return as_dict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        validate(obj)
        return build(cls, obj)


# --------------------------------------------------------------------------- schema

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}


def _object(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


def _dataclass_schema(cls) -> dict:
    props = {}
    for f in dataclasses.fields(cls):
        cur = getattr(cls(), f.name)
        if dataclasses.is_dataclass(cur):
            props[f.name] = _dataclass_schema(type(cur))
        elif isinstance(cur, bool):
            props[f.name] = {"type": "boolean"}
        elif isinstance(cur, int):
            props[f.name] = {"type": ["integer", "null"]} if f.name == "patience" else {"type": "integer"}
        elif isinstance(cur, float):
            props[f.name] = {"type": ["number", "null"]} if f.name == "norm_cap" else _NUM
        elif isinstance(cur, str):
            props[f.name] = {"type": "string"}
        elif cur is None:
            props[f.name] = {"type": ["integer", "number", "null"]}
        else:
            props[f.name] = {}
    return _object(props)


def _estimator_schema() -> dict:
    s = _dataclass_schema(EstimatorConfig)
    s["properties"]["warm_mode"] = {"enum": ["moment", "oracle"]}
    s["properties"]["mc_samples"] = _POS_INT
    s["properties"]["max_rounds"] = _POS_INT
    return s


EXPERIMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "robust-affine experiment",
    **_object({
        "d": {"type": "integer", "minimum": 1, "maximum": 64},
        "n": {"type": "integer", "minimum": 1},
        "mode": {"enum": [*MODES, None]},
        "truth": _object({
            "mode": {"enum": list(MODES)},
            "max_condition": {"type": "number", "minimum": 1},
            "side_range": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                           "minItems": 2, "maxItems": 2},
            "center_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            "body": {"type": ["object", "null"]},
        }),
        "corruption": _object({
            "epsilon": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
            "adversary": {"enum": list(ADVERSARIES)},
            "params": {"type": "object"},
            "seed": {"type": "integer", "minimum": 0},
        }, required=("epsilon",)),
        "estimator": _estimator_schema(),
        "seed": {"type": "integer", "minimum": 0},
        "output": _object({"report": {"type": ["string", "null"]}, "points": {"type": ["string", "null"]}}),
    }),
}


def _line_of(text: str | None, path) -> int | None:
    """Line of the last key in ``path`` found in order through ``text``."""
    if not text:
        return None
    pos, found = 0, None
    for key in path:
        if not isinstance(key, str):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos, found = m.end(), m.start()
    return None if found is None else text.count("\n", 0, found) + 1


def validate(obj: Any, text: str | None = None) -> None:
    validator = jsonschema.Draft202012Validator(EXPERIMENT_SCHEMA)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {e.message}", _line_of(text, list(e.absolute_path)))
    try:
        CorruptionSpec.from_dict(obj.get("corruption", {"epsilon": 0.0}) | {"seed": 0})
    except ValueError as exc:
        raise ConfigError(f"corruption: {exc}", _line_of(text, ["corruption"])) from None


def load_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config, reporting the offending line on error."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object", 1)
    validate(obj, text)
    try:
        return build(ExperimentConfig, obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
