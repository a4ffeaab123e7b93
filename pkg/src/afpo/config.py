"""YAML pool definitions: schema, validation and conversion to a :class:`Pool`.

Example::

    solver:
      epsilon: 1.0e-14
      max_iter: 200
      delta: 1.0
    outputs:
      rule_table: rule.csv
      report: report.json
    participants:
      - name: p1
        loss:
          compound_poisson:
            lambda: 0.13
            severity: {negbinom: {r: 1, q: 0.41}}
        disutility: {crra: {sigma: 2}}
      - name: p2
        loss: {gamma: {shape: 2.0, rate: 1.0}}
        disutility: {exp: {gamma: 3}}

A loss may also be given as ``{pmf: [p0, p1, ...]}`` on the lattice of step
``delta``; severities accept the same ``pmf`` form.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .dist import (
    KMAX_CAP,
    CompoundPoissonSpec,
    LatticeDistribution,
    compound_poisson,
    discretize_gamma,
    negbinom_pmf,
)
from .pool import Participant, Pool
from .preferences import CRRA, DisutilityModel, ExponentialType

__all__ = [
    "ConfigError",
    "SCHEMA",
    "PoolConfig",
    "load_config",
    "parse_config",
    "build_pool",
    "dump_config",
]

_POS = {"type": "number", "exclusiveMinimum": 0}


def _one_key(name: str, body: dict) -> dict:
    return {
        "type": "object",
        "properties": {name: body},
        "required": [name],
        "additionalProperties": False,
    }


_PMF = {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1}

_SEVERITY = {
    "oneOf": [
        _one_key(
            "negbinom",
            {
                "type": "object",
                "properties": {
                    "r": {"type": "integer", "minimum": 1},
                    "q": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                },
                "required": ["r", "q"],
                "additionalProperties": False,
            },
        ),
        _one_key("pmf", _PMF),
    ]
}

_LOSS = {
    "oneOf": [
        _one_key(
            "compound_poisson",
            {
                "type": "object",
                "properties": {"lambda": _POS, "severity": _SEVERITY},
                "required": ["lambda", "severity"],
                "additionalProperties": False,
            },
        ),
        _one_key("pmf", _PMF),
        _one_key(
            "gamma",
            {
                "type": "object",
                "properties": {"shape": _POS, "rate": _POS},
                "required": ["shape", "rate"],
                "additionalProperties": False,
            },
        ),
    ]
}

_DISUTILITY = {
    "oneOf": [
        _one_key("crra", {"type": "object", "properties": {"sigma": _POS}, "required": ["sigma"],
                          "additionalProperties": False}),
        _one_key("exp", {"type": "object", "properties": {"gamma": _POS}, "required": ["gamma"],
                         "additionalProperties": False}),
    ]
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "participants": {
            "type": "array",
            "minItems": 2,
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string", "minLength": 1},
                    "loss": _LOSS,
                    "disutility": _DISUTILITY,
                },
                "required": ["loss", "disutility"],
                "additionalProperties": False,
            },
        },
        "solver": {
            "type": "object",
            "properties": {
                "epsilon": _POS,
                "max_iter": {"type": "integer", "minimum": 1},
                "delta": _POS,
                "kmax_cap": {"type": "integer", "minimum": 2},
            },
            "additionalProperties": False,
        },
        "outputs": {
            "type": "object",
            "properties": {
                "rule_table": {"type": "string"},
                "report": {"type": "string"},
                "cdf": {"type": "string"},
                "figures": {"type": "string"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["participants"],
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-14`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


@dataclass
class SolverSettings:
    epsilon: float = 1e-14
    max_iter: int = 200
    delta: float = 1.0
    kmax_cap: int = KMAX_CAP


@dataclass
class PoolConfig:
    participants: list[dict]
    solver: SolverSettings = field(default_factory=SolverSettings)
    outputs: dict[str, str] = field(default_factory=dict)
    source: Path | None = None

    def output_path(self, key: str, default: str | None = None) -> Path | None:
        """Output location, relative paths resolved against the config file."""
        value = self.outputs.get(key, default)
        if value is None:
            return None
        path = Path(value)
        if not path.is_absolute() and self.source is not None:
            path = self.source.parent / path
        return path


def _field_path(error: jsonschema.ValidationError) -> str:
    out = ""
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def parse_config(data: Any, source: Path | None = None) -> PoolConfig:
    """Validate a decoded document against :data:`SCHEMA`."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        if best.validator == "minItems":
            message = f"needs at least {best.validator_value} entries"
        else:
            message = best.message if len(best.message) <= 160 else best.message[:157] + "..."
        raise ConfigError(f"{_field_path(best)}: {message}")
    data = copy.deepcopy(data)
    solver = SolverSettings(**data.get("solver", {}))
    parts = data["participants"]
    for i, p in enumerate(parts):
        p.setdefault("name", f"p{i + 1}")
    names = [p["name"] for p in parts]
    if len(set(names)) != len(names):
        raise ConfigError("participants: names must be unique")
    return PoolConfig(parts, solver, data.get("outputs", {}), source)


def load_config(path: str | Path) -> PoolConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, source=path)


def _pmf_law(values: list[float], delta: float, where: str) -> LatticeDistribution:
    try:
        return LatticeDistribution(delta, values, name=where)
    except ValueError as exc:
        raise ConfigError(f"{where}.pmf: {exc}") from exc


def _loss(spec: dict, delta: float, cap: int, where: str) -> LatticeDistribution:
    if "pmf" in spec:
        return _pmf_law(spec["pmf"], delta, where)
    if "gamma" in spec:
        g = spec["gamma"]
        return discretize_gamma(g["shape"], g["rate"], delta, cap=cap)
    cp = spec["compound_poisson"]
    sev = cp["severity"]
    if "negbinom" in sev:
        severity = negbinom_pmf(sev["negbinom"]["r"], sev["negbinom"]["q"], step=delta, cap=cap)
    else:
        severity = _pmf_law(sev["pmf"], delta, f"{where}.severity")
    return compound_poisson(CompoundPoissonSpec(cp["lambda"], severity), cap=cap)


def _disutility(spec: dict) -> DisutilityModel:
    if "crra" in spec:
        return CRRA(float(spec["crra"]["sigma"]))
    return ExponentialType(float(spec["exp"]["gamma"]))


def build_pool(cfg: PoolConfig) -> Pool:
    """Discretize every loss at ``solver.delta`` and assemble the pool."""
    delta, cap = cfg.solver.delta, cfg.solver.kmax_cap
    people = []
    for i, p in enumerate(cfg.participants):
        where = f"participants[{i}].loss"
        try:
            loss = _loss(p["loss"], delta, cap, where)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{where} ({p['name']}): {exc}") from exc
        people.append(Participant(p["name"], loss, _disutility(p["disutility"])))
    return Pool(people)


def dump_config(data: dict) -> str:
    """Deterministic YAML text for a config document."""
    return yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=100)
