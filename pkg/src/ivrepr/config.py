"""Scenario configuration: JSON with a strict schema shipped in the package."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from functools import lru_cache
import hashlib
from importlib import resources
import json
from pathlib import Path

import jsonschema

from .bs import CallSpec
from .density import DEFAULT_MAX_LEAK
from .errors import ConfigError
from .representation import DEFAULT_TOLERANCES
from .surfaces import ConstantVol, CevVol, LocalVolSurface, TabulatedVol, TimeDependentVol

DEFAULTS = {
    "grid": {"time_steps": 200, "space_nodes": 800, "width": 6.0, "max_leak": DEFAULT_MAX_LEAK},
    "mc": {"paths": 1_000_000, "steps": 500, "seed": 12345, "workers": 1},
    "switch": {"tau_fractions": [0.25, 0.5, 0.75]},
}


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("ivrepr").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    resolved: dict
    surface: LocalVolSurface
    spot: float
    calls: tuple
    source: Path | None = None

    @property
    def grid(self) -> dict:
        return self.resolved["grid"]

    @property
    def mc(self) -> dict:
        return self.resolved["mc"]

    @property
    def tau_fractions(self) -> list:
        return self.resolved["switch"]["tau_fractions"]

    @property
    def tolerances(self) -> dict:
        return self.resolved["tolerances"]

    @property
    def output_dir(self) -> str | None:
        return self.resolved.get("output_dir")

    @property
    def hash(self) -> str:
        """Hash of every numeric input (the output location is excluded)."""
        body = {k: v for k, v in self.resolved.items() if k != "output_dir"}
        return sha256_hex(canonical_json(body))


def _build_surface(model: dict, base: Path | None) -> tuple[LocalVolSurface, dict]:
    family = model["family"]
    model = dict(model)
    if family == "constant":
        return ConstantVol(float(model["sigma"])), model
    if family == "time_dependent":
        if len(model["times"]) != len(model["sigmas"]):
            raise ConfigError("model.times and model.sigmas must have equal length")
        try:
            return TimeDependentVol(tuple(model["times"]), tuple(model["sigmas"])), model
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from exc
    if family == "cev":
        return CevVol(float(model["alpha"]), float(model["beta"])), model
    if family == "tabulated":
        path = Path(model["csv"])
        if not path.is_absolute() and base is not None:
            path = base / path
        try:
            surface = TabulatedVol.from_csv(path)
            data = path.read_bytes()
        except (OSError, ValueError) as exc:
            raise ConfigError(f"model.csv: {exc}") from exc
        model["csv_sha256"] = hashlib.sha256(data).hexdigest()
        return surface, model
    raise ConfigError(f"unknown model family {family!r}")


def parse_config(raw: dict, base: Path | None = None) -> ScenarioConfig:
    """Validate ``raw`` against the schema, fill defaults and build the model."""
    try:
        jsonschema.validate(raw, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    resolved = copy.deepcopy(raw)
    for section, defaults in DEFAULTS.items():
        resolved[section] = {**defaults, **raw.get(section, {})}
    resolved["tolerances"] = {**DEFAULT_TOLERANCES, **raw.get("tolerances", {})}
    surface, model = _build_surface(raw["model"], base)
    resolved["model"] = model
    calls = []
    for i, c in enumerate(raw["calls"]):
        try:
            calls.append(CallSpec(float(c["strike"]), float(c["maturity"])))
        except ValueError as exc:
            raise ConfigError(f"calls/{i}: {exc}") from exc
    if len(set(calls)) != len(calls):
        raise ConfigError("calls contains duplicates")
    if resolved["grid"]["space_nodes"] % 2:
        raise ConfigError("grid.space_nodes must be even so that S0 is a grid node")
    m = resolved["grid"]["time_steps"]
    for f in resolved["switch"]["tau_fractions"]:
        if abs(f * m - round(f * m)) > 1e-9:
            raise ConfigError(f"switch.tau_fractions: {f} * time_steps is not a grid node")
    return ScenarioConfig(resolved, surface, float(raw["spot"]), tuple(calls))


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    cfg = parse_config(raw, base=path.parent)
    return ScenarioConfig(cfg.resolved, cfg.surface, cfg.spot, cfg.calls, path)
