"""Scenario configuration: TOML schema, validation and preset lookup.

A scenario file has a top-level ``name`` and ``kind`` (``evolve``,
``filter``, ``band`` or ``phase-map``) and the sections below.  Unknown keys
are rejected so typos surface as errors instead of silent defaults.

    [model]   n_sites, u, v, kappa = 1.0
    [packet]  k0_over_pi, alpha = 0.15, n_a, band = "lower"
    [field]   kind = "static", f0 = 0.05, period, shift
    [run]     t_final, dt = 0.02, sample_dt = 0.5, r_max = 400, certify = true,
              t_target (filter only: time of the free reference state)
    [grid]    (phase-map only) u_min, u_max, v_min, v_max, n_u = 100, n_v = 100, k = 0.0
    [outputs] profiles = true, band = true, plots = true, n_k = 128
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .model import FieldProtocol, ModelParams
from .wavepacket import PacketSpec

KINDS = ("evolve", "filter", "band", "phase-map")
REQUIRED = object()


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


def _positive(x):
    return x > 0


def _nonneg(x):
    return x >= 0


SCHEMA = {
    "model": {
        "n_sites": (int, REQUIRED, lambda n: n >= 2, "must be an integer >= 2"),
        "u": (float, REQUIRED, math.isfinite, "must be finite"),
        "v": (float, REQUIRED, math.isfinite, "must be finite"),
        "kappa": (float, 1.0, _positive, "must be positive"),
    },
    "packet": {
        "k0_over_pi": (float, REQUIRED, lambda x: -1 < x <= 1, "must lie in (-1, 1]"),
        "alpha": (float, 0.15, _positive, "must be positive"),
        "n_a": (float, REQUIRED, _nonneg, "must be non-negative"),
        "band": (str, "lower", lambda b: b in ("lower", "upper"), "must be 'lower' or 'upper'"),
    },
    "field": {
        "kind": (str, "static", lambda k: k in ("static", "square", "sine"), "must be static, square or sine"),
        "f0": (float, 0.05, math.isfinite, "must be finite"),
        "period": (float, 0.0, _nonneg, "must be non-negative"),
        "shift": (float, 0.0, math.isfinite, "must be finite"),
    },
    "run": {
        "t_final": (float, REQUIRED, _positive, "must be positive"),
        "dt": (float, 0.02, _positive, "must be positive"),
        "sample_dt": (float, 0.5, _positive, "must be positive"),
        "r_max": (int, 400, lambda r: r >= 2, "must be an integer >= 2"),
        "certify": (bool, True, None, ""),
        "t_target": (float, None, _nonneg, "must be non-negative"),
    },
    "grid": {
        "u_min": (float, -8.0, math.isfinite, "must be finite"),
        "u_max": (float, 8.0, math.isfinite, "must be finite"),
        "v_min": (float, -8.0, math.isfinite, "must be finite"),
        "v_max": (float, 8.0, math.isfinite, "must be finite"),
        "n_u": (int, 100, lambda n: n >= 2, "must be an integer >= 2"),
        "n_v": (int, 100, lambda n: n >= 2, "must be an integer >= 2"),
        "k": (float, 0.0, math.isfinite, "must be finite"),
    },
    "outputs": {
        "profiles": (bool, True, None, ""),
        "band": (bool, True, None, ""),
        "plots": (bool, True, None, ""),
        "n_k": (int, 128, lambda n: n >= 8, "must be an integer >= 8"),
    },
}

SECTIONS_BY_KIND = {
    "evolve": ("model", "packet", "field", "run", "outputs"),
    "filter": ("model", "packet", "field", "run", "outputs"),
    "band": ("model", "outputs"),
    "phase-map": ("grid", "outputs"),
}


def _coerce(path, value, typ):
    if typ is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string, got {value!r}")
    return value


def normalize(raw: dict) -> dict:
    """Validate a raw config mapping and fill defaults; returns a new plain dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table")
    kind = raw.get("kind", "evolve")
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {', '.join(KINDS)}, got {kind!r}")
    name = raw.get("name", "custom")
    if not isinstance(name, str) or not name:
        raise ConfigError("name: expected a non-empty string")
    allowed = SECTIONS_BY_KIND[kind]
    extra = set(raw) - set(allowed) - {"name", "kind", "description"}
    if extra:
        raise ConfigError(f"{sorted(extra)[0]}: unknown section for kind {kind!r}")

    out = {"name": name, "kind": kind}
    for section in allowed:
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{section}: expected a table")
        unknown = set(given) - set(SCHEMA[section])
        if unknown:
            raise ConfigError(f"{section}.{sorted(unknown)[0]}: unknown key")
        sec = {}
        for key, (typ, default, check, msg) in SCHEMA[section].items():
            path = f"{section}.{key}"
            if key not in given or (given[key] is None and default is None):
                if default is REQUIRED:
                    raise ConfigError(f"{path}: required")
                sec[key] = default
                continue
            val = _coerce(path, given[key], typ)
            if check is not None and not check(val):
                raise ConfigError(f"{path}: {msg}, got {val!r}")
            sec[key] = val
        out[section] = sec
    _cross_checks(out)
    return out


def _cross_checks(cfg):
    kind = cfg["kind"]
    if kind in ("evolve", "filter"):
        f = cfg["field"]
        if f["kind"] != "static" and not f["period"] > 0:
            raise ConfigError(f"field.period: a {f['kind']} pulse needs a positive period")
        run = cfg["run"]
        limit = 0.1 / cfg["model"]["kappa"]
        if f["kind"] != "static":
            limit = min(limit, f["period"] / 200)
        if run["dt"] > limit + 1e-15:
            raise ConfigError(f"run.dt: {run['dt']} exceeds the resolution limit {limit:.4g}")
        ratio = run["sample_dt"] / run["dt"]
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("run.sample_dt: must be a whole multiple of run.dt")
        if cfg["packet"]["n_a"] > cfg["model"]["n_sites"]:
            raise ConfigError("packet.n_a: packet centre lies outside the lattice")
    if kind == "filter":
        if cfg["field"]["kind"] == "static":
            raise ConfigError("field.kind: a filter run needs a square or sine pulse")
        if cfg["run"]["t_target"] is None:
            raise ConfigError("run.t_target: required for filter runs")
        if cfg["run"]["t_target"] > cfg["run"]["t_final"]:
            raise ConfigError("run.t_target: must not exceed run.t_final")
    if kind == "phase-map":
        g = cfg["grid"]
        if g["u_max"] <= g["u_min"] or g["v_max"] <= g["v_min"]:
            raise ConfigError("grid: ranges must have max > min")


@dataclass(frozen=True)
class ScenarioConfig:
    data: dict

    @property
    def name(self) -> str:
        return self.data["name"]

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def model(self) -> ModelParams:
        m = self.data["model"]
        return ModelParams(m["n_sites"], m["u"], m["v"], m["kappa"])

    @property
    def packet(self) -> PacketSpec:
        p = self.data["packet"]
        return PacketSpec(p["k0_over_pi"] * np.pi, p["alpha"], p["n_a"], p["band"])

    @property
    def field(self) -> FieldProtocol:
        f = self.data["field"]
        if f["kind"] == "static":
            return FieldProtocol("static", f["f0"])
        return FieldProtocol(f["kind"], f["f0"], f["period"], f["shift"])

    @property
    def run(self) -> dict:
        return self.data["run"]

    @property
    def outputs(self) -> dict:
        return self.data["outputs"]

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self, length: int = 10) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:length]

    def check_axis(self, path: str) -> tuple[str, str]:
        """Split ``section.key`` and check it names a scalar field of this scenario."""
        parts = path.split(".")
        if len(parts) != 2:
            raise ConfigError(f"{path}: expected 'section.key'")
        section, key = parts
        if section not in self.data or not isinstance(self.data[section], dict):
            raise ConfigError(f"{path}: no section {section!r} for kind {self.kind!r}")
        if key not in SCHEMA.get(section, {}):
            raise ConfigError(f"{path}: unknown key")
        return section, key

    def replace(self, path: str, value) -> "ScenarioConfig":
        """Copy with one scalar field (``section.key``) changed, revalidated."""
        section, key = self.check_axis(path)
        raw = copy.deepcopy(self.data)
        raw[section][key] = value
        return ScenarioConfig(normalize(raw))


def load_config(source) -> ScenarioConfig:
    """Load from a path, TOML text or an already-parsed mapping."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        if path.suffix == ".toml" or path.exists():
            try:
                raw = tomllib.loads(path.read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}") from None
        else:
            raw = tomllib.loads(str(source))
    return ScenarioConfig(normalize(raw))


def preset_names() -> list[str]:
    files = resources.files("pairband.presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".toml"))


def load_preset(name: str) -> ScenarioConfig:
    res = resources.files("pairband.presets") / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return ScenarioConfig(normalize(tomllib.loads(res.read_text())))
