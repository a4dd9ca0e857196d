"""Experiment configuration: one JSON file per experiment, overridable by CLI flags."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import Ball, LatticeDomain, domain_from_dict
from .errors import ConfigError, DomainError, ModelError
from .model import ModelSpec

__all__ = ["ExperimentConfig", "load_config"]

DEFAULTS = {
    "lambda": "auto-midgap",
    "alpha_grid": {"min": 100.0, "max": 10000.0, "points": 3, "log": True},
    "split": {"eps1": 0.2, "eps2": "auto", "radius_rule": 1.5},
    "dos": {
        "route": "bloch",
        "points": 1201,
        "k_points": None,
        "fv_points": 201,
        "betas": [50, 100, 200],
        "base_domain": None,
    },
    "flow": {"domain_radius": None},
    "bs": {"domain": None, "v_cutoff": None},
    "sandwich": {"cell_size": 0.25},
    "output": {"directory": "out", "formats": ["csv", "json", "svg"]},
    "seed": 0,
}


@dataclass
class ExperimentConfig:
    model: ModelSpec
    lam: float | str = "auto-midgap"
    alpha_grid: dict = field(default_factory=lambda: dict(DEFAULTS["alpha_grid"]))
    split: dict = field(default_factory=lambda: dict(DEFAULTS["split"]))
    dos: dict = field(default_factory=lambda: dict(DEFAULTS["dos"]))
    flow: dict = field(default_factory=lambda: dict(DEFAULTS["flow"]))
    bs: dict = field(default_factory=lambda: dict(DEFAULTS["bs"]))
    sandwich: dict = field(default_factory=lambda: dict(DEFAULTS["sandwich"]))
    output: dict = field(default_factory=lambda: dict(DEFAULTS["output"]))
    seed: int = 0

    def alphas(self) -> list[float]:
        g = self.alpha_grid
        if "values" in g:
            return [float(a) for a in g["values"]]
        lo, hi, n = float(g["min"]), float(g["max"]), int(g["points"])
        if n == 1:
            return [lo]
        if g.get("log", True):
            exps = np.linspace(np.log10(lo), np.log10(hi), n)
            return [float(10.0**e) for e in exps]
        return [float(a) for a in np.linspace(lo, hi, n)]

    @property
    def output_dir(self) -> Path:
        return Path(self.output["directory"])

    @property
    def formats(self) -> set:
        return set(self.output.get("formats", ()))

    def base_domain(self) -> LatticeDomain:
        spec = self.dos.get("base_domain")
        if spec is None:
            return Ball(1.0, self.model.dimension)
        return domain_from_dict(spec)

    def bs_domain(self) -> LatticeDomain:
        spec = self.bs.get("domain")
        if spec is None:
            return Ball(15.0, self.model.dimension)
        return domain_from_dict(spec)


def _merge(defaults: dict, given: dict) -> dict:
    out = dict(defaults)
    out.update(given)
    return out


def _validate(cfg: ExperimentConfig):
    problems = []
    if not (cfg.lam == "auto-midgap" or isinstance(cfg.lam, (int, float))):
        problems.append("lambda: expected a number or \"auto-midgap\"")
    g = cfg.alpha_grid
    if "values" in g:
        vals = g["values"]
        if not isinstance(vals, list) or not vals or any(not isinstance(v, (int, float)) or v < 0 for v in vals):
            problems.append("alpha_grid.values: expected a nonempty list of nonnegative numbers")
        elif any(b <= a for a, b in zip(vals, vals[1:])):
            problems.append("alpha_grid.values: must be increasing")
    else:
        for key in ("min", "max", "points"):
            if not isinstance(g.get(key), (int, float)):
                problems.append(f"alpha_grid.{key}: expected a number")
        if not problems:
            if g["points"] < 1 or int(g["points"]) != g["points"]:
                problems.append("alpha_grid.points: expected a positive integer")
            if g["min"] < 0 or g["max"] < g["min"]:
                problems.append("alpha_grid: need 0 <= min <= max")
            if g.get("log", True) and g["min"] <= 0:
                problems.append("alpha_grid.min: log-spaced grid needs min > 0")
    s = cfg.split
    if not isinstance(s.get("eps1"), (int, float)) or s["eps1"] <= 0:
        problems.append("split.eps1: expected a positive number")
    if not (s.get("eps2") == "auto" or isinstance(s.get("eps2"), (int, float))):
        problems.append("split.eps2: expected a number or \"auto\"")
    if not isinstance(s.get("radius_rule"), (int, float)) or s["radius_rule"] < 1:
        problems.append("split.radius_rule: expected a number >= 1")
    if cfg.dos.get("route") not in ("bloch", "finite_volume", "both"):
        problems.append("dos.route: expected bloch, finite_volume or both")
    betas = cfg.dos.get("betas")
    if not isinstance(betas, list) or len(betas) < 2:
        problems.append("dos.betas: expected a list of at least two increasing numbers")
    for key in ("points", "fv_points"):
        v = cfg.dos.get(key)
        if not isinstance(v, int) or v < 2:
            problems.append(f"dos.{key}: expected an integer >= 2")
    fmts = cfg.output.get("formats")
    if not isinstance(fmts, list) or not set(fmts) <= {"csv", "json", "svg"}:
        problems.append("output.formats: expected a subset of [csv, json, svg]")
    if not isinstance(cfg.output.get("directory"), str):
        problems.append("output.directory: expected a path string")
    if not isinstance(cfg.seed, int):
        problems.append("seed: expected an integer")
    cell = cfg.sandwich.get("cell_size")
    if not isinstance(cell, (int, float)) or cell <= 0:
        problems.append("sandwich.cell_size: expected a positive number")
    for name, getter in (("dos.base_domain", cfg.base_domain), ("bs.domain", cfg.bs_domain)):
        try:
            dom = getter()
        except DomainError as exc:
            problems.append(f"{name}: {exc}")
            continue
        if dom.dimension != cfg.model.dimension:
            problems.append(f"{name}: dimension {dom.dimension} does not match model d={cfg.model.dimension}")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(data) - set(DEFAULTS) - {"model"}
    if unknown:
        raise ConfigError(f"unknown configuration fields: {', '.join(sorted(unknown))}")
    if "model" not in data:
        raise ConfigError("model: required field missing")
    try:
        model = ModelSpec.from_dict(data["model"])
    except ModelError as exc:
        raise ConfigError(f"model: {exc}") from exc
    sections = {}
    for key in ("alpha_grid", "split", "dos", "flow", "bs", "sandwich", "output"):
        given = data.get(key, {})
        if not isinstance(given, dict):
            raise ConfigError(f"{key}: expected an object")
        sections[key] = _merge(DEFAULTS[key], given)
    if "values" in data.get("alpha_grid", {}):
        sections["alpha_grid"] = {"values": data["alpha_grid"]["values"]}
    cfg = ExperimentConfig(model, data.get("lambda", DEFAULTS["lambda"]), seed=data.get("seed", 0), **sections)
    _validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read configuration ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def apply_overrides(cfg: ExperimentConfig, **flags) -> ExperimentConfig:
    """Flags take precedence over file values; ``None`` means "not given"."""
    if flags.get("lam") is not None:
        lam = flags["lam"]
        cfg.lam = lam if lam == "auto-midgap" else float(lam)
    if flags.get("output_dir") is not None:
        cfg.output["directory"] = str(flags["output_dir"])
    if flags.get("seed") is not None:
        cfg.seed = int(flags["seed"])
    if flags.get("alphas") is not None:
        cfg.alpha_grid = {"values": [float(a) for a in flags["alphas"]]}
    if flags.get("eps1") is not None:
        cfg.split["eps1"] = float(flags["eps1"])
    if flags.get("eps2") is not None:
        e = flags["eps2"]
        cfg.split["eps2"] = e if e == "auto" else float(e)
    if flags.get("dos_route") is not None:
        cfg.dos["route"] = flags["dos_route"]
    if flags.get("formats") is not None:
        cfg.output["formats"] = list(flags["formats"])
    _validate(cfg)
    return cfg
