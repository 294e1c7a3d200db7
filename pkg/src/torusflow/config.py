"""Experiment configuration: one YAML document, merged over complete defaults."""

from __future__ import annotations

import copy
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError, InvalidArgument
from .pairgen import GrowthLaw

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": 1,
    "out": "report",
    "pair": {
        "law": {"kind": "power", "k": 2.0, "C": 50},
        "levels": 3,
        "seed": {"alpha": [0, 2], "alpha_prime": [0]},
        "precision_bits": 256,
    },
    "ceiling": {
        "staircase_scale": "auto",
        "eps_budget": 0.4,
        "radii": "auto",
        "exponents": "auto",
        "taper": 0.0,
        "certify_grid": "auto",
    },
    "analysis": {
        "max_iterate": 100000,
        "birkhoff": {"points": 100, "max_m": 10000},
        "towers": {"defect_grid": 8, "tiling_limit": 10000},
        "stretch": {"points": 1001, "windows": 10, "y_count": 2, "length": "auto",
                    "K_target": 10.0, "eta": 0.1, "times_per_window": 1},
        "staircase": {"level": "auto", "count": 25, "max_gap": "auto", "m_max": "auto", "m_min": 1},
        "correlation": {"samples": 10000, "times_per_window": 2,
                        "box": {"x0": "1/5", "wx": "1/5", "y0": "3/10", "wy": "1/4",
                                "s0": 0.0, "s1": 0.5}},
    },
}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "law":
            if not isinstance(val, dict):
                raise ConfigError(f"{where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    """The merged configuration; `data` holds every parameter, defaults included."""

    data: dict

    @classmethod
    def from_dict(cls, raw: dict | None) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULTS, raw or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            raw = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if raw is not None and not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        return cls.from_dict(raw)

    @classmethod
    def bundled(cls, name: str = "desk") -> "ExperimentConfig":
        text = resources.files("torusflow").joinpath("configs", f"{name}.yaml").read_text()
        return cls.from_dict(yaml.safe_load(text))

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=None)

    def __getitem__(self, key):
        return self.data[key]

    def law(self) -> GrowthLaw:
        law = dict(self.data["pair"]["law"])
        kind = law.pop("kind", None)
        try:
            if kind == "paper-exponential":
                return GrowthLaw.exponential(**law)
            if kind == "power":
                return GrowthLaw.power(**law)
            if kind == "explicit-floor-list":
                return GrowthLaw.explicit(law["floors"])
        except (TypeError, KeyError, InvalidArgument) as exc:
            raise ConfigError(f"bad growth law: {exc}") from exc
        raise ConfigError(f"unknown growth law kind {kind!r}")

    def pair_seed(self) -> tuple[tuple[int, ...], tuple[int, ...]]:
        s = self.data["pair"]["seed"]
        return tuple(int(v) for v in s["alpha"]), tuple(int(v) for v in s["alpha_prime"])

    def validate(self) -> None:
        d = self.data
        self.law()
        if not isinstance(d["pair"]["levels"], int) or d["pair"]["levels"] < 1:
            raise ConfigError("pair.levels must be a positive integer")
        if d["threads"] < 1:
            raise ConfigError("threads must be positive")
        c = d["ceiling"]
        if c["staircase_scale"] != "auto" and not float(c["staircase_scale"]) > 0:
            raise ConfigError("ceiling.staircase_scale must be positive or 'auto'")
        if not 0 <= float(c["taper"]) < 1:
            raise ConfigError("ceiling.taper must lie in [0, 1)")
        a = d["analysis"]
        if a["correlation"]["samples"] < 1000:
            raise ConfigError("analysis.correlation.samples must be at least 1000")
        if a["stretch"]["points"] < 1000:
            raise ConfigError("analysis.stretch.points must be at least 1000")
        if a["stretch"]["windows"] < 2:
            raise ConfigError("analysis.stretch.windows must be at least 2")
        if a["towers"]["defect_grid"] < 2:
            raise ConfigError("analysis.towers.defect_grid must be at least 2")
        eta = a["stretch"]["eta"]
        if eta is not None and not 0 < float(eta) < 0.5:
            raise ConfigError("analysis.stretch.eta must lie in (0, 1/2) or be null")
        box = a["correlation"]["box"]
        if not 0 <= float(box["s0"]) < float(box["s1"]):
            raise ConfigError("correlation box needs 0 <= s0 < s1")


def auto(value, default):
    return default if value == "auto" else value
