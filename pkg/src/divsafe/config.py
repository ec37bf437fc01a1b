"""Run configuration: one JSON document, deep-merged over built-in defaults."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .errors import ConfigurationError
from .voter import VoterConfig

DEFAULT_CONFIG = {
    "seed": 7,
    "output": "out",
    "model": {
        "hidden": [16, 16],
        "activation": "relu",
        "reject_class": True,
        "dropout": 0.1,
        "temperature": 1.0,
        "learning_rate": 0.02,
        "epochs": 200,
        "batch_size": 32,
        "proxy_ood_ratio": 1.0,
    },
    "detectors": {
        "retention": 0.95,
        "isolation_forest": {"enabled": True, "layers": None, "n_trees": 100, "subsample_size": 256},
        "lof": {"enabled": True, "layers": None, "k": 20},
        "reject_class": {"enabled": True},
        "softmax": {"enabled": True},
        "temperature": {"enabled": True, "temperature": 10.0},
        "mahalanobis": {"enabled": True, "layer": -1},
        "mc_dropout": {"enabled": True, "n_samples": 30, "postprocess": False},
        "ensemble": {"enabled": True, "n_members": 3, "epochs": 100, "postprocess": False},
        "lo_glrt": {"enabled": True, "epsilon": 0.5, "n_subvectors": None},
        "shift": {"enabled": True, "bins": 16, "window": 100, "quantile": 0.99,
                  "calibration_windows": 200, "shift_sigmas": 5.0},
    },
    "voter": {
        "channels": ["isolation_forest", "lof", "reject_class"],
        "presets": ["1oo3", "2oo3"],
        "configs": [],
        "fail_safe": False,
    },
    "data": {
        "train": {"generator": "fixture", "part": "train"},
        "calibrate": {"generator": "fixture", "part": "calibrate"},
        "evaluate": {"generator": "fixture", "part": "evaluate"},
    },
}

DETECTOR_IDS = ("isolation_forest", "lof", "reject_class", "softmax", "temperature",
                "mahalanobis", "mc_dropout", "ensemble", "lo_glrt")
ALWAYS_ELIGIBLE = {"isolation_forest", "lof", "reject_class"}
POSTPROCESS_ELIGIBLE = {"mc_dropout", "ensemble"}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def eligible(detector_id: str, section: dict) -> bool:
    if detector_id in ALWAYS_ELIGIBLE:
        return True
    if detector_id in POSTPROCESS_ELIGIBLE:
        return bool(section.get("postprocess", False))
    return False


def merge_config(base: dict, override: dict) -> dict:
    """Deep merge, except that each data role is replaced as a whole.

    A role switching from ``generator`` to ``path`` must not keep stale keys.
    """
    out = deep_merge(base, {k: v for k, v in override.items() if k != "data"})
    for role, spec in (override.get("data") or {}).items():
        out["data"][role] = copy.deepcopy(spec)
    return out


class RunConfig:
    """Validated view over a configuration dict."""

    def __init__(self, raw: dict):
        self.raw = merge_config(DEFAULT_CONFIG, raw or {})
        self.validate()

    @classmethod
    def load(cls, path=None, **overrides) -> "RunConfig":
        raw = {}
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigurationError(f"config file not found: {path}")
            try:
                raw = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigurationError(f"{path}: top level must be a JSON object")
        for key, value in overrides.items():
            if value is not None:
                raw[key] = value
        return cls(raw)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def model(self) -> dict:
        return self.raw["model"]

    @property
    def detectors(self) -> dict:
        return self.raw["detectors"]

    @property
    def data(self) -> dict:
        return self.raw["data"]

    def enabled_detectors(self) -> list:
        return [d for d in DETECTOR_IDS if self.detectors.get(d, {}).get("enabled", False)]

    def voter_configs(self) -> list:
        v = self.raw["voter"]
        configs = [VoterConfig.preset(p, v["channels"], v["fail_safe"]) for p in v["presets"]]
        configs += [VoterConfig.from_dict({"fail_safe": v["fail_safe"], **c}) for c in v["configs"]]
        return configs

    def validate(self) -> None:
        m = self.model
        if not m["hidden"] or any(int(h) < 1 for h in m["hidden"]):
            raise ConfigurationError("model.hidden must list positive layer widths")
        if m["activation"] not in ("relu", "tanh"):
            raise ConfigurationError(f"unknown activation {m['activation']!r}")
        r = self.detectors["retention"]
        if not 0 < r < 1:
            raise ConfigurationError("detectors.retention must lie in (0, 1)")
        unknown = set(self.detectors) - set(DETECTOR_IDS) - {"retention", "shift"}
        if unknown:
            raise ConfigurationError(f"unknown detectors {sorted(unknown)}")
        if self.detectors["reject_class"]["enabled"] and not m["reject_class"]:
            raise ConfigurationError("reject_class detector needs model.reject_class")
        enabled = set(self.enabled_detectors())
        configs = self.voter_configs()
        if not configs:
            raise ConfigurationError("no voter configuration")
        for vc in configs:
            for ch in vc.channels:
                if ch not in enabled:
                    raise ConfigurationError(f"voter channel {ch!r} is not an enabled detector")
                if not eligible(ch, self.detectors[ch]):
                    raise ConfigurationError(f"detector {ch!r} is not eligible to vote")
        for role in ("train", "calibrate", "evaluate"):
            spec = self.data.get(role)
            if not isinstance(spec, dict) or ("path" in spec) == ("generator" in spec):
                raise ConfigurationError(f"data.{role} needs exactly one of 'path' or 'generator'")

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)
