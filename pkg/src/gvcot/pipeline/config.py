"""Flat ``key = value`` configuration with typed defaults."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from ..judge import EndpointConfig
from ..mask_lab import MorphParams, OverlayStyle
from ..region_miner import MiningParams
from ..rewards import RewardWeights

# Every recognised key with its default. Values in a config file are parsed
# with the type of the default; ``None`` defaults are parsed as strings.
DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "workers": 4,
    "judge.base_url": "http://localhost:8000/v1",
    "judge.model_name": "judge",
    "judge.timeout": 120.0,
    "judge.max_retries": 3,
    "judge.max_in_flight": 8,
    "judge.temperature": 0.0,
    "judge.template_dir": "",
    "mock.mode": "ok",
    "mock.fixed_scores": "",
    "filter.min_success": 7.0,
    "filter.min_containment": 7.0,
    "mining.n_beam": 5,
    "mining.iou_threshold": 0.5,
    "mining.max_aspect_ratio": 20.0,
    "mining.min_area_frac": 1e-4,
    "mining.min_cluster_size": 2,
    "morph.min_speckle_area": 64,
    "morph.smooth_radius": 2,
    "morph.diff_threshold": 30,
    "overlay.color": "255,0,255",
    "overlay.alpha": 0.5,
    "reward.stage": "reasoning",
    "reward.w1": 0.5,
    "reward.w2": "",
    "reward.group_size": 24,
    "reward.kl_weight": 0.001,
    "eval.verdict_reduce": "min",
}


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in {"true", "false", "1", "0", "yes", "no"}:
                raise ValueError(raw)
            return raw.lower() in {"true", "1", "yes"}
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from exc
    return raw


def parse_config_text(text: str) -> dict[str, Any]:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


@dataclass
class PipelineConfig:
    values: dict[str, Any] = field(default_factory=lambda: dict(DEFAULTS))

    @classmethod
    def load(cls, path: Optional[Path] = None, **overrides) -> "PipelineConfig":
        values = dict(DEFAULTS)
        if path is not None:
            values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
        for k, v in overrides.items():
            key = k.replace("__", ".")
            if key not in DEFAULTS:
                raise ConfigError(f"unknown key {key!r}")
            if v is not None:
                values[key] = v
        return cls(values)

    def __getitem__(self, key: str):
        return self.values[key]

    def dump(self) -> str:
        return "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))

    @property
    def seed(self) -> int:
        return int(self["seed"])

    def endpoint(self) -> EndpointConfig:
        return EndpointConfig(base_url=self["judge.base_url"], model_name=self["judge.model_name"],
                              timeout=self["judge.timeout"], max_retries=self["judge.max_retries"],
                              max_in_flight=self["judge.max_in_flight"], temperature=self["judge.temperature"])

    def mining(self) -> MiningParams:
        return MiningParams(iou_threshold=self["mining.iou_threshold"],
                            max_aspect_ratio=self["mining.max_aspect_ratio"],
                            min_area_frac=self["mining.min_area_frac"],
                            min_cluster_size=self["mining.min_cluster_size"])

    def morph(self) -> MorphParams:
        return MorphParams(min_speckle_area=self["morph.min_speckle_area"],
                           smooth_radius=self["morph.smooth_radius"],
                           diff_threshold=self["morph.diff_threshold"])

    def overlay(self) -> OverlayStyle:
        parts = [int(v) for v in str(self["overlay.color"]).split(",")]
        if len(parts) != 3:
            raise ConfigError("overlay.color needs three comma-separated channels")
        return OverlayStyle(color=tuple(parts), alpha=self["overlay.alpha"])

    def reward_weights(self) -> RewardWeights:
        w2 = self["reward.w2"]
        return RewardWeights(stage=self["reward.stage"], w1=self["reward.w1"],
                             w2=float(w2) if str(w2).strip() else None,
                             kl_weight=self["reward.kl_weight"], group_size=self["reward.group_size"])

    def fixed_scores(self) -> dict[str, tuple[float, float]]:
        """``mock.fixed_scores = SemanticConsistency:8,8; PerceptualQuality:2,2``."""
        out = {}
        for item in str(self["mock.fixed_scores"]).split(";"):
            if not item.strip():
                continue
            name, _, pair = item.partition(":")
            s = [float(v) for v in pair.split(",")]
            if len(s) != 2:
                raise ConfigError(f"mock.fixed_scores entry {item!r} needs two scores")
            out[name.strip()] = (s[0], s[1])
        return out
