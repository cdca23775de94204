"""Rewards for the two RL stages, weighted aggregation and group advantages."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BinaryMask, JudgeVerdict, RasterImage
from .errors import ContractViolation, DimensionMismatch, GroupTooSmall
from .mask_lab import MorphParams, diff_mask, mask_iou

ADVANTAGE_EPS = 1e-6


class Stage(str, enum.Enum):
    REASONING = "reasoning"
    EDITING = "editing"


@dataclass(frozen=True)
class RewardWeights:
    stage: Stage = Stage.REASONING
    w1: float = 0.5
    w2: Optional[float] = None
    kl_weight: float = 0.001
    group_size: int = 24

    def __post_init__(self):
        object.__setattr__(self, "stage", Stage(self.stage))
        if self.w2 is None:
            object.__setattr__(self, "w2", 0.8 if self.stage is Stage.REASONING else 0.2)
        if min(self.w1, self.w2, self.kl_weight) < 0:
            raise ValueError("weights must be non-negative")
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")


@dataclass
class GroupRollout:
    sample_id: str
    rewards: list[float]
    stage: Stage = Stage.REASONING
    group_size: Optional[int] = None

    def __post_init__(self):
        if self.group_size is not None and len(self.rewards) != self.group_size:
            raise ContractViolation(f"group {self.sample_id!r}: {len(self.rewards)} rewards, expected {self.group_size}")


def iou_reward(src: RasterImage, cot: RasterImage, gt: BinaryMask, p: MorphParams = MorphParams()) -> float:
    if gt.shape != (src.height, src.width):
        raise DimensionMismatch("ground-truth mask does not match the source image")
    return mask_iou(diff_mask(src, cot, p), gt)


@dataclass(frozen=True)
class TintClassifier:
    """Labels an image as a visual-thought output when it carries an overlay tint.

    A pixel counts as tinted when its red and blue channels rise relative to
    green by more than ``diff_threshold`` compared with the source. An image
    is a thought when at least ``min_tint_frac`` of pixels are tinted and
    fewer than ``max_change_frac`` changed at all.
    """

    diff_threshold: int = 30
    min_tint_frac: float = 0.005
    max_change_frac: float = 0.40

    def fractions(self, img: RasterImage, src: RasterImage) -> tuple[float, float]:
        if img.shape != src.shape or img.channels != 3:
            raise DimensionMismatch("format heuristic needs RGB images of equal size")
        d = img.data.astype(np.int16) - src.data.astype(np.int16)
        changed = np.abs(d).max(axis=2) > self.diff_threshold
        dr, dg, db = d[..., 0], d[..., 1], d[..., 2]
        tinted = changed & (dr - dg > self.diff_threshold) & (db - dg > self.diff_threshold)
        n = changed.size
        return float(tinted.sum()) / n, float(changed.sum()) / n

    def __call__(self, img: RasterImage, src: RasterImage) -> bool:
        tint, change = self.fractions(img, src)
        return tint >= self.min_tint_frac and change < self.max_change_frac


StageClassifier = Callable[[RasterImage, RasterImage], bool]


def format_reward(img: RasterImage, src: RasterImage, classifier: StageClassifier = TintClassifier()) -> float:
    return 1.0 if classifier(img, src) else 0.0


def judge_reward(verdict: JudgeVerdict) -> float:
    return (verdict.score1 + verdict.score2) / 20.0


def aggregate(r1: float, r2: float, w: RewardWeights) -> float:
    return w.w1 * r1 + w.w2 * r2


def group_advantages(g) -> np.ndarray:
    """(r - mean) / (population std + eps) within one rollout group."""
    rewards = g.rewards if isinstance(g, GroupRollout) else g
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise GroupTooSmall(f"need at least 2 rewards, got {r.size}")
    return (r - r.mean()) / (r.std() + ADVANTAGE_EPS)


@dataclass
class RewardRecord:
    sample_id: str
    stage: str
    r1: float
    r2: float
    aggregate: float
    advantage: float = 0.0
    rollout: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {"sample_id": self.sample_id, "stage": self.stage, "rollout": self.rollout,
             "r1": self.r1, "r2": self.r2, "aggregate": self.aggregate, "advantage": self.advantage}
        d.update(self.extra)
        return json.dumps(d, sort_keys=True)


def assign_advantages(records: Sequence[RewardRecord]) -> dict[str, list[float]]:
    """Fill ``advantage`` on each record, grouping by sample id in rollout order."""
    groups: dict[str, list[RewardRecord]] = {}
    for rec in records:
        groups.setdefault(rec.sample_id, []).append(rec)
    out = {}
    for sid in sorted(groups):
        members = sorted(groups[sid], key=lambda r: r.rollout)
        adv = group_advantages([m.aggregate for m in members])
        for m, a in zip(members, adv):
            m.advantage = float(a)
        out[sid] = [float(a) for a in adv]
    return out
