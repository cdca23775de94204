"""Toy localisation-and-edit task in vector space.

A scene holds three boxes ``(cx, cy, w, h)`` in the unit square. The
instruction picks one of them. The visual thought is that box; the edit
mirrors it horizontally.

Condition layout (16 values): referent one-hot (3), task code (1), scene (12).
Task code: +1 for the masking instruction, 0 for the plain edit instruction,
-1 for the sequential (system-prompted) reasoning-then-edit mode. The policy
sees the condition plus a 4-value thought slot, zero when no thought is given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Rng

N_OBJECTS = 3
BOX_DIM = 4
COND_DIM = 16
POLICY_COND_DIM = COND_DIM + BOX_DIM

TASK_MASK = 1.0
TASK_EDIT = 0.0
TASK_SEQUENTIAL = -1.0


@dataclass(frozen=True)
class ToyScenes:
    """A batch of scenes: ``condition`` (n, 16), ``x_cot_star`` (n, 4), ``x_edit_star`` (n, 4)."""

    condition: np.ndarray
    x_cot_star: np.ndarray
    x_edit_star: np.ndarray

    def __post_init__(self):
        for arr in (self.condition, self.x_cot_star, self.x_edit_star):
            if not np.all(np.isfinite(arr)):
                raise ValueError("toy scene values must be finite")
        if np.any(self.x_cot_star < 0) or np.any(self.x_cot_star > 1):
            raise ValueError("box coordinates must lie in [0, 1]")

    def __len__(self) -> int:
        return self.condition.shape[0]

    def subset(self, idx) -> "ToyScenes":
        return ToyScenes(self.condition[idx], self.x_cot_star[idx], self.x_edit_star[idx])

    def with_task(self, code: float) -> np.ndarray:
        cond = self.condition.copy()
        cond[:, N_OBJECTS] = code
        return cond


def mirror(box: np.ndarray) -> np.ndarray:
    out = np.array(box, dtype=np.float64, copy=True)
    out[..., 0] = 1.0 - out[..., 0]
    return out


def make_scenes(n: int, rng: Rng) -> ToyScenes:
    g = rng.generator
    centers = g.uniform(0.25, 0.75, size=(n, N_OBJECTS, 2))
    sizes = g.uniform(0.1, 0.4, size=(n, N_OBJECTS, 2))
    objects = np.concatenate([centers, sizes], axis=2)
    referent = g.integers(0, N_OBJECTS, size=n)
    onehot = np.eye(N_OBJECTS)[referent]
    cond = np.concatenate([onehot, np.zeros((n, 1)), objects.reshape(n, -1)], axis=1)
    target = objects[np.arange(n), referent]
    return ToyScenes(cond, target, mirror(target))


def policy_condition(cond: np.ndarray, thought=None) -> np.ndarray:
    """Append the thought slot (zeros when ``thought`` is None)."""
    cond = np.atleast_2d(cond)
    if thought is None:
        thought = np.zeros((cond.shape[0], BOX_DIM))
    return np.concatenate([cond, np.atleast_2d(thought)], axis=1)


def box_corners(v: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(v)
    cx, cy, w, h = v[:, 0], v[:, 1], np.abs(v[:, 2]), np.abs(v[:, 3])
    return np.stack([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], axis=1)


def toy_iou(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """IoU of (cx, cy, w, h) boxes clipped to the unit square."""
    a = np.clip(box_corners(pred), 0.0, 1.0)
    b = np.clip(box_corners(gt), 0.0, 1.0)
    iw = np.clip(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a + area_b - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
