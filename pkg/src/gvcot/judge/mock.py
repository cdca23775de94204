"""Deterministic stand-in for a judge endpoint.

Responses follow each template's output grammar and depend only on the seed,
the template, the sample id and the beam index, so batch order and worker
count never change them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from ..core import INSTRUCTION_CATEGORIES, BBox, EditSample, Rng
from .templates import TemplateId

MODES = ("ok", "bad_json", "clamp", "empty_boxes")
JITTER_PX = 3

_OBJECTS = ("dog", "red umbrella", "lamp", "bicycle", "potted plant", "wooden chair", "cat", "vase")
_PLACES = ("on the left", "on the right", "near the window", "in the foreground", "behind the table")
_COLORS = ("blue", "green", "yellow", "black", "white")
_SCENES = ("a beach scene", "a snowy forest", "a city street", "a plain grey wall")

_BAD = {
    TemplateId.INSTRUCTION_GEN: "<result><type>Add/Remove Object</type><instruction>Add a",
    TemplateId.GROUNDING_BOXES: "[[12, 40, 88",
}
_BAD_SCORE = '{"score": [7, 8, "reasoning": "truncated'


def _instruction(category: str, rng: Rng) -> tuple[str, str]:
    g = rng.generator
    obj, place = g.choice(_OBJECTS), g.choice(_PLACES)
    if category == "Add/Remove Object":
        return f"Add a {obj} {place}", f"Remove the {obj} {place}"
    if category == "Replace/Transform Object":
        other = g.choice([o for o in _OBJECTS if o != obj])
        return f"Replace the {obj} with a {other}", f"Replace the {other} with a {obj}"
    if category == "Color/Style Adjustment":
        c1, c2 = g.choice(_COLORS, size=2, replace=False)
        return f"Change the {obj} color from {c1} to {c2}", f"Change the {obj} color from {c2} to {c1}"
    if category == "Resize/Relocate/Rotate Object":
        return f"Move the {obj} to the left side", f"Move the {obj} to the right side"
    scene = g.choice(_SCENES)
    return f"Replace the background with {scene}", "Replace the background with an indoor room"


def _score_text(s1, s2, reasoning: str) -> str:
    return json.dumps({"score": [s1, s2], "reasoning": reasoning}, indent=4)


def _diff_box(sample: EditSample, threshold: int = 30) -> Optional[BBox]:
    if sample.target is None or sample.target.shape != sample.source.shape:
        return None
    delta = np.abs(sample.source.data.astype(np.int16) - sample.target.data.astype(np.int16)).max(axis=2)
    ys, xs = np.nonzero(delta > threshold)
    if ys.size == 0:
        return None
    return BBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def _jitter(box: BBox, rng: Rng, w: int, h: int) -> list[int]:
    d = rng.integers(-JITTER_PX, JITTER_PX + 1, size=4)
    x1, y1, x2, y2 = (int(v) for v in np.asarray(box) + d)
    return [min(max(x1, 0), w), min(max(y1, 0), h), min(max(x2, 0), w), min(max(y2, 0), h)]


def mock_judge(template_id, sample: EditSample, *, seed: int = 0, mode: str = "ok", beam: int = 0,
               fixed_scores: Optional[Mapping[str, tuple[float, float]]] = None) -> str:
    tid = TemplateId(template_id)
    if mode not in MODES:
        raise ValueError(f"unknown mock mode {mode!r}")
    rng = Rng(seed).split("mock", tid.value, sample.id, beam)

    if mode == "bad_json":
        return _BAD.get(tid, _BAD_SCORE)

    if tid is TemplateId.INSTRUCTION_GEN:
        category = INSTRUCTION_CATEGORIES[int(rng.integers(len(INSTRUCTION_CATEGORIES)))]
        fwd, rev = _instruction(category, rng)
        return f"<result><type>{category}</type><instruction>{fwd}</instruction><reverse>{rev}</reverse></result>"

    if tid is TemplateId.GROUNDING_BOXES:
        if mode == "empty_boxes":
            return "[]"
        w, h = sample.source.width, sample.source.height
        stored = list(sample.boxes)
        if not stored:
            found = _diff_box(sample)
            stored = [found] if found is not None else []
        return json.dumps([_jitter(b, rng.split(i), w, h) for i, b in enumerate(stored)])

    if mode == "clamp":
        return _score_text(12, -1, "scores overflow the rubric")
    fixed = dict(fixed_scores or {})
    if tid.value in fixed:
        s1, s2 = fixed[tid.value]
        return _score_text(s1, s2, "fixed mock verdict")
    if tid is TemplateId.SEMANTIC_CONSISTENCY and (sample.target is None or sample.target == sample.source):
        return _score_text(0, 10, "Image B is identical to Image A")
    s1, s2 = (int(v) for v in rng.integers(5, 11, size=2))
    return _score_text(s1, s2, f"mock verdict for {sample.id}")


@dataclass
class MockJudge:
    """Callable judge backed by :func:`mock_judge`."""

    seed: int = 0
    mode: str = "ok"
    fixed_scores: dict = field(default_factory=dict)

    def __call__(self, template_id, sample: EditSample, messages=None, *, beam: int = 0) -> str:
        return mock_judge(template_id, sample, seed=self.seed, mode=self.mode, beam=beam,
                          fixed_scores=self.fixed_scores)
