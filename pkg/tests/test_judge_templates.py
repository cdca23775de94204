import hashlib
from pathlib import Path

import numpy as np
import pytest

from gvcot import EditSample, RasterImage
from gvcot.errors import MissingSlot
from gvcot.judge import SLOTS, TemplateId, load_template, load_templates, render_prompt, to_wire_messages
from gvcot.judge.templates import bundled_template_path

GOLDEN = Path(__file__).parent / "golden"

PINNED = {
    TemplateId.INSTRUCTION_GEN: "f0d8e23a8449fe2389134d1b882d5a764c8c20bb2b8f890bcaa951e162b8d3f6",
    TemplateId.SEMANTIC_CONSISTENCY: "12508cdd513be21e8b4b75c3bcd1d7227792f35e7b9de5026bc297ea0073371a",
    TemplateId.GROUNDING_BOXES: "113fda9127406001d586aec60456b124c1381ac863a6932416e9eb957a906d96",
    TemplateId.COT_EDIT_CONSISTENCY: "f5fad7ac4f8974152d93b4d31b59a9c1eaa669f914f69df41ba662fc7a0a5cff",
    TemplateId.PERCEPTUAL_QUALITY: "c462db7ec72ab492635560eebf94015aa1bad4f651428c5a9864da244f9fade8",
}


@pytest.mark.parametrize("tid", list(TemplateId))
def test_bundled_template_matches_golden(tid):
    t = load_template(tid)
    golden = (GOLDEN / bundled_template_path(tid).name).read_bytes()
    assert t.body.encode("utf-8") == golden
    assert t.sha256 == PINNED[tid] == hashlib.sha256(golden).hexdigest()


def test_slot_counts():
    assert [len(SLOTS[t]) for t in TemplateId] == [1, 2, 2, 3, 1]


def test_template_text_landmarks():
    ts = load_templates()
    assert "five precise categories" in ts[TemplateId.INSTRUCTION_GEN].body
    assert "[[x1, y1, x2, y2]" in ts[TemplateId.GROUNDING_BOXES].body.replace(" ,", ",") or \
        "x1" in ts[TemplateId.GROUNDING_BOXES].body
    for tid in (TemplateId.SEMANTIC_CONSISTENCY, TemplateId.COT_EDIT_CONSISTENCY, TemplateId.PERCEPTUAL_QUALITY):
        assert '"score"' in ts[tid].body and '"reasoning"' in ts[tid].body


def test_override_path(tmp_path):
    p = tmp_path / "custom.txt"
    p.write_text("Rate it.")
    ts = load_templates({"PerceptualQuality": str(p)})
    assert ts[TemplateId.PERCEPTUAL_QUALITY].body == "Rate it."
    assert ts[TemplateId.SEMANTIC_CONSISTENCY].sha256 == PINNED[TemplateId.SEMANTIC_CONSISTENCY]


def _sample(with_target=True):
    src = RasterImage.filled(8, 8, (10, 20, 30))
    tgt = RasterImage.filled(8, 8, (40, 50, 60)) if with_target else None
    return EditSample("x", src, instruction="Add a hat", target=tgt)


def test_render_cot_edit_order():
    ts = load_templates()
    cot = RasterImage.filled(8, 8, (255, 0, 255))
    segs = render_prompt(ts[TemplateId.COT_EDIT_CONSISTENCY], _sample(), {"cot": cot})
    assert segs[0] == {"type": "text", "text": ts[TemplateId.COT_EDIT_CONSISTENCY].body}
    assert [s["role"] for s in segs if s["type"] == "image"] == ["source", "edited", "cot"]
    assert segs[3]["image"] is cot
    assert segs[-1] == {"type": "text", "text": "Instruction: Add a hat"}


def test_render_single_image_and_missing_slot():
    ts = load_templates()
    segs = render_prompt(ts[TemplateId.PERCEPTUAL_QUALITY], _sample())
    assert sum(s["type"] == "image" for s in segs) == 1
    with pytest.raises(MissingSlot):
        render_prompt(ts[TemplateId.GROUNDING_BOXES], _sample(with_target=False))


def test_render_is_deterministic_on_the_wire():
    ts = load_templates()
    a = to_wire_messages(render_prompt(ts[TemplateId.SEMANTIC_CONSISTENCY], _sample()))
    b = to_wire_messages(render_prompt(ts[TemplateId.SEMANTIC_CONSISTENCY], _sample()))
    assert a == b
    content = a[0]["content"]
    assert a[0]["role"] == "user"
    assert [c["type"] for c in content] == ["text", "image", "image", "text"]
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")


def test_template_dir_replaces_matching_files(tmp_path):
    (tmp_path / bundled_template_path(TemplateId.PERCEPTUAL_QUALITY).name).write_text("Local PQ rubric.")
    ts = load_templates(template_dir=tmp_path)
    assert ts[TemplateId.PERCEPTUAL_QUALITY].body == "Local PQ rubric."
    assert ts[TemplateId.GROUNDING_BOXES].sha256 == PINNED[TemplateId.GROUNDING_BOXES]
