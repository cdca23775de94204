"""Bundled judge prompt templates and prompt rendering."""

from __future__ import annotations

import base64
import enum
import hashlib
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional

from PIL import Image

from ..core import EditSample, RasterImage
from ..errors import MissingSlot


class TemplateId(str, enum.Enum):
    INSTRUCTION_GEN = "InstructionGen"
    SEMANTIC_CONSISTENCY = "SemanticConsistency"
    GROUNDING_BOXES = "GroundingBoxes"
    COT_EDIT_CONSISTENCY = "CotEditConsistency"
    PERCEPTUAL_QUALITY = "PerceptualQuality"


_FILES = {
    TemplateId.INSTRUCTION_GEN: "instruction_gen.txt",
    TemplateId.SEMANTIC_CONSISTENCY: "semantic_consistency.txt",
    TemplateId.GROUNDING_BOXES: "grounding_boxes.txt",
    TemplateId.COT_EDIT_CONSISTENCY: "cot_edit_consistency.txt",
    TemplateId.PERCEPTUAL_QUALITY: "perceptual_quality.txt",
}

# Image roles in the order each template introduces them.
SLOTS = {
    TemplateId.INSTRUCTION_GEN: ("source",),
    TemplateId.SEMANTIC_CONSISTENCY: ("source", "edited"),
    TemplateId.GROUNDING_BOXES: ("source", "edited"),
    TemplateId.COT_EDIT_CONSISTENCY: ("source", "edited", "cot"),
    TemplateId.PERCEPTUAL_QUALITY: ("image",),
}

_TAKES_INSTRUCTION = {
    TemplateId.SEMANTIC_CONSISTENCY,
    TemplateId.GROUNDING_BOXES,
    TemplateId.COT_EDIT_CONSISTENCY,
}


@dataclass(frozen=True)
class PromptTemplate:
    id: TemplateId
    body: str
    image_slots: tuple[str, ...]

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.body.encode("utf-8")).hexdigest()


def bundled_template_path(tid: TemplateId) -> Path:
    return Path(str(resources.files("gvcot.judge") / "templates" / _FILES[TemplateId(tid)]))


def load_template(tid, path: Optional[str | Path] = None) -> PromptTemplate:
    tid = TemplateId(tid)
    src = Path(path) if path else bundled_template_path(tid)
    body = src.read_bytes().decode("utf-8")
    return PromptTemplate(tid, body, SLOTS[tid])


def load_templates(overrides: Optional[Mapping[str, str]] = None,
                   template_dir: Optional[str | Path] = None) -> dict[TemplateId, PromptTemplate]:
    """Bundled templates, replaced by same-named files in ``template_dir`` and then by ``overrides``."""
    overrides = {TemplateId(k): v for k, v in (overrides or {}).items()}
    if template_dir:
        for tid in TemplateId:
            candidate = Path(template_dir) / _FILES[tid]
            if tid not in overrides and candidate.is_file():
                overrides[tid] = candidate
    return {tid: load_template(tid, overrides.get(tid)) for tid in TemplateId}


def encode_png(img: RasterImage) -> bytes:
    arr = img.data if img.channels == 3 else img.data[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def image_data_url(img: RasterImage) -> str:
    return "data:image/png;base64," + base64.b64encode(encode_png(img)).decode("ascii")


def _resolve_slot(role: str, sample: EditSample, extra: Mapping[str, RasterImage]) -> Optional[RasterImage]:
    if role in extra:
        return extra[role]
    if role == "source":
        return sample.source
    if role == "edited":
        return sample.target
    if role == "image":
        return extra.get("edited", sample.target)
    return None


def render_prompt(t: PromptTemplate, sample: EditSample,
                  extra_images: Optional[Mapping[str, RasterImage]] = None) -> list[dict]:
    """Build the segment list for one judge call.

    The template body goes first, unmodified, followed by one image segment per
    slot in slot order and, for templates that grade an instruction, a trailing
    ``Instruction:`` text segment.
    """
    extra = dict(extra_images or {})
    segments: list[dict] = [{"type": "text", "text": t.body}]
    for role in t.image_slots:
        img = _resolve_slot(role, sample, extra)
        if img is None:
            raise MissingSlot(f"{t.id.value} needs a {role!r} image for sample {sample.id!r}")
        segments.append({"type": "image", "role": role, "image": img})
    if t.id in _TAKES_INSTRUCTION:
        segments.append({"type": "text", "text": f"Instruction: {sample.instruction}"})
    return segments


def to_wire_messages(segments: list[dict]) -> list[dict]:
    content = []
    for seg in segments:
        if seg["type"] == "text":
            content.append({"type": "text", "text": seg["text"]})
        else:
            content.append({"type": "image", "image_url": {"url": image_data_url(seg["image"])}})
    return [{"role": "user", "content": content}]
