"""Parsers for the three judge response grammars.

Every parser either returns a value or raises ``ParseFailure`` (or a
subclass) carrying the offending text. Nothing else escapes.
"""

from __future__ import annotations

import html
import json
import math
import re
from dataclasses import dataclass
from typing import Optional

from ..core import INSTRUCTION_CATEGORIES, BBox, Diagnostic, JudgeVerdict, normalize_box
from ..errors import ParseFailure, UnknownCategory

_decoder = json.JSONDecoder()


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _json_values(text: str, opener: str):
    """Yield every JSON value that starts at an ``opener`` character, in order."""
    pos = text.find(opener)
    while pos != -1:
        try:
            value, _ = _decoder.raw_decode(text, pos)
        except (ValueError, RecursionError):
            pass
        else:
            yield value
        pos = text.find(opener, pos + 1)


def parse_score_response(text: str, template_id: Optional[str] = None) -> JudgeVerdict:
    if not isinstance(text, str):
        raise ParseFailure("response is not text", repr(text))
    for obj in _json_values(text, "{"):
        if not isinstance(obj, dict) or "score" not in obj or "reasoning" not in obj:
            continue
        score, reasoning = obj["score"], obj["reasoning"]
        if not (isinstance(score, list) and len(score) == 2 and all(_is_number(s) for s in score)):
            continue
        if not isinstance(reasoning, str) or not reasoning.strip():
            continue
        diagnostics = []
        clamped = [min(max(float(s), 0.0), 10.0) for s in score]
        if clamped != [float(s) for s in score]:
            diagnostics.append(Diagnostic("Clamped", "score outside [0, 10]", json.dumps(score)))
        return JudgeVerdict(clamped[0], clamped[1], reasoning, template_id, tuple(diagnostics))
    raise ParseFailure("no JSON object with a two-number 'score' and a 'reasoning'", text)


def serialize_verdict(v: JudgeVerdict) -> str:
    """Render a verdict in the rubric templates' JSON output shape."""
    return json.dumps({"score": [v.score1, v.score2], "reasoning": v.reasoning}, indent=4)


@dataclass(frozen=True)
class InstructionTriple:
    edit_type: str
    instruction: str
    reverse: str

    def __post_init__(self):
        if self.edit_type not in INSTRUCTION_CATEGORIES:
            raise UnknownCategory(f"unknown edit type {self.edit_type!r}", self.edit_type)


_CANONICAL = {re.sub(r"\s+", "", c).lower(): c for c in INSTRUCTION_CATEGORIES}


def _element(body: str, tag: str, text: str) -> str:
    m = re.search(rf"<{tag}>(.*?)</{tag}>", body, flags=re.DOTALL)
    if m is None:
        raise ParseFailure(f"missing <{tag}> element", text)
    return html.unescape(m.group(1)).strip()


def parse_instruction_response(text: str) -> InstructionTriple:
    if not isinstance(text, str):
        raise ParseFailure("response is not text", repr(text))
    m = re.search(r"<result>(.*?)</result>", text, flags=re.DOTALL)
    if m is None:
        raise ParseFailure("missing <result> element", text)
    body = m.group(1)
    edit_type = _element(body, "type", text)
    instruction = _element(body, "instruction", text)
    reverse = _element(body, "reverse", text)
    if not instruction or not reverse:
        raise ParseFailure("empty instruction or reverse", text)
    canonical = _CANONICAL.get(re.sub(r"\s+", "", edit_type).lower())
    if canonical is None:
        raise UnknownCategory(f"edit type {edit_type!r} is not one of the five categories", text)
    return InstructionTriple(canonical, instruction, reverse)


def parse_box_response(text: str, w: int, h: int) -> tuple[list[BBox], list[Diagnostic]]:
    """Parse a list of ``[x1, y1, x2, y2]`` entries.

    Decimal coordinates are truncated toward zero. Malformed entries are
    skipped and reported; boxes leaving the ``w`` x ``h`` frame are kept but
    flagged so that validation downstream can reject them.
    """
    if not isinstance(text, str):
        raise ParseFailure("response is not text", repr(text))
    for value in _json_values(text, "["):
        if isinstance(value, list):
            break
    else:
        raise ParseFailure("no bracketed list found", text)

    if len(value) == 4 and all(_is_number(v) for v in value):
        value = [value]
    boxes, diagnostics = [], []
    for i, entry in enumerate(value):
        if not (isinstance(entry, list) and len(entry) == 4 and all(_is_number(v) for v in entry)):
            diagnostics.append(Diagnostic("MalformedEntry", f"entry {i}", json.dumps(entry)[:200]))
            continue
        box = normalize_box(int(v) for v in entry)
        if box.x1 < 0 or box.y1 < 0 or box.x2 > w or box.y2 > h:
            diagnostics.append(Diagnostic("OutOfFrame", f"entry {i}", str(tuple(box))))
        boxes.append(box)
    return boxes, diagnostics
