"""Shared value types, box geometry and seeded randomness."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import ContractViolation, DimensionMismatch

# Categories the instruction-generation template allows.
INSTRUCTION_CATEGORIES = (
    "Add/Remove Object",
    "Replace/Transform Object",
    "Color/Style Adjustment",
    "Resize/Relocate/Rotate Object",
    "Change Background",
)


def round_half_away(x):
    """Round to the nearest integer, ties away from zero. Works on scalars and arrays."""
    if np.isscalar(x):
        return int(math.copysign(math.floor(abs(x) + 0.5), x))
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str = ""
    detail: str = ""

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "detail": self.detail}


class BBox(NamedTuple):
    """Integer pixel rectangle, half-open: covers [x1, x2) x [y1, y2)."""

    x1: int
    y1: int
    x2: int
    y2: int

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    @property
    def area(self) -> int:
        return max(self.width, 0) * max(self.height, 0)

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]


def normalize_box(b: Sequence[int]) -> BBox:
    x1, y1, x2, y2 = (int(v) for v in b)
    return BBox(min(x1, x2), min(y1, y2), max(x1, x2), max(y1, y2))


def box_iou(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    inter = iw * ih if iw > 0 and ih > 0 else 0
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RasterImage:
    """H x W x C grid of 8-bit samples, C in {1, 3}. The array is read-only."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionMismatch(f"expected HxWx1 or HxWx3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch("image must be at least 1x1")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
                raise ValueError("non-finite pixel values")
            if arr.min() < 0 or arr.max() > 255:
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _readonly(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def to_rgb(self) -> "RasterImage":
        if self.channels == 3:
            return self
        return RasterImage(np.repeat(self.data, 3, axis=2))

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None

    @classmethod
    def filled(cls, width: int, height: int, value=(128, 128, 128)) -> "RasterImage":
        value = np.atleast_1d(np.asarray(value, dtype=np.uint8))
        return cls(np.broadcast_to(value, (height, width, value.size)).copy())


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """H x W boolean grid; True marks the edit region."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"mask must be a non-empty 2-D array, got shape {arr.shape}")
        object.__setattr__(self, "bits", _readonly(arr.astype(bool)))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def area(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None

    @classmethod
    def empty(cls, width: int, height: int) -> "BinaryMask":
        return cls(np.zeros((height, width), dtype=bool))


@dataclass(frozen=True)
class JudgeVerdict:
    score1: float
    score2: float
    reasoning: str
    template_id: Optional[str] = None
    diagnostics: tuple[Diagnostic, ...] = ()

    def to_dict(self) -> dict:
        return {
            "score": [self.score1, self.score2],
            "reasoning": self.reasoning,
            "template_id": self.template_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JudgeVerdict":
        s1, s2 = d["score"]
        return cls(float(s1), float(s2), d.get("reasoning", ""), d.get("template_id"))


@dataclass(frozen=True)
class EditSample:
    """Source image, instruction, region annotations and target image of one edit."""

    id: str
    source: RasterImage
    instruction: str = ""
    reverse_instruction: Optional[str] = None
    category: Optional[str] = None
    boxes: tuple[BBox, ...] = ()
    mask: Optional[BinaryMask] = None
    target: Optional[RasterImage] = None
    verdicts: tuple[JudgeVerdict, ...] = field(default_factory=tuple)

    def __post_init__(self):
        w, h = self.source.width, self.source.height
        boxes = tuple(normalize_box(b) for b in self.boxes)
        for b in boxes:
            if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
                raise ContractViolation(f"box {tuple(b)} outside {w}x{h} source")
        object.__setattr__(self, "boxes", boxes)
        if self.mask is not None and self.mask.shape != (h, w):
            raise DimensionMismatch(f"mask {self.mask.shape} does not match source {(h, w)}")


class Rng:
    """Seeded random stream that can be split into independent labelled substreams.

    Identical seeds give identical streams; ``split(label)`` depends only on the
    parent seed and the label, never on how much of the parent was consumed.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    @staticmethod
    def derive_seed(seed: int, *labels) -> int:
        h = hashlib.blake2b(digest_size=8)
        h.update(str(int(seed) & 0xFFFFFFFFFFFFFFFF).encode())
        for label in labels:
            h.update(b"\x1f")
            h.update(str(label).encode())
        return int.from_bytes(h.digest(), "little")

    def split(self, *labels) -> "Rng":
        return Rng(self.derive_seed(self.seed, *labels))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed})"
