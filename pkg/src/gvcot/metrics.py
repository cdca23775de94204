"""Benchmark scoring, embedding-space metrics, pixel metrics and GSB tallies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import Diagnostic, RasterImage, round_half_away
from .errors import DimensionMismatch, EmptySet, ImageTooSmall, NoVotes, ZeroVector

IDENTICAL = "identical"
SSIM_WINDOW = 8
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2


def vie_overall(sc: float, pq: float) -> float:
    return math.sqrt(sc * pq)


@dataclass(frozen=True)
class SampleScores:
    sc: float
    pq: float
    sample_id: str = ""
    category: Optional[str] = None

    @property
    def overall(self) -> float:
        return vie_overall(self.sc, self.pq)


@dataclass(frozen=True)
class BenchmarkSummary:
    sc: float
    pq: float
    overall: float
    count: int

    def to_dict(self) -> dict:
        return {"SC": self.sc, "PQ": self.pq, "O": self.overall, "n": self.count}


def benchmark_aggregate(per_sample: Sequence[SampleScores]) -> BenchmarkSummary:
    """Mean SC, mean PQ and the mean of per-sample geometric means."""
    if not per_sample:
        raise EmptySet("no samples to aggregate")
    ordered = sorted(per_sample, key=lambda s: s.sample_id)
    sc = math.fsum(s.sc for s in ordered) / len(ordered)
    pq = math.fsum(s.pq for s in ordered) / len(ordered)
    ov = math.fsum(s.overall for s in ordered) / len(ordered)
    return BenchmarkSummary(sc, pq, ov, len(ordered))


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"vectors of length {u.size} and {v.size}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVector("cosine of a zero vector")
    return float(np.clip(np.dot(u / nu, v / nv), -1.0, 1.0))


@dataclass
class EmbeddingRecord:
    sample_id: str
    e_src: np.ndarray
    e_edit: np.ndarray
    t_src: Optional[np.ndarray] = None
    t_out: Optional[np.ndarray] = None
    d_src: Optional[np.ndarray] = None
    d_edit: Optional[np.ndarray] = None
    category: Optional[str] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("e_src", "e_edit", "t_src", "t_out", "d_src", "d_edit"):
            v = getattr(self, name)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.ndim != 1 or not np.all(np.isfinite(v)):
                raise ValueError(f"{self.sample_id}: {name} must be a finite 1-D vector")
            setattr(self, name, v)
        for a, b in (("e_src", "e_edit"), ("t_src", "t_out"), ("d_src", "d_edit")):
            va, vb = getattr(self, a), getattr(self, b)
            if va is not None and vb is not None and va.shape != vb.shape:
                raise DimensionMismatch(f"{self.sample_id}: {a} and {b} differ in dimension")

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingRecord":
        known = {"sample_id", "e_src", "e_edit", "t_src", "t_out", "d_src", "d_edit", "category"}
        return cls(
            sample_id=str(d["sample_id"]),
            e_src=d["e_src"], e_edit=d["e_edit"],
            t_src=d.get("t_src"), t_out=d.get("t_out"),
            d_src=d.get("d_src"), d_edit=d.get("d_edit"),
            category=d.get("category"),
            extras={k: v for k, v in d.items() if k not in known},
        )


def clip_dir(r: EmbeddingRecord, diagnostics: Optional[list] = None) -> float:
    """Cosine between the image-embedding delta and the caption-embedding delta."""
    if r.t_src is None or r.t_out is None:
        raise ValueError(f"{r.sample_id}: caption embeddings required for CLIP_dir")
    de, dt = r.e_edit - r.e_src, r.t_out - r.t_src
    if de.shape != dt.shape:
        raise DimensionMismatch("image and caption embeddings differ in dimension")
    if not np.any(de) or not np.any(dt):
        if diagnostics is not None:
            diagnostics.append(Diagnostic("DegenerateDelta", r.sample_id))
        return 0.0
    return cosine(de, dt)


def clip_im(r: EmbeddingRecord) -> float:
    return cosine(r.e_src, r.e_edit)


def clip_out(r: EmbeddingRecord) -> float:
    if r.t_out is None:
        raise ValueError(f"{r.sample_id}: t_out required for CLIP_out")
    return cosine(r.e_edit, r.t_out)


def dino(r: EmbeddingRecord) -> float:
    if r.d_src is None or r.d_edit is None:
        raise ValueError(f"{r.sample_id}: DINO embeddings required")
    return cosine(r.d_src, r.d_edit)


def _pair(a: RasterImage, b: RasterImage) -> tuple[np.ndarray, np.ndarray]:
    if a.shape != b.shape:
        raise DimensionMismatch(f"images {a.shape} and {b.shape}")
    return a.data.astype(np.float64), b.data.astype(np.float64)


def pixel_l1(a: RasterImage, b: RasterImage) -> float:
    x, y = _pair(a, b)
    return float(np.mean(np.abs(x - y)) / 255.0)


def psnr(a: RasterImage, b: RasterImage):
    """PSNR in dB, or the string ``"identical"`` when the images match exactly."""
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0:
        return IDENTICAL
    return 10.0 * math.log10(255.0 ** 2 / mse)


def to_gray(img: RasterImage) -> np.ndarray:
    if img.channels == 1:
        return img.data[:, :, 0].astype(np.float64)
    rgb = img.data.astype(np.float64)
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return round_half_away(y)


def _window_sum(arr: np.ndarray, k: int) -> np.ndarray:
    """Sum over every k x k patch via an integral image ("valid" positions only)."""
    ii = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    ii[1:, 1:] = arr.cumsum(axis=0).cumsum(axis=1)
    return ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k]


def ssim(a: RasterImage, b: RasterImage, window: int = SSIM_WINDOW) -> float:
    """Mean SSIM over every ``window`` x ``window`` patch (stride 1, uniform weights).

    Patch statistics use population (1/N) moments.
    """
    if a.shape != b.shape:
        raise DimensionMismatch(f"images {a.shape} and {b.shape}")
    if a.height < window or a.width < window:
        raise ImageTooSmall(f"{a.width}x{a.height} is smaller than the {window}x{window} window")
    x, y = to_gray(a), to_gray(b)
    n = float(window * window)
    mx, my = _window_sum(x, window) / n, _window_sum(y, window) / n
    vx = _window_sum(x * x, window) / n - mx * mx
    vy = _window_sum(y * y, window) / n - my * my
    cxy = _window_sum(x * y, window) / n - mx * my
    num = (2 * mx * my + SSIM_C1) * (2 * cxy + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class GsbTally:
    opponent: str
    good: int
    same: int
    bad: int

    def __post_init__(self):
        if min(self.good, self.same, self.bad) < 0:
            raise ValueError("vote counts must be non-negative")


def gsb_aggregate(tallies: Iterable[GsbTally]) -> dict[str, dict]:
    pooled: dict[str, list[int]] = {}
    for t in tallies:
        acc = pooled.setdefault(t.opponent, [0, 0, 0])
        acc[0] += t.good
        acc[1] += t.same
        acc[2] += t.bad
    out = {}
    for opp in sorted(pooled):
        g, s, b = pooled[opp]
        total = g + s + b
        if total < 1:
            raise NoVotes(f"no votes against {opp!r}")
        out[opp] = {
            "good_pct": 100.0 * g / total,
            "same_pct": 100.0 * s / total,
            "bad_pct": 100.0 * b / total,
            "net": (g - b) / total,
            "total": total,
        }
    return out
