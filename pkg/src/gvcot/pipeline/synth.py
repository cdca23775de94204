"""Synthetic source/target pairs and rollouts for exercising the pipeline."""

from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from ..core import BinaryMask, Rng
from ..mask_lab import OverlayStyle, compose_overlay, mask_to_png_array
from .io import ArtifactStore, RowContext, encode_png_bytes, write_jsonl

# Background channels stay inside this band so a magenta overlay at alpha 0.5
# always moves at least one channel by more than the default diff threshold.
BG_LOW, BG_HIGH = 40, 190


def background(width: int, height: int, rng: Rng) -> np.ndarray:
    """Smooth colour gradient plus mild pixel noise."""
    g = rng.generator
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.empty((height, width, 3))
    for c in range(3):
        a, b, base = g.uniform(-0.6, 0.6), g.uniform(-0.6, 0.6), g.uniform(BG_LOW + 30, BG_HIGH - 30)
        out[..., c] = base + a * (xx - width / 2) + b * (yy - height / 2)
    out += g.normal(0.0, 6.0, size=out.shape)
    return np.clip(np.rint(out), BG_LOW, BG_HIGH).astype(np.uint8)


def random_box(width: int, height: int, rng: Rng, min_side: int = 12, max_frac: float = 0.5) -> list[int]:
    g = rng.generator
    bw = int(g.integers(min_side, max(min_side + 1, int(width * max_frac))))
    bh = int(g.integers(min_side, max(min_side + 1, int(height * max_frac))))
    x1 = int(g.integers(0, width - bw + 1))
    y1 = int(g.integers(0, height - bh + 1))
    return [x1, y1, x1 + bw, y1 + bh]


def edited_target(src: np.ndarray, box: list[int], rng: Rng) -> np.ndarray:
    """Paint the box with a saturated colour so every pixel inside differs strongly."""
    color = rng.generator.integers(0, 2, size=3) * 255
    out = src.copy()
    x1, y1, x2, y2 = box
    out[y1:y2, x1:x2] = color.astype(np.uint8)
    return out


def make_fixture(out_dir: Path, n: int = 50, seed: int = 0, width: int = 64, height: int = 64,
                 with_external_masks: int = 0) -> Path:
    """Write ``n`` source/target PNG pairs and a manifest; returns the manifest path.

    The first ``with_external_masks`` rows also carry a noisy segmentation PNG
    (the true box with a hole and a detached speck).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = ArtifactStore(out_dir / "images", out_dir)
    root = Rng(seed).split("fixture")
    rows = []
    for i in range(n):
        r = root.split(i)
        src = background(width, height, r.split("bg"))
        box = random_box(width, height, r.split("box"))
        tgt = edited_target(src, box, r.split("paint"))
        row = {"id": f"s{i:04d}", "source_path": store.put("src", encode_png_bytes(src)),
               "target_path": store.put("tgt", encode_png_bytes(tgt)), "gt_box": box}
        if i < with_external_masks:
            bits = np.zeros((height, width), dtype=bool)
            x1, y1, x2, y2 = box
            bits[y1:y2, x1:x2] = True
            cy, cx = (y1 + y2) // 2, (x1 + x2) // 2
            bits[cy - 1:cy + 2, cx - 1:cx + 2] = False
            bits[0:2, 0:2] = not bits[0, 0]
            row["mask_path"] = store.put("ext", encode_png_bytes(mask_to_png_array(BinaryMask(bits))))
        rows.append(row)
    manifest = out_dir / "manifest.jsonl"
    write_jsonl(manifest, rows)
    return manifest


def make_rollouts(curated: list[dict], ctx: RowContext, out_dir: Path, group_size: int = 24, seed: int = 0,
                  style: Optional[OverlayStyle] = None) -> Path:
    """Fake visual-thought rollouts: the true overlay shifted by a few pixels per rollout.

    Rollout 0 of each group is the exact overlay.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    store = ArtifactStore(out_dir / "rollouts", out_dir)
    style = style or OverlayStyle()
    rows = []
    for row in sorted(curated, key=lambda r: r["id"]):
        src = ctx.image(row, "source_path")
        mask = ctx.mask(row, "region_mask_path")
        if mask is None:
            continue
        rng = Rng(seed).split("rollouts", row["id"])
        for k in range(group_size):
            dx, dy = (0, 0) if k == 0 else (int(v) for v in rng.split(k).integers(-6, 7, size=2))
            shifted = np.roll(np.roll(mask.bits, dy, axis=0), dx, axis=1)
            img = compose_overlay(src, BinaryMask(shifted), style)
            rows.append({"sample_id": row["id"], "rollout": k, "image_path": store.put_image("img", img)})
    path = out_dir / "rollouts.jsonl"
    write_jsonl(path, rows)
    return path

