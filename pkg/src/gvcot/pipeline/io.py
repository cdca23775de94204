"""Manifest rows, PNG files and content-addressed artifacts."""

from __future__ import annotations

import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from ..core import BinaryMask, Diagnostic, EditSample, JudgeVerdict, RasterImage
from ..errors import ContractViolation
from ..mask_lab import mask_from_png_array, mask_to_png_array


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ContractViolation(f"{path}:{lineno}: {exc.msg}") from exc
    return rows


def dumps_row(row: dict) -> str:
    return json.dumps(row, sort_keys=True, separators=(",", ":"))


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps_row(row) + "\n")


def read_manifest(path: Path) -> list[dict]:
    rows = read_jsonl(path)
    seen = set()
    for row in rows:
        if "id" not in row:
            raise ContractViolation(f"{path}: row without an id")
        if row["id"] in seen:
            raise ContractViolation(f"{path}: duplicate id {row['id']!r}")
        seen.add(row["id"])
    return rows


def quarantine_record(row: dict, stage: str, diagnostics: list[Diagnostic]) -> dict:
    return {"id": row.get("id"), "stage": stage, "diagnostics": [d.to_dict() for d in diagnostics], "row": row}


def encode_png_bytes(arr: np.ndarray) -> bytes:
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(arr)).save(buf, format="PNG")
    return buf.getvalue()


def load_image(path: Path) -> RasterImage:
    with Image.open(path) as im:
        return RasterImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_image(path: Path, img: RasterImage) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_png_bytes(img.data))


def load_mask(path: Path) -> BinaryMask:
    with Image.open(path) as im:
        return mask_from_png_array(np.asarray(im.convert("L")))


class ArtifactStore:
    """Writes PNGs under ``root/<kind>/<sha256 prefix>.png``; returns paths relative to ``base``."""

    def __init__(self, root: Path, base: Path):
        self.root = Path(root)
        self.base = Path(base)

    def put(self, kind: str, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()[:20]
        path = self.root / kind / f"{digest}.png"
        if not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(path)
        return Path(_relpath(path, self.base)).as_posix()

    def put_image(self, kind: str, img: RasterImage) -> str:
        return self.put(kind, encode_png_bytes(img.data))

    def put_mask(self, kind: str, m: BinaryMask) -> str:
        return self.put(kind, encode_png_bytes(mask_to_png_array(m)))


def _relpath(path: Path, base: Path) -> str:
    import os
    return os.path.relpath(Path(path).resolve(), Path(base).resolve())


class RowContext:
    """Resolves a row's relative paths against the manifest directory."""

    def __init__(self, base: Path):
        self.base = Path(base)

    def path(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base / p

    def image(self, row: dict, key: str) -> Optional[RasterImage]:
        return load_image(self.path(row[key])) if row.get(key) else None

    def mask(self, row: dict, key: str) -> Optional[BinaryMask]:
        return load_mask(self.path(row[key])) if row.get(key) else None

    def sample(self, row: dict, target_key: str = "target_path", with_mask: bool = False) -> EditSample:
        verdicts = tuple(JudgeVerdict.from_dict(v) for v in (row.get("verdicts") or {}).values())
        return EditSample(
            id=str(row["id"]),
            source=self.image(row, "source_path"),
            instruction=row.get("instruction") or "",
            reverse_instruction=row.get("reverse"),
            category=row.get("category"),
            boxes=tuple(tuple(b) for b in row.get("boxes") or ()),
            mask=self.mask(row, "region_mask_path") if with_mask else None,
            target=self.image(row, target_key),
            verdicts=verdicts,
        )
