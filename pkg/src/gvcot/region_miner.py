"""Consensus edit regions from noisy grounding candidates.

Candidates from several grounding queries are validated, grouped by a
threshold graph on pairwise IoU, stripped of minority clusters and averaged.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .core import BBox, Diagnostic, box_iou, normalize_box, round_half_away
from .errors import ContractViolation

log = logging.getLogger(__name__)


class Rejection(enum.Enum):
    OUT_OF_BOUNDS = "OutOfBounds"
    ZERO_AREA = "ZeroArea"
    TOO_SMALL = "TooSmall"
    EXTREME_ASPECT = "ExtremeAspect"


@dataclass(frozen=True)
class MiningParams:
    iou_threshold: float = 0.5
    max_aspect_ratio: float = 20.0
    min_area_frac: float = 1e-4
    min_cluster_size: int = 2

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in (0, 1]")
        if self.max_aspect_ratio < 1.0:
            raise ValueError("max_aspect_ratio must be >= 1")
        if self.min_area_frac < 0:
            raise ValueError("min_area_frac must be >= 0")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")


@dataclass(frozen=True)
class CandidateSet:
    candidates: tuple[BBox, ...]
    image_width: int
    image_height: int

    def __post_init__(self):
        if not self.candidates:
            raise ContractViolation("a candidate set needs at least one box")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ContractViolation("image dimensions must be positive")
        object.__setattr__(self, "candidates", tuple(normalize_box(b) for b in self.candidates))


@dataclass
class MiningResult:
    boxes: list[BBox]
    rejected: list[tuple[BBox, Rejection]]
    diagnostics: list[Diagnostic]

    @property
    def failed(self) -> bool:
        return not self.boxes


def validate_box(b: BBox, params: MiningParams, w: int, h: int) -> Union[BBox, Rejection]:
    if b.x1 < 0 or b.y1 < 0 or b.x2 > w or b.y2 > h:
        return Rejection.OUT_OF_BOUNDS
    if b.area == 0:
        return Rejection.ZERO_AREA
    if b.area < params.min_area_frac * w * h:
        return Rejection.TOO_SMALL
    long_side, short_side = max(b.width, b.height), min(b.width, b.height)
    if long_side / short_side > params.max_aspect_ratio:
        return Rejection.EXTREME_ASPECT
    return b


def _cluster_key(cluster: list[BBox]) -> tuple:
    return (-len(cluster), tuple(cluster[0]))


def cluster_by_iou(boxes: Sequence[BBox], tau: float) -> list[list[BBox]]:
    """Connected components of the graph joining boxes with IoU >= tau.

    Clusters come back largest first, ties broken by their smallest member
    box; members inside a cluster are sorted as well.
    """
    boxes = sorted(normalize_box(b) for b in boxes)
    n = len(boxes)
    if n == 0:
        return []
    rows, cols = [], []
    for i in range(n):
        for j in range(i + 1, n):
            if box_iou(boxes[i], boxes[j]) >= tau:
                rows.append(i)
                cols.append(j)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    groups: dict[int, list[BBox]] = {}
    for label, b in zip(labels, boxes):
        groups.setdefault(int(label), []).append(b)
    return sorted(groups.values(), key=_cluster_key)


def consensus_box(cluster: Sequence[BBox]) -> BBox:
    if not cluster:
        raise ContractViolation("consensus of an empty cluster")
    coords = np.asarray([tuple(b) for b in cluster], dtype=np.float64)
    mean = round_half_away(coords.mean(axis=0))
    return normalize_box(int(v) for v in mean)


def mine_regions_detailed(cs: CandidateSet, params: MiningParams = MiningParams()) -> MiningResult:
    w, h = cs.image_width, cs.image_height
    valid, rejected = [], []
    for b in cs.candidates:
        verdict = validate_box(b, params, w, h)
        if isinstance(verdict, Rejection):
            rejected.append((b, verdict))
        else:
            valid.append(verdict)

    if not valid:
        reasons = sorted({r.value for _, r in rejected})
        diag = Diagnostic("MiningFailed", "every candidate was rejected", ",".join(reasons))
        log.debug("mining failed: %s", diag.detail)
        return MiningResult([], rejected, [diag])

    clusters = cluster_by_iou(valid, params.iou_threshold)
    kept = [c for c in clusters if len(c) >= params.min_cluster_size]
    diagnostics = []
    if not kept:
        # No cluster reached the quorum: fall back to the biggest one, then the
        # largest-area box when all are singletons.
        fallback = max(clusters, key=lambda c: (len(c), consensus_box(c).area))
        kept = [fallback]
        diagnostics.append(Diagnostic("QuorumFallback", f"kept 1 cluster of size {len(fallback)}"))
    boxes = []
    for c in kept:
        box = consensus_box(c)
        # Rounding can push a borderline average past a validation limit.
        verdict = validate_box(box, params, w, h)
        if isinstance(verdict, Rejection):
            diagnostics.append(Diagnostic("ConsensusRejected", verdict.value, str(tuple(box))))
        else:
            boxes.append(box)
    if not boxes:
        diagnostics.append(Diagnostic("MiningFailed", "no consensus box survived validation"))
    return MiningResult(sorted(boxes), rejected, diagnostics)


def mine_regions(cs: CandidateSet, params: MiningParams = MiningParams()) -> list[BBox]:
    return mine_regions_detailed(cs, params).boxes
