"""Curation stages, reward computation and evaluation over manifest rows.

Every curation stage marks the rows it has processed in ``row["stages"]``;
re-running a stage on its own output passes those rows through untouched.
Rows that fail are quarantined with diagnostics and the batch continues.
"""

from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..core import BinaryMask, Diagnostic, normalize_box
from ..errors import DimensionMismatch, EmptySet, GvcotError, IncompleteGroup, ParseFailure
from ..judge import TemplateId, load_templates, parse_box_response, parse_instruction_response, \
    parse_score_response, render_prompt
from ..mask_lab import clean_mask, compose_overlay, rasterize_boxes
from ..metrics import (IDENTICAL, BenchmarkSummary, EmbeddingRecord, GsbTally, SampleScores, benchmark_aggregate,
                       clip_dir, clip_im, clip_out, dino, gsb_aggregate, pixel_l1, psnr, ssim)
from ..region_miner import CandidateSet, mine_regions_detailed
from ..rewards import RewardRecord, RewardWeights, Stage, aggregate, assign_advantages, format_reward, iou_reward, \
    judge_reward
from .config import PipelineConfig
from .io import ArtifactStore, RowContext, quarantine_record

log = logging.getLogger(__name__)

Judge = Callable[..., str]


class StageFailure(GvcotError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(f"{d.code}: {d.message}" for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass
class StageResult:
    rows: list[dict]
    quarantined: list[dict] = field(default_factory=list)
    rejected: list[dict] = field(default_factory=list)
    processed: int = 0

    @property
    def total_failure(self) -> bool:
        return self.processed > 0 and not self.rows and not self.rejected


@dataclass
class StageEnv:
    cfg: PipelineConfig
    judge: Judge
    ctx: RowContext
    store: Optional[ArtifactStore] = None
    templates: dict = field(default_factory=load_templates)

    def ask(self, tid: TemplateId, sample, extra=None, beam: int = 0) -> str:
        messages = render_prompt(self.templates[tid], sample, extra)
        return self.judge(tid, sample, messages, beam=beam)


def _diagnose(exc: Exception) -> list[Diagnostic]:
    if isinstance(exc, StageFailure):
        return exc.diagnostics
    detail = exc.text[:200] if isinstance(exc, ParseFailure) else ""
    return [Diagnostic(type(exc).__name__, str(exc), detail)]


def run_stage(name: str, rows: Sequence[dict], fn: Callable[[dict], dict], workers: int = 1) -> StageResult:
    """Apply ``fn`` to every unprocessed row, in parallel, keeping input order."""

    def one(row: dict):
        if name in row.get("stages", ()):
            return "skip", row
        try:
            out = fn(copy.deepcopy(row))
        except (GvcotError, OSError, ValueError, KeyError, TypeError) as exc:
            log.info("%s: row %s quarantined: %s", name, row.get("id"), exc)
            return "fail", quarantine_record(row, name, _diagnose(exc))
        out["stages"] = list(row.get("stages", ())) + [name]
        return "ok", out

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(one, rows))
    res = StageResult([])
    for status, payload in results:
        if status == "fail":
            res.quarantined.append(payload)
            res.processed += 1
            continue
        if status == "ok":
            res.processed += 1
        if payload.get("filter") == "rejected":
            res.rejected.append(payload)
        else:
            res.rows.append(payload)
    return res


# --- curation -------------------------------------------------------------------------------------------------


def gen_instructions(rows, env: StageEnv) -> StageResult:
    def fn(row):
        sample = env.ctx.sample(row)
        triple = parse_instruction_response(env.ask(TemplateId.INSTRUCTION_GEN, sample))
        row.update(instruction=triple.instruction, reverse=triple.reverse, category=triple.edit_type)
        return row

    return run_stage("gen-instructions", rows, fn, env.cfg["workers"])


def filter_pairs(rows, env: StageEnv) -> StageResult:
    lo_success, lo_contain = env.cfg["filter.min_success"], env.cfg["filter.min_containment"]
    if not (0 <= lo_success <= 10 and 0 <= lo_contain <= 10):
        raise ValueError("filter thresholds must lie in [0, 10]")

    def fn(row):
        sample = env.ctx.sample(row)
        if sample.target is None:
            raise StageFailure([Diagnostic("MissingTarget", "filter needs a target image")])
        tid = TemplateId.SEMANTIC_CONSISTENCY
        v = parse_score_response(env.ask(tid, sample), tid.value)
        row.setdefault("verdicts", {})[tid.value] = v.to_dict()
        if v.diagnostics:
            row.setdefault("notes", []).extend(d.to_dict() for d in v.diagnostics)
        keep = v.score1 >= lo_success and v.score2 >= lo_contain
        row["filter"] = "kept" if keep else "rejected"
        return row

    return run_stage("filter", rows, fn, env.cfg["workers"])


def mine_regions_stage(rows, env: StageEnv) -> StageResult:
    params = env.cfg.mining()
    n_beam = env.cfg["mining.n_beam"]
    if n_beam < 1:
        raise ValueError("mining.n_beam must be >= 1")

    def fn(row):
        sample = env.ctx.sample(row)
        w, h = sample.source.width, sample.source.height
        candidates, notes = [], []
        for beam in range(n_beam):
            try:
                boxes, diags = parse_box_response(env.ask(TemplateId.GROUNDING_BOXES, sample, beam=beam), w, h)
            except ParseFailure as exc:
                notes.append(Diagnostic("BeamParseFailure", f"beam {beam}", str(exc)))
                continue
            candidates.extend(boxes)
            notes.extend(diags)
        if not candidates:
            raise StageFailure(notes + [Diagnostic("MiningFailed", "no candidate boxes from any beam")])
        result = mine_regions_detailed(CandidateSet(candidates, w, h), params)
        if result.failed:
            raise StageFailure(notes + result.diagnostics)
        row["boxes"] = [b.as_list() for b in result.boxes]
        row["mining"] = {"candidates": len(candidates), "rejected": len(result.rejected),
                         "diagnostics": [d.to_dict() for d in result.diagnostics]}
        return row

    return run_stage("mine-regions", rows, fn, env.cfg["workers"])


_INSERT_VERBS = ("add ", "insert ")
_INSERT_CATEGORIES = {"add", "insert", "insertion", "addition"}


def is_insertion(row: dict) -> bool:
    category = (row.get("category") or "").strip().lower()
    instruction = (row.get("instruction") or "").strip().lower()
    return category in _INSERT_CATEGORIES or instruction.startswith(_INSERT_VERBS)


def region_mask(row: dict, env: StageEnv) -> tuple[BinaryMask, str]:
    """Box mask for insertions or when no segmentation is supplied, else the cleaned segmentation."""
    source = env.ctx.image(row, "source_path")
    if row.get("mask_path") and not is_insertion(row):
        external = env.ctx.mask(row, "mask_path")
        if external.shape != (source.height, source.width):
            raise DimensionMismatch(f"mask {external.shape} vs source {(source.height, source.width)}")
        return clean_mask(external, env.cfg.morph()), "segmentation"
    if not row.get("boxes"):
        raise StageFailure([Diagnostic("NoRegion", "row has neither boxes nor a usable mask")])
    return rasterize_boxes([normalize_box(b) for b in row["boxes"]], source.width, source.height), "boxes"


def make_masks(rows, env: StageEnv) -> StageResult:
    def fn(row):
        m, origin = region_mask(row, env)
        if m.area() == 0:
            raise StageFailure([Diagnostic("EmptyMask", f"{origin} mask is empty after cleanup")])
        row["region_mask_path"] = env.store.put_mask("masks", m)
        row["mask_origin"] = origin
        return row

    return run_stage("make-masks", rows, fn, env.cfg["workers"])


def overlay(rows, env: StageEnv) -> StageResult:
    style = env.cfg.overlay()

    def fn(row):
        source = env.ctx.image(row, "source_path")
        m = env.ctx.mask(row, "region_mask_path")
        if m is None:
            raise StageFailure([Diagnostic("NoMask", "run make-masks first")])
        row["cot_path"] = env.store.put_image("cot", compose_overlay(source, m, style))
        return row

    return run_stage("overlay", rows, fn, env.cfg["workers"])


# --- rewards --------------------------------------------------------------------------------------------------


def group_rollouts(rollouts: Sequence[dict], group_size: int) -> dict[str, list[dict]]:
    groups: dict[str, list[dict]] = {}
    for r in rollouts:
        groups.setdefault(str(r["sample_id"]), []).append(r)
    for sid in sorted(groups):
        if len(groups[sid]) != group_size:
            raise IncompleteGroup(sid, len(groups[sid]), group_size)
        groups[sid].sort(key=lambda r: int(r.get("rollout", 0)))
    return groups


def compute_rewards(rollouts: Sequence[dict], samples: dict[str, dict], env: StageEnv,
                    weights: Optional[RewardWeights] = None, rollout_ctx: Optional[RowContext] = None):
    """Score every rollout, then normalise aggregates within each sample's group.

    Returns (records, advantages by sample id, quarantine records).
    """
    weights = weights or env.cfg.reward_weights()
    rctx = rollout_ctx or env.ctx
    groups = group_rollouts(rollouts, weights.group_size)
    morph = env.cfg.morph()

    def score(item):
        sid, r = item
        row = samples.get(sid)
        if row is None:
            raise StageFailure([Diagnostic("UnknownSample", f"no curated row for {sid!r}")])
        img = rctx.image(r, "image_path")
        if weights.stage is Stage.REASONING:
            src = env.ctx.image(row, "source_path")
            gt = env.ctx.mask(row, "region_mask_path")
            if gt is None:
                raise StageFailure([Diagnostic("NoMask", f"{sid} has no region mask")])
            return iou_reward(src, img, gt, morph), format_reward(img, src)
        sample = env.ctx.sample(row)
        cot = env.ctx.image(row, "cot_path")
        if cot is None:
            raise StageFailure([Diagnostic("NoThought", f"{sid} has no visual thought")])
        tid = TemplateId.COT_EDIT_CONSISTENCY
        v1 = parse_score_response(env.ask(tid, sample, {"edited": img, "cot": cot}, beam=int(r.get("rollout", 0))),
                                  tid.value)
        tid = TemplateId.PERCEPTUAL_QUALITY
        v2 = parse_score_response(env.ask(tid, sample, {"image": img}, beam=int(r.get("rollout", 0))), tid.value)
        return judge_reward(v1), judge_reward(v2)

    items = [(sid, r) for sid in sorted(groups) for r in groups[sid]]

    def safe(item):
        try:
            return score(item), None
        except (GvcotError, OSError, ValueError, KeyError) as exc:
            return None, _diagnose(exc)

    with ThreadPoolExecutor(max_workers=max(1, env.cfg["workers"])) as pool:
        scored = list(pool.map(safe, items))

    failed = sorted({sid for (sid, _), (res, _) in zip(items, scored) if res is None})
    quarantine = []
    records = []
    for (sid, r), (res, diags) in zip(items, scored):
        if sid in failed:
            if diags:
                quarantine.append(quarantine_record(r, "reward", diags))
            continue
        r1, r2 = res
        records.append(RewardRecord(sid, weights.stage.value, float(r1), float(r2),
                                    aggregate(r1, r2, weights), rollout=int(r.get("rollout", 0))))
    advantages = assign_advantages(records)
    return records, advantages, quarantine


# --- evaluation -----------------------------------------------------------------------------------------------

EVAL_MODES = ("judge", "embedding", "pixel", "gsb")


def _reduce(v, how: str) -> float:
    if how == "min":
        return min(v.score1, v.score2)
    if how == "mean":
        return (v.score1 + v.score2) / 2.0
    raise ValueError(f"unknown verdict reduction {how!r}")


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else None


def _summary_dict(s: BenchmarkSummary) -> dict:
    return s.to_dict()


@dataclass
class EvalReport:
    mode: str
    samples: list[dict]
    summary: dict
    per_category: dict
    diagnostics: list[dict]

    def to_dict(self) -> dict:
        return {"mode": self.mode, "summary": self.summary, "per_category": self.per_category,
                "samples": self.samples, "diagnostics": self.diagnostics}


def _per_row(rows, fn, workers):
    def safe(row):
        try:
            return fn(row), None
        except (GvcotError, OSError, ValueError, KeyError, TypeError) as exc:
            return None, {"id": row.get("id", row.get("sample_id")), "diagnostics": [d.to_dict() for d in
                                                                                      _diagnose(exc)]}

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        out = list(pool.map(safe, rows))
    return [r for r, _ in out if r is not None], [d for _, d in out if d is not None]


def _by_category(samples: list[dict]) -> dict[str, list[dict]]:
    cats: dict[str, list[dict]] = {}
    for s in samples:
        cats.setdefault(s.get("category") or "uncategorized", []).append(s)
    return {k: cats[k] for k in sorted(cats)}


def evaluate(rows: Sequence[dict], mode: str, env: StageEnv) -> EvalReport:
    if mode not in EVAL_MODES:
        raise ValueError(f"mode must be one of {EVAL_MODES}")
    workers = env.cfg["workers"]

    if mode == "gsb":
        tallies = [GsbTally(str(r["opponent"]), int(r["good"]), int(r["same"]), int(r["bad"])) for r in rows]
        agg = gsb_aggregate(tallies)
        samples = [{"opponent": k, **v} for k, v in agg.items()]
        return EvalReport(mode, samples, agg, {}, [])

    if mode == "judge":
        how = env.cfg["eval.verdict_reduce"]

        def fn(row):
            if "sc" in row and "pq" in row:
                sc, pq = float(row["sc"]), float(row["pq"])
            else:
                sample = env.ctx.sample(row, target_key="output_path")
                out = sample.target
                if out is None:
                    raise StageFailure([Diagnostic("MissingOutput", "judge mode needs output_path")])
                tid = TemplateId.SEMANTIC_CONSISTENCY
                sc = _reduce(parse_score_response(env.ask(tid, sample, {"edited": out}), tid.value), how)
                tid = TemplateId.PERCEPTUAL_QUALITY
                pq = _reduce(parse_score_response(env.ask(tid, sample, {"image": out}), tid.value), how)
            if not (0 <= sc <= 10 and 0 <= pq <= 10):
                raise ValueError(f"scores ({sc}, {pq}) outside [0, 10]")
            s = SampleScores(sc, pq, str(row["id"]), row.get("category"))
            return {"id": s.sample_id, "category": s.category, "SC": sc, "PQ": pq, "O": s.overall}

        samples, diags = _per_row(rows, fn, workers)
        if not samples:
            raise EmptySet("no sample could be scored")
        samples.sort(key=lambda s: s["id"])

        def summ(group):
            return _summary_dict(benchmark_aggregate([SampleScores(s["SC"], s["PQ"], s["id"]) for s in group]))

        return EvalReport(mode, samples, summ(samples),
                          {k: summ(v) for k, v in _by_category(samples).items()}, diags)

    if mode == "embedding":
        def fn(row):
            rec = EmbeddingRecord.from_dict({"sample_id": row.get("sample_id", row.get("id")), **row})
            out = {"id": rec.sample_id, "category": rec.category, "CLIP_im": clip_im(rec)}
            diag: list = []
            if rec.t_src is not None and rec.t_out is not None:
                out["CLIP_dir"] = clip_dir(rec, diag)
            if rec.t_out is not None:
                out["CLIP_out"] = clip_out(rec)
            if rec.d_src is not None and rec.d_edit is not None:
                out["DINO"] = dino(rec)
            for k in ("lpips", "clip_i"):
                if k in rec.extras:
                    out[k.upper() if k == "lpips" else "CLIP_I"] = float(rec.extras[k])
            if diag:
                out["notes"] = [d.code for d in diag]
            return out

        keys = ("CLIP_dir", "CLIP_im", "CLIP_out", "DINO", "LPIPS", "CLIP_I")
    else:
        def fn(row):
            a = env.ctx.image(row, "output_path")
            b = env.ctx.image(row, "target_path")
            if a is None or b is None:
                raise StageFailure([Diagnostic("MissingImage", "pixel mode needs output_path and target_path")])
            p = psnr(a, b)
            return {"id": str(row["id"]), "category": row.get("category"), "L1": pixel_l1(a, b), "PSNR": p,
                    "SSIM": ssim(a, b)}

        keys = ("L1", "PSNR", "SSIM")

    samples, diags = _per_row(rows, fn, workers)
    if not samples:
        raise EmptySet("no sample could be scored")
    samples.sort(key=lambda s: s["id"])

    def summ(group):
        out = {"n": len(group)}
        for k in keys:
            vals = [s[k] for s in group if k in s and s[k] != IDENTICAL]
            if any(k in s for s in group):
                out[k] = _mean(vals)
        if "PSNR" in keys:
            out["PSNR_identical"] = sum(1 for s in group if s.get("PSNR") == IDENTICAL)
        return out

    return EvalReport(mode, samples, summ(samples), {k: summ(v) for k, v in _by_category(samples).items()}, diags)
