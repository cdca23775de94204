"""``gvcot`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from ..errors import GvcotError
from ..judge import EndpointJudge, MockJudge, load_templates
from ..judge.mock import MODES
from ..sandbox import cli as sandbox_cli
from .config import ConfigError, PipelineConfig
from .io import ArtifactStore, RowContext, read_jsonl, read_manifest, write_jsonl
from .report import render_report, write_eval_report
from .stages import (EVAL_MODES, StageEnv, compute_rewards, evaluate, filter_pairs, gen_instructions, make_masks,
                     mine_regions_stage, overlay)
from .synth import make_fixture, make_rollouts

log = logging.getLogger("gvcot")

EXIT_OK, EXIT_ALL_FAILED, EXIT_USAGE, EXIT_CONTRACT = 0, 1, 2, 3

PATH_KEYS = ("source_path", "target_path", "mask_path", "region_mask_path", "cot_path", "output_path", "image_path")


def rebase(row: dict, src_dir: Path, dst_dir: Path) -> dict:
    """Rewrite relative artifact paths so they resolve from ``dst_dir``."""
    if src_dir.resolve() == dst_dir.resolve():
        return row
    out = dict(row)
    for k in PATH_KEYS:
        v = out.get(k)
        if v and not os.path.isabs(v):
            out[k] = Path(os.path.relpath((src_dir / v).resolve(), dst_dir.resolve())).as_posix()
    return out


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gvcot", description="Visual-thought editing data pipeline and evaluation")
    ap.add_argument("--config", type=Path, help="flat key = value config file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--mock-judge", action="store_true", help="use the deterministic offline judge")
    ap.add_argument("--mock-mode", choices=MODES, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    for name, help_ in (("gen-instructions", "write instruction triples"),
                        ("mine-regions", "query grounding beams and mine consensus boxes"),
                        ("make-masks", "rasterise boxes or clean supplied segmentations"),
                        ("overlay", "compose visual-thought overlays")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("manifest", type=Path)
        p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("filter", help="score pairs and split into kept / rejected")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--rejected", type=Path, required=True)

    p = sub.add_parser("reward", help="score rollouts and compute group advantages")
    p.add_argument("--manifest", type=Path, required=True, help="curated manifest (masks, overlays)")
    p.add_argument("--rollouts", type=Path, required=True)
    p.add_argument("--stage", choices=("reasoning", "editing"), default=None)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("evaluate", help="judge / embedding / pixel / gsb evaluation report")
    p.add_argument("manifest", type=Path)
    p.add_argument("--mode", choices=EVAL_MODES, required=True)
    p.add_argument("--output-key", default="output_path", help="row field holding the model output image")
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("report", help="render figures and CSV for a report, reward log or training log")
    p.add_argument("input", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)

    p = sub.add_parser("synth-fixture", help="write a synthetic source/target fixture")
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--external-masks", type=int, default=0)

    p = sub.add_parser("synth-rollouts", help="write shifted-overlay rollouts for a curated manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, required=True)

    sandbox_cli.add_parser(sub)
    return ap


def _judge(args, cfg: PipelineConfig):
    if args.mock_judge:
        return MockJudge(seed=cfg.seed, mode=cfg["mock.mode"], fixed_scores=cfg.fixed_scores())
    return EndpointJudge(cfg.endpoint())


def _env(args, cfg, in_dir: Path, out_dir: Path) -> StageEnv:
    templates = load_templates(template_dir=cfg["judge.template_dir"] or None)
    judge = _judge(args, cfg)
    if isinstance(judge, EndpointJudge):
        judge.templates = templates
    return StageEnv(cfg, judge, RowContext(out_dir), ArtifactStore(out_dir / "artifacts", out_dir), templates)


def _load_rows(path: Path, out_dir: Path) -> list[dict]:
    return [rebase(r, path.parent, out_dir) for r in read_manifest(path)]


def _quarantine_path(out: Path) -> Path:
    return out.with_name(out.stem + ".quarantine.jsonl")


def _curation(args, cfg) -> int:
    out_dir = args.out.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = _load_rows(args.manifest, out_dir)
    env = _env(args, cfg, args.manifest.parent, out_dir)
    stage = {"gen-instructions": gen_instructions, "filter": filter_pairs, "mine-regions": mine_regions_stage,
             "make-masks": make_masks, "overlay": overlay}[args.cmd]
    res = stage(rows, env)
    write_jsonl(args.out, res.rows)
    write_jsonl(_quarantine_path(args.out), res.quarantined)
    if args.cmd == "filter":
        args.rejected.parent.mkdir(parents=True, exist_ok=True)
        write_jsonl(args.rejected, [rebase(r, out_dir, args.rejected.parent) for r in res.rejected])
    print(json.dumps({"stage": args.cmd, "out": len(res.rows), "rejected": len(res.rejected),
                      "quarantined": len(res.quarantined)}, sort_keys=True))
    return EXIT_ALL_FAILED if res.total_failure else EXIT_OK


def _reward(args, cfg) -> int:
    if args.stage:
        cfg.values["reward.stage"] = args.stage
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = {str(r["id"]): r for r in _load_rows(args.manifest, out_dir)}
    rollouts = [rebase(r, args.rollouts.parent, out_dir) for r in read_jsonl(args.rollouts)]
    env = _env(args, cfg, args.manifest.parent, out_dir)
    records, advantages, quarantine = compute_rewards(rollouts, samples, env)
    write_jsonl(out_dir / "rewards.jsonl", [json.loads(r.to_json()) for r in records])
    (out_dir / "advantages.json").write_text(json.dumps(advantages, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_jsonl(out_dir / "rewards.quarantine.jsonl", quarantine)
    print(json.dumps({"records": len(records), "groups": len(advantages), "quarantined": len(quarantine)}))
    return EXIT_ALL_FAILED if rollouts and not records else EXIT_OK


def _evaluate(args, cfg) -> int:
    out_dir = args.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = [rebase(r, args.manifest.parent, out_dir) for r in read_jsonl(args.manifest)]
    if args.output_key != "output_path":
        rows = [{**r, "output_path": r.get(args.output_key)} for r in rows]
    env = _env(args, cfg, args.manifest.parent, out_dir)
    report = evaluate(rows, args.mode, env).to_dict()
    write_eval_report(report, out_dir)
    print(json.dumps(report["summary"], sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = PipelineConfig.load(args.config, seed=args.seed, workers=args.workers,
                                  mock__mode=args.mock_mode)
    except (ConfigError, OSError) as exc:
        print(f"gvcot: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.cmd == "sandbox":
        args.seed = cfg.seed
        return sandbox_cli.run(args)
    try:
        if args.cmd in ("gen-instructions", "filter", "mine-regions", "make-masks", "overlay"):
            return _curation(args, cfg)
        if args.cmd == "reward":
            return _reward(args, cfg)
        if args.cmd == "evaluate":
            return _evaluate(args, cfg)
        if args.cmd == "report":
            for p in render_report(args.input, args.out_dir):
                print(p)
            return EXIT_OK
        if args.cmd == "synth-fixture":
            print(make_fixture(args.out_dir, args.n, cfg.seed, args.size, args.size, args.external_masks))
            return EXIT_OK
        if args.cmd == "synth-rollouts":
            rows = read_manifest(args.manifest)
            print(make_rollouts(rows, RowContext(args.manifest.parent), args.out_dir,
                                cfg["reward.group_size"], cfg.seed, cfg.overlay()))
            return EXIT_OK
    except OSError as exc:
        print(f"gvcot: cannot read or write: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GvcotError, ValueError) as exc:
        print(f"gvcot: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    raise AssertionError(args.cmd)


if __name__ == "__main__":
    sys.exit(main())
