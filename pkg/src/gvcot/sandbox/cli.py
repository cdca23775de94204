"""``sandbox`` subcommands: train-sft, train-grpo, eval."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ..core import Rng
from .toy import make_scenes
from .train import (TrainConfig, grpo_train_config, heldout_sequential_loss, load_checkpoint, mean_rollout_reward,
                    new_policy, save_checkpoint, train_grpo, train_sft)


def add_parser(sub) -> argparse.ArgumentParser:
    p = sub.add_parser("sandbox", help="toy flow-matching SFT/GRPO sandbox")
    ss = p.add_subparsers(dest="sandbox_cmd", required=True)

    sft = ss.add_parser("train-sft", help="supervised stage 1 (multi-task) or 2 (sequential)")
    sft.add_argument("--stage", type=int, choices=(1, 2), required=True)
    sft.add_argument("--steps", type=int, default=2000)
    sft.add_argument("--lr", type=float, default=None, help="peak learning rate")
    sft.add_argument("--init", type=Path, help="checkpoint to start from")
    sft.add_argument("--out", type=Path, required=True, help="output directory")

    rl = ss.add_parser("train-grpo", help="GRPO refinement of an SFT checkpoint")
    rl.add_argument("--init", type=Path, required=True)
    rl.add_argument("--steps", type=int, default=300)
    rl.add_argument("--lr", type=float, default=None)
    rl.add_argument("--group-size", type=int, default=24)
    rl.add_argument("--kl-weight", type=float, default=0.001)
    rl.add_argument("--out", type=Path, required=True)

    ev = ss.add_parser("eval", help="held-out sequential loss and mean rollout IoU of a checkpoint")
    ev.add_argument("--ckpt", type=Path, required=True)
    ev.add_argument("--scenes", type=int, default=64)
    return p


def _dump(path: Path, obj: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run(args) -> int:
    seed = args.seed
    if args.sandbox_cmd == "train-sft":
        cfg = TrainConfig(total_steps=args.steps) if args.lr is None else TrainConfig(peak_lr=args.lr,
                                                                                      total_steps=args.steps)
        init = load_checkpoint(args.init)[0] if args.init else None
        res = train_sft(args.stage, cfg, seed=seed, steps=args.steps, init=init,
                        metrics_path=args.out / "metrics.jsonl")
        save_checkpoint(args.out / "checkpoint.npz", res.state, seed, f"sft{args.stage}")
        _dump(args.out / "summary.json", res.summary)
        print(json.dumps(res.summary, sort_keys=True))
        return 0
    if args.sandbox_cmd == "train-grpo":
        init, _ = load_checkpoint(args.init)
        over = {"total_steps": args.steps, "grpo": {"group_size": args.group_size, "kl_weight": args.kl_weight}}
        if args.lr is not None:
            over["peak_lr"] = args.lr
        cfg = grpo_train_config(**over)
        res = train_grpo(init, cfg, seed=seed, steps=args.steps, shift=cfg.timestep_shift,
                         metrics_path=args.out / "metrics.jsonl")
        save_checkpoint(args.out / "checkpoint.npz", res.state, seed, "grpo")
        _dump(args.out / "summary.json", res.summary)
        print(json.dumps(res.summary, sort_keys=True))
        return 0
    if args.sandbox_cmd == "eval":
        state, header = load_checkpoint(args.ckpt)
        p = new_policy(header["seed"], tuple(header["hidden"]))
        scenes = make_scenes(args.scenes, Rng(seed).split("eval"))
        sft_cfg, rl_cfg = TrainConfig(), grpo_train_config()
        out = {"checkpoint": str(args.ckpt), "stage": header["stage"], "step": header["step"],
               "heldout_sequential_loss": heldout_sequential_loss(p, state.params, scenes, sft_cfg, seed),
               "mean_reward": mean_rollout_reward(p, state.params, scenes, rl_cfg, seed, rl_cfg.timestep_shift)}
        print(json.dumps(out, sort_keys=True))
        return 0
    raise SystemExit(f"unknown sandbox command {args.sandbox_cmd}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="gvcot-sandbox")
    ap.add_argument("--seed", type=int, default=0)
    sub = ap.add_subparsers(dest="cmd", required=True)
    add_parser(sub)
    return run(ap.parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
