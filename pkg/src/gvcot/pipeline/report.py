"""Report files: JSON + CSV tables and matplotlib figures."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import read_jsonl  # noqa: E402

_SAVE = {"format": "png", "dpi": 100, "metadata": {"Software": None}}


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


KEY_COLUMNS = ("scope", "id", "sample_id", "opponent", "rollout", "step")


def write_csv(path: Path, rows: list[dict], columns: Optional[list[str]] = None) -> None:
    """Scalar fields only; key columns first, the rest alphabetically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is None:
        present = {k for r in rows for k in r if not isinstance(r[k], (list, dict))}
        columns = [k for k in KEY_COLUMNS if k in present] + sorted(present.difference(KEY_COLUMNS))
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_json(path: Path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def write_eval_report(report: dict, out_dir: Path) -> list[Path]:
    """``report.json`` plus ``samples.csv`` and ``categories.csv``."""
    out_dir = Path(out_dir)
    write_json(out_dir / "report.json", report)
    write_csv(out_dir / "samples.csv", report["samples"])
    cats = [{"category": k, **v} for k, v in report.get("per_category", {}).items()]
    if cats:
        write_csv(out_dir / "categories.csv", cats)
    return [out_dir / "report.json", out_dir / "samples.csv"]


def _numeric(rows: Iterable[dict], key: str) -> list[float]:
    return [float(r[key]) for r in rows if isinstance(r.get(key), (int, float)) and math.isfinite(r[key])]


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def plot_eval(report: dict, out_dir: Path) -> list[Path]:
    mode, out = report["mode"], []
    if mode == "gsb":
        opps = sorted(report["summary"])
        fig, ax = plt.subplots(figsize=(6, 0.6 * len(opps) + 1.5))
        left = [0.0] * len(opps)
        for key, color in (("good_pct", "tab:green"), ("same_pct", "tab:gray"), ("bad_pct", "tab:red")):
            vals = [report["summary"][o][key] for o in opps]
            ax.barh(opps, vals, left=left, color=color, label=key.split("_")[0])
            left = [a + b for a, b in zip(left, vals)]
        ax.set_xlim(0, 100)
        ax.set_xlabel("% of votes")
        ax.legend(loc="lower right")
        out.append(_save(fig, Path(out_dir) / "gsb.png"))
        return out
    keys = {"judge": ("SC", "PQ", "O"), "pixel": ("L1", "PSNR", "SSIM"),
            "embedding": ("CLIP_dir", "CLIP_im", "CLIP_out", "DINO")}[mode]
    keys = [k for k in keys if _numeric(report["samples"], k)]
    fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3), squeeze=False)
    for ax, k in zip(axes[0], keys):
        ax.hist(_numeric(report["samples"], k), bins=20, color="tab:blue")
        ax.set_title(k)
    fig.tight_layout()
    out.append(_save(fig, Path(out_dir) / f"{mode}_hist.png"))
    cats = report.get("per_category") or {}
    if cats and keys:
        names = sorted(cats)
        fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 3.5))
        width = 0.8 / len(keys)
        for j, k in enumerate(keys):
            vals = [cats[c].get(k) or 0.0 for c in names]
            ax.bar([i + j * width for i in range(len(names))], vals, width=width, label=k)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(names))])
        ax.set_xticklabels(names, rotation=30, ha="right", fontsize=7)
        ax.legend()
        fig.tight_layout()
        out.append(_save(fig, Path(out_dir) / f"{mode}_categories.png"))
    return out


def plot_rewards(records: list[dict], out_dir: Path) -> list[Path]:
    fig, axes = plt.subplots(1, 3, figsize=(10, 3))
    for ax, k in zip(axes, ("r1", "r2", "advantage")):
        ax.hist(_numeric(records, k), bins=24, color="tab:purple")
        ax.set_title(k)
    fig.tight_layout()
    return [_save(fig, Path(out_dir) / "rewards_hist.png")]


def plot_training(metrics: list[dict], out_dir: Path) -> list[Path]:
    keys = [k for k in ("loss", "loss_mask", "loss_edit", "loss_cot", "mean_reward", "kl", "lr")
            if any(k in m for m in metrics)]
    fig, axes = plt.subplots(len(keys), 1, figsize=(6, 1.8 * len(keys)), sharex=True, squeeze=False)
    steps = [m["step"] for m in metrics]
    for ax, k in zip(axes[:, 0], keys):
        ax.plot(steps, [m.get(k, float("nan")) for m in metrics], lw=0.8)
        ax.set_ylabel(k)
    axes[-1, 0].set_xlabel("step")
    fig.tight_layout()
    return [_save(fig, Path(out_dir) / "training_curves.png")]


def render_report(input_path: Path, out_dir: Path) -> list[Path]:
    """Render figures (and a flat CSV) for an evaluation report, reward audit log or training log."""
    input_path, out_dir = Path(input_path), Path(out_dir)
    if input_path.suffix == ".json":
        report = json.loads(input_path.read_text(encoding="utf-8"))
        written = plot_eval(report, out_dir)
        write_csv(out_dir / f"{report['mode']}_summary.csv",
                  [{"scope": "all", **_flat(report["summary"])}]
                  + [{"scope": k, **_flat(v)} for k, v in sorted(report.get("per_category", {}).items())])
        return written + [out_dir / f"{report['mode']}_summary.csv"]
    rows = read_jsonl(input_path)
    if rows and "advantage" in rows[0]:
        write_csv(out_dir / "rewards.csv", rows)
        return plot_rewards(rows, out_dir) + [out_dir / "rewards.csv"]
    if rows and "step" in rows[0]:
        write_csv(out_dir / "training.csv", rows)
        return plot_training(rows, out_dir) + [out_dir / "training.csv"]
    raise ValueError(f"{input_path}: not an evaluation report, reward log or training log")


def _flat(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update({f"{k}.{kk}": vv for kk, vv in v.items()})
        else:
            out[k] = v
    return out
