"""Full mock-judge pipeline run through the CLI entry point, in process."""

from __future__ import annotations

import contextlib
import hashlib
import io
from pathlib import Path

from gvcot.pipeline.cli import main


def gvcot(*argv) -> int:
    with contextlib.redirect_stdout(io.StringIO()):
        return main([str(a) for a in argv])


def run_pipeline(root: Path, seed: int = 7, n: int = 50, workers: int = 4) -> Path:
    root = Path(root)
    fx, run, ro = root / "fx", root / "run", root / "ro"
    g = ("--seed", seed, "--workers", workers, "--mock-judge")
    steps = [
        ("--seed", seed, "synth-fixture", "--out-dir", fx, "--n", n, "--external-masks", 3),
        (*g, "gen-instructions", fx / "manifest.jsonl", "--out", run / "gen.jsonl"),
        (*g, "filter", run / "gen.jsonl", "--out", run / "kept.jsonl", "--rejected", run / "rejected.jsonl"),
        (*g, "mine-regions", run / "kept.jsonl", "--out", run / "mined.jsonl"),
        (*g, "make-masks", run / "mined.jsonl", "--out", run / "masks.jsonl"),
        (*g, "overlay", run / "masks.jsonl", "--out", run / "cot.jsonl"),
        ("--seed", seed, "synth-rollouts", run / "cot.jsonl", "--out-dir", ro),
        (*g, "reward", "--manifest", run / "cot.jsonl", "--rollouts", ro / "rollouts.jsonl", "--out-dir", run / "rw"),
        (*g, "evaluate", run / "cot.jsonl", "--mode", "judge", "--output-key", "target_path",
         "--out-dir", run / "ev"),
        (*g, "evaluate", run / "cot.jsonl", "--mode", "pixel", "--output-key", "target_path",
         "--out-dir", run / "px"),
        ("report", run / "ev" / "report.json", "--out-dir", run / "fig"),
        ("report", run / "rw" / "rewards.jsonl", "--out-dir", run / "rwfig"),
    ]
    for argv in steps:
        code = gvcot(*argv)
        if code != 0:
            raise RuntimeError(f"gvcot {' '.join(map(str, argv))} exited {code}")
    return root


def tree_digest(root: Path) -> dict[str, str]:
    """sha256 of every file under ``root``, keyed by relative path."""
    root = Path(root)
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}
