"""Manifest-driven curation, reward and evaluation pipeline."""

from .config import DEFAULTS, ConfigError, PipelineConfig, parse_config_text
from .stages import (EVAL_MODES, StageEnv, StageResult, compute_rewards, evaluate, filter_pairs, gen_instructions,
                     is_insertion, make_masks, mine_regions_stage, overlay, run_stage)

__all__ = [
    "DEFAULTS", "ConfigError", "PipelineConfig", "parse_config_text", "EVAL_MODES", "StageEnv", "StageResult",
    "compute_rewards", "evaluate", "filter_pairs", "gen_instructions", "is_insertion", "make_masks",
    "mine_regions_stage", "overlay", "run_stage",
]
