"""Vector-space toy reproduction of the two-stage SFT + GRPO recipe."""

from .flow import (Trajectory, fm_loss_and_grad, grpo_surrogate, kl_estimate, sample_ode, sample_sde, shift_time,
                   time_grid, transition_logprob)
from .policy import ToyPolicy
from .toy import ToyScenes, make_scenes, policy_condition, toy_iou
from .train import (GrpoConfig, TrainConfig, TrainState, ema_update, grpo_step, grpo_train_config, lr_at,
                    sft_stage1_step, sft_stage2_step, train_grpo, train_sft)

__all__ = [
    "Trajectory", "fm_loss_and_grad", "grpo_surrogate", "kl_estimate", "sample_ode", "sample_sde", "shift_time",
    "time_grid", "transition_logprob", "ToyPolicy", "ToyScenes", "make_scenes", "policy_condition", "toy_iou",
    "GrpoConfig", "TrainConfig", "TrainState", "ema_update", "grpo_step", "grpo_train_config", "lr_at",
    "sft_stage1_step", "sft_stage2_step", "train_grpo", "train_sft",
]
