"""Training loops for the toy recipe: two SFT stages, then GRPO refinement."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..core import Rng
from ..errors import LengthMismatch, NonFiniteLoss
from ..rewards import group_advantages
from .flow import fm_loss_and_grad, grpo_surrogate, kl_estimate, sample_ode, sample_sde
from .policy import ToyPolicy
from .toy import (
    BOX_DIM,
    POLICY_COND_DIM,
    TASK_EDIT,
    TASK_MASK,
    TASK_SEQUENTIAL,
    ToyScenes,
    make_scenes,
    policy_condition,
    toy_iou,
)

log = logging.getLogger(__name__)


@dataclass
class GrpoConfig:
    group_size: int = 24
    kl_weight: float = 0.001
    sde_noise: float = 0.1
    steps_per_sample: int = 16
    scenes_per_step: int = 4

    def __post_init__(self):
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")


@dataclass
class TrainConfig:
    peak_lr: float = 3e-3
    min_lr: float = 1e-7
    warmup_steps: int = 100
    total_steps: int = 2000
    ema_decay: float = 0.995
    timestep_shift: float = 2.0
    lambda_m: float = 1.0
    lambda_e: float = 1.0
    betas: tuple[float, float] = (0.9, 0.95)
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    batch_size: int = 64
    grpo: GrpoConfig = field(default_factory=GrpoConfig)

    def __post_init__(self):
        if not 0 < self.min_lr <= self.peak_lr:
            raise ValueError("need 0 < min_lr <= peak_lr")
        if self.timestep_shift < 1:
            raise ValueError("timestep_shift must be >= 1")
        if isinstance(self.grpo, dict):
            self.grpo = GrpoConfig(**self.grpo)
        self.betas = tuple(self.betas)

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear warmup to the peak, cosine decay to the floor, then flat."""
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    decay_steps = cfg.total_steps - cfg.warmup_steps
    if decay_steps <= 0 or step >= cfg.total_steps:
        return cfg.min_lr if step >= cfg.total_steps else cfg.peak_lr
    progress = (step - cfg.warmup_steps) / decay_steps
    return cfg.min_lr + (cfg.peak_lr - cfg.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


def ema_update(ema_params: np.ndarray, params: np.ndarray, decay: float) -> np.ndarray:
    if ema_params.shape != params.shape:
        raise LengthMismatch(f"ema {ema_params.shape} vs params {params.shape}")
    return decay * ema_params + (1.0 - decay) * params


@dataclass
class TrainState:
    """Parameters plus AdamW moments and the EMA copy."""

    params: np.ndarray
    ema: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def fresh(cls, params: np.ndarray) -> "TrainState":
        params = np.array(params, dtype=np.float64, copy=True)
        return cls(params, params.copy(), np.zeros_like(params), np.zeros_like(params))

    def copy(self) -> "TrainState":
        return TrainState(self.params.copy(), self.ema.copy(), self.m.copy(), self.v.copy(), self.step)


def adam_step(state: TrainState, grad: np.ndarray, cfg: TrainConfig, ema_decay: Optional[float] = None) -> float:
    if not np.all(np.isfinite(grad)):
        raise NonFiniteLoss("non-finite gradient")
    lr = lr_at(state.step, cfg)
    b1, b2 = cfg.betas
    state.step += 1
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1 ** state.step)
    v_hat = state.v / (1 - b2 ** state.step)
    update = m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    if cfg.weight_decay:
        update = update + cfg.weight_decay * state.params
    state.params = state.params - lr * update
    if not np.all(np.isfinite(state.params)):
        raise NonFiniteLoss("parameters became non-finite")
    decay = cfg.ema_decay if ema_decay is None else ema_decay
    state.ema = ema_update(state.ema, state.params, decay)
    return lr


def new_policy(seed: int = 0, hidden=(64, 64)) -> ToyPolicy:
    return ToyPolicy(BOX_DIM, POLICY_COND_DIM, hidden, seed=seed)


def stage1_losses(p: ToyPolicy, params, masking: ToyScenes, editing: ToyScenes, cfg: TrainConfig, rng: Rng):
    l_m, g_m = fm_loss_and_grad(p, masking.x_cot_star, policy_condition(masking.with_task(TASK_MASK)),
                                rng.split("mask"), cfg.timestep_shift, params)
    l_e, g_e = fm_loss_and_grad(p, editing.x_edit_star, policy_condition(editing.with_task(TASK_EDIT)),
                                rng.split("edit"), cfg.timestep_shift, params)
    total = cfg.lambda_m * l_m + cfg.lambda_e * l_e
    grad = cfg.lambda_m * g_m + cfg.lambda_e * g_e
    return total, grad, {"loss_mask": l_m, "loss_edit": l_e}


def sft_stage1_step(p: ToyPolicy, state: TrainState, masking: ToyScenes, editing: ToyScenes, cfg: TrainConfig,
                    rng: Rng) -> dict:
    """Multi-task step: lambda_m * L(thought) + lambda_e * L(edit), one AdamW update."""
    if len(masking) == 0 or len(editing) == 0:
        raise ValueError("both batches must be non-empty")
    total, grad, parts = stage1_losses(p, state.params, masking, editing, cfg, rng)
    lr = adam_step(state, grad, cfg)
    p.params = state.params
    return {"loss": total, **parts, "lr": lr}


def sequential_losses(p: ToyPolicy, params, batch: ToyScenes, cfg: TrainConfig, rng_cot: Rng, rng_edit: Rng):
    """Thought from the sequential condition, then the edit teacher-forced on the true thought."""
    cond = batch.with_task(TASK_SEQUENTIAL)
    l_c, g_c = fm_loss_and_grad(p, batch.x_cot_star, policy_condition(cond), rng_cot, cfg.timestep_shift, params)
    l_e, g_e = fm_loss_and_grad(p, batch.x_edit_star, policy_condition(cond, batch.x_cot_star), rng_edit,
                                cfg.timestep_shift, params)
    return l_c + l_e, g_c + g_e, {"loss_cot": l_c, "loss_edit": l_e}


def sft_stage2_step(p: ToyPolicy, state: TrainState, batch: ToyScenes, cfg: TrainConfig, rng: Rng) -> dict:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    total, grad, parts = sequential_losses(p, state.params, batch, cfg, rng.split("cot"), rng.split("edit"))
    lr = adam_step(state, grad, cfg)
    p.params = state.params
    return {"loss": total, **parts, "lr": lr}


def rollout_rewards(p: ToyPolicy, scenes: ToyScenes, cfg: TrainConfig, rng: Rng, params=None,
                    group_size: Optional[int] = None, noise_scale: Optional[float] = None, shift: float = 3.0):
    """Draw ``group_size`` thought rollouts per scene; reward is IoU with the true box."""
    g = group_size or cfg.grpo.group_size
    idx = np.repeat(np.arange(len(scenes)), g)
    rep = scenes.subset(idx)
    cond = policy_condition(rep.with_task(TASK_SEQUENTIAL))
    sigma = cfg.grpo.sde_noise if noise_scale is None else noise_scale
    traj = sample_sde(p, cond, cfg.grpo.steps_per_sample, sigma, rng, shift=shift, params=params)
    rewards = toy_iou(traj.terminal, rep.x_cot_star)
    return traj, cond, rewards


def grpo_step(p: ToyPolicy, p_ref: ToyPolicy, state: TrainState, scenes: ToyScenes,
              reward_fn: Optional[Callable] = None, cfg: TrainConfig = None, rng: Rng = None,
              shift: float = 3.0) -> dict:
    """One GRPO update over ``scenes`` with group-normalised advantages."""
    cfg = cfg or TrainConfig()
    g = cfg.grpo.group_size
    traj, cond, rewards = rollout_rewards(p, scenes, cfg, rng.split("rollout"), state.params, shift=shift)
    if reward_fn is not None:
        rewards = np.asarray(reward_fn(traj.terminal, np.repeat(np.arange(len(scenes)), g)), dtype=np.float64)
    adv = np.concatenate([group_advantages(rewards[i * g:(i + 1) * g]) for i in range(len(scenes))])
    loss, grad, parts = grpo_surrogate(p, p_ref, traj, cond, adv, cfg.grpo.kl_weight, state.params)
    lr = adam_step(state, grad, cfg, ema_decay=0.0)
    p.params = state.params
    return {"loss": loss, "pg_loss": parts["pg_loss"], "kl": parts["kl"], "mean_reward": float(rewards.mean()),
            "lr": lr}


def heldout_sequential_loss(p: ToyPolicy, params, scenes: ToyScenes, cfg: TrainConfig, seed: int) -> float:
    rng = Rng(seed)
    total, _, _ = sequential_losses(p, params, scenes, cfg, rng.split("cot"), rng.split("edit"))
    return total


def heldout_stage1_loss(p: ToyPolicy, params, scenes: ToyScenes, cfg: TrainConfig, seed: int) -> float:
    total, _, _ = stage1_losses(p, params, scenes, scenes, cfg, Rng(seed))
    return total


def mean_rollout_reward(p: ToyPolicy, params, scenes: ToyScenes, cfg: TrainConfig, seed: int,
                        shift: float = 3.0) -> float:
    _, _, rewards = rollout_rewards(p, scenes, cfg, Rng(seed), params, shift=shift)
    return float(rewards.mean())


@dataclass
class RunResult:
    state: TrainState
    metrics: list[dict]
    summary: dict


def train_sft(stage: int, cfg: TrainConfig, seed: int = 0, steps: Optional[int] = None,
              init: Optional[TrainState] = None, metrics_path: Optional[Path] = None,
              eval_every: int = 100) -> RunResult:
    """Run SFT stage 1 or 2 on freshly sampled toy scenes each step."""
    steps = cfg.total_steps if steps is None else steps
    root = Rng(seed)
    p = new_policy(seed)
    state = init.copy() if init is not None else TrainState.fresh(p.params)
    state.step = 0
    state.m[:] = 0
    state.v[:] = 0
    p.params = state.params
    heldout = make_scenes(256, root.split("heldout"))
    evaluate = heldout_stage1_loss if stage == 1 else heldout_sequential_loss
    initial = evaluate(p, state.params, heldout, cfg, seed + 1)
    metrics = []
    for i in range(steps):
        step_rng = root.split("step", i)
        if stage == 1:
            rec = sft_stage1_step(p, state, make_scenes(cfg.batch_size, step_rng.split("mask_batch")),
                                  make_scenes(cfg.batch_size, step_rng.split("edit_batch")), cfg, step_rng)
        else:
            rec = sft_stage2_step(p, state, make_scenes(cfg.batch_size, step_rng.split("batch")), cfg, step_rng)
        rec = {"step": i, **rec}
        if (i + 1) % eval_every == 0 or i + 1 == steps:
            rec["heldout_loss"] = evaluate(p, state.params, heldout, cfg, seed + 1)
        metrics.append(rec)
    final = evaluate(p, state.params, heldout, cfg, seed + 1)
    summary = {"stage": stage, "steps": steps, "seed": seed, "heldout_loss_initial": initial,
               "heldout_loss_final": final, "reduction": 1.0 - final / initial}
    if metrics_path is not None:
        write_metrics(metrics_path, metrics)
    return RunResult(state, metrics, summary)


def train_grpo(init: TrainState, cfg: TrainConfig, seed: int = 0, steps: int = 300, shift: float = 3.0,
               metrics_path: Optional[Path] = None, eval_scenes: int = 64) -> RunResult:
    """GRPO refinement from ``init``; the reference policy is frozen at the start."""
    root = Rng(seed)
    p = new_policy(seed)
    p.params = init.params.copy()
    p_ref = p.copy()
    state = TrainState.fresh(init.params)
    heldout = make_scenes(eval_scenes, root.split("heldout"))
    before = mean_rollout_reward(p, state.params, heldout, cfg, seed + 1, shift)
    metrics = []
    for i in range(steps):
        step_rng = root.split("step", i)
        scenes = make_scenes(cfg.grpo.scenes_per_step, step_rng.split("scenes"))
        rec = grpo_step(p, p_ref, state, scenes, None, cfg, step_rng, shift)
        metrics.append({"step": i, **rec})
    after = mean_rollout_reward(p, state.params, heldout, cfg, seed + 1, shift)
    probe = rollout_rewards(p, heldout.subset(slice(0, 8)), cfg, Rng(seed + 2), state.params, shift=shift)
    summary = {"steps": steps, "seed": seed, "mean_reward_before": before, "mean_reward_after": after,
               "relative_gain": after / before - 1.0 if before > 0 else float("inf"),
               "kl_to_ref": kl_estimate(p, p_ref, probe[0], probe[1], state.params),
               "kl_self": kl_estimate(p, p, probe[0], probe[1], state.params)}
    if metrics_path is not None:
        write_metrics(metrics_path, metrics)
    return RunResult(state, metrics, summary)


def ode_terminal(p: ToyPolicy, params, scenes: ToyScenes, steps: int, seed: int, shift: float = 3.0) -> np.ndarray:
    cond = policy_condition(scenes.with_task(TASK_SEQUENTIAL))
    x0 = Rng(seed).normal((len(scenes), p.state_dim))
    return sample_ode(p, cond, steps, x0, shift, params)


def write_metrics(path: Path, metrics: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in metrics:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def save_checkpoint(path: Path, state: TrainState, seed: int, stage: str, hidden=(64, 64)) -> None:
    """Flat float64 arrays plus a small JSON header (dims, seed, step)."""
    header = {"state_dim": BOX_DIM, "cond_dim": POLICY_COND_DIM, "hidden": list(hidden), "seed": seed,
              "step": state.step, "stage": stage, "n_params": int(state.params.size)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        np.savez(fh, header=np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
                 params=state.params, ema=state.ema)


def load_checkpoint(path: Path) -> tuple[TrainState, dict]:
    with np.load(path) as z:
        header = json.loads(bytes(z["header"]).decode())
        state = TrainState.fresh(z["params"])
        state.ema = z["ema"].copy()
    state.step = header["step"]
    return state, header


def grpo_train_config(**overrides) -> TrainConfig:
    """Defaults for the RL phase: short warmup, cosine over 300 steps, timestep shift 3."""
    base = dict(peak_lr=1e-3, warmup_steps=10, total_steps=300, timestep_shift=3.0)
    base.update(overrides)
    return TrainConfig(**base)
