"""Rectified-flow loss, samplers and the GRPO surrogate for the toy policy.

Time runs from noise at t=0 to data at t=1: x_t = (1 - t) x0 + t x1 and the
velocity target is x1 - x0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Rng
from ..errors import NonFiniteLoss, NonFiniteState
from .policy import ToyPolicy


def shift_time(t, s: float):
    """Monotone remap s t / (1 + (s - 1) t) with fixed endpoints."""
    t = np.asarray(t, dtype=np.float64)
    out = s * t / (1.0 + (s - 1.0) * t)
    return float(out) if out.ndim == 0 else out


def time_grid(steps: int, shift: float) -> np.ndarray:
    return shift_time(np.linspace(0.0, 1.0, steps + 1), shift)


def fm_loss_and_grad(p: ToyPolicy, x1: np.ndarray, cond: np.ndarray, rng: Rng, shift: float = 1.0,
                     params: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
    """Flow-matching loss mean ||v(x_t, t) - (x1 - x0)||^2 and its exact gradient.

    ``x0`` is drawn first from ``rng``, then the raw times.
    """
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    n = x1.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    x0 = rng.normal(x1.shape)
    t = shift_time(rng.uniform(size=n), shift)
    xt = (1.0 - t)[:, None] * x0 + t[:, None] * x1
    v, cache = p.forward(xt, t, cond, params)
    resid = v - (x1 - x0)
    loss = float(np.sum(resid * resid) / n)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"flow-matching loss is {loss}")
    grad = p.backward(cache, 2.0 * resid / n, params)
    return loss, grad


def sample_ode(p: ToyPolicy, cond: np.ndarray, steps: int, x0: np.ndarray, shift: float = 1.0,
               params: Optional[np.ndarray] = None) -> np.ndarray:
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64)).copy()
    grid = time_grid(steps, shift)
    for k in range(steps):
        dt = grid[k + 1] - grid[k]
        x = x + p.velocity(x, grid[k], cond, params) * dt
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at step {k}")
    return x


@dataclass
class Trajectory:
    """Euler-Maruyama rollout log. ``states`` has steps + 1 entries."""

    states: list[np.ndarray]
    times: np.ndarray
    noises: list[np.ndarray]
    noise_scale: float

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.noises)


def sample_sde(p: ToyPolicy, cond: np.ndarray, steps: int, noise_scale: float, rng: Rng, shift: float = 1.0,
               x0: Optional[np.ndarray] = None, n: Optional[int] = None,
               params: Optional[np.ndarray] = None) -> Trajectory:
    """x_{k+1} = x_k + v dt + noise_scale sqrt(dt) xi_k.

    Without ``x0`` the start state is drawn from ``rng`` before any step noise.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    if x0 is None:
        rows = n if n is not None else np.atleast_2d(cond).shape[0]
        x0 = rng.normal((rows, p.state_dim))
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64)).copy()
    grid = time_grid(steps, shift)
    states, noises = [x], []
    for k in range(steps):
        dt = grid[k + 1] - grid[k]
        xi = rng.normal(x.shape)
        x = x + p.velocity(x, grid[k], cond, params) * dt + noise_scale * np.sqrt(dt) * xi
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite state at step {k}")
        states.append(x)
        noises.append(xi)
    return Trajectory(states, grid, noises, noise_scale)


def transition_logprob(p: ToyPolicy, traj: Trajectory, cond: np.ndarray,
                       params: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-rollout sum over steps of the Gaussian transition log-density."""
    sigma = traj.noise_scale
    total = np.zeros(traj.states[0].shape[0])
    d = traj.states[0].shape[1]
    for k in range(len(traj)):
        dt = traj.times[k + 1] - traj.times[k]
        var = sigma * sigma * dt
        mean = traj.states[k] + p.velocity(traj.states[k], traj.times[k], cond, params) * dt
        r = traj.states[k + 1] - mean
        total += -0.5 * np.sum(r * r, axis=1) / var - 0.5 * d * np.log(2 * np.pi * var)
    return total


def kl_estimate(p: ToyPolicy, p_ref: ToyPolicy, traj: Trajectory, cond: np.ndarray,
                params: Optional[np.ndarray] = None) -> float:
    """Mean over logged transitions of KL(N(mu_p, s^2 dt) || N(mu_ref, s^2 dt))."""
    sigma = traj.noise_scale
    vals = []
    for k in range(len(traj)):
        dt = traj.times[k + 1] - traj.times[k]
        dv = p.velocity(traj.states[k], traj.times[k], cond, params) - p_ref.velocity(traj.states[k], traj.times[k], cond)
        vals.append(dt * np.sum(dv * dv, axis=1) / (2 * sigma * sigma))
    return float(np.mean(vals))


def grpo_surrogate(p: ToyPolicy, p_ref: ToyPolicy, traj: Trajectory, cond: np.ndarray, advantages: np.ndarray,
                   kl_weight: float, params: Optional[np.ndarray] = None) -> tuple[float, np.ndarray, dict]:
    """-mean_i(A_i sum_k log pi(x_{k+1} | x_k)) + kl_weight * KL_hat, with its gradient."""
    if traj.noise_scale <= 0:
        raise ValueError("policy-gradient surrogate needs noise_scale > 0")
    sigma2 = traj.noise_scale ** 2
    adv = np.asarray(advantages, dtype=np.float64)
    n = adv.shape[0]
    steps = len(traj)
    pg_loss, kl_total = 0.0, 0.0
    grad = np.zeros(p.n_params)
    for k in range(steps):
        x_k = traj.states[k]
        t_k = traj.times[k]
        dt = traj.times[k + 1] - t_k
        v, cache = p.forward(x_k, t_k, cond, params)
        r = traj.states[k + 1] - x_k - v * dt
        logp = -0.5 * np.sum(r * r, axis=1) / (sigma2 * dt)
        pg_loss -= float(np.dot(adv, logp)) / n
        # d logp / dv = r / sigma^2
        g_v = -(adv[:, None] * r / sigma2) / n
        v_ref = p_ref.velocity(x_k, t_k, cond)
        dv = v - v_ref
        kl_total += float(np.sum(dt * np.sum(dv * dv, axis=1) / (2 * sigma2)))
        g_v = g_v + kl_weight * (dt * dv / sigma2) / (n * steps)
        grad += p.backward(cache, g_v, params)
    kl = kl_total / (n * steps)
    loss = pg_loss + kl_weight * kl
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"GRPO surrogate is {loss}")
    return loss, grad, {"pg_loss": pg_loss, "kl": kl}
