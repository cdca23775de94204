"""Small tanh MLP velocity field with hand-written backpropagation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


def time_features(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    return np.concatenate([t, np.sin(2 * math.pi * t), np.cos(2 * math.pi * t)], axis=1)


@dataclass
class _Cache:
    inp: np.ndarray
    h1: np.ndarray
    h2: np.ndarray


class ToyPolicy:
    """v(x, t, cond): input is concat(state, (t, sin 2πt, cos 2πt), cond).

    Parameters live in one flat float64 array; ``unpack`` returns views into it.
    """

    def __init__(self, state_dim: int, cond_dim: int, hidden=(64, 64), params: Optional[np.ndarray] = None,
                 seed: int = 0):
        self.state_dim = state_dim
        self.cond_dim = cond_dim
        self.hidden = tuple(hidden)
        self.in_dim = state_dim + 3 + cond_dim
        h1, h2 = self.hidden
        self.shapes = [(self.in_dim, h1), (h1,), (h1, h2), (h2,), (h2, state_dim), (state_dim,)]
        self.n_params = sum(int(np.prod(s)) for s in self.shapes)
        if params is None:
            params = self.init_params(seed)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {params.shape}")
        self.params = params.copy()

    def init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        chunks = []
        for shape in self.shapes:
            if len(shape) == 2:
                chunks.append(rng.standard_normal(shape).ravel() * math.sqrt(1.0 / shape[0]))
            else:
                chunks.append(np.zeros(shape))
        return np.concatenate(chunks)

    def unpack(self, params: np.ndarray) -> list[np.ndarray]:
        out, i = [], 0
        for shape in self.shapes:
            n = int(np.prod(shape))
            out.append(params[i:i + n].reshape(shape))
            i += n
        return out

    def copy(self, params: Optional[np.ndarray] = None) -> "ToyPolicy":
        return ToyPolicy(self.state_dim, self.cond_dim, self.hidden,
                         self.params if params is None else params)

    def _inputs(self, x, t, cond) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n = x.shape[0]
        t = np.broadcast_to(np.asarray(t, dtype=np.float64).reshape(-1), (n,))
        cond = np.broadcast_to(np.atleast_2d(np.asarray(cond, dtype=np.float64)), (n, self.cond_dim))
        return np.concatenate([x, time_features(t), cond], axis=1)

    def forward(self, x, t, cond, params: Optional[np.ndarray] = None) -> tuple[np.ndarray, _Cache]:
        W1, b1, W2, b2, W3, b3 = self.unpack(self.params if params is None else params)
        inp = self._inputs(x, t, cond)
        h1 = np.tanh(inp @ W1 + b1)
        h2 = np.tanh(h1 @ W2 + b2)
        return h2 @ W3 + b3, _Cache(inp, h1, h2)

    def velocity(self, x, t, cond, params: Optional[np.ndarray] = None) -> np.ndarray:
        return self.forward(x, t, cond, params)[0]

    def backward(self, cache: _Cache, grad_v: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Gradient of sum(grad_v * v) with respect to the flat parameters."""
        _, _, W2, _, W3, _ = self.unpack(self.params if params is None else params)
        g_W3 = cache.h2.T @ grad_v
        g_b3 = grad_v.sum(axis=0)
        d2 = (grad_v @ W3.T) * (1.0 - cache.h2 ** 2)
        g_W2 = cache.h1.T @ d2
        g_b2 = d2.sum(axis=0)
        d1 = (d2 @ W2.T) * (1.0 - cache.h1 ** 2)
        g_W1 = cache.inp.T @ d1
        g_b1 = d1.sum(axis=0)
        return np.concatenate([g.ravel() for g in (g_W1, g_b1, g_W2, g_b2, g_W3, g_b3)])
