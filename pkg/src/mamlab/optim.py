"""AdamW with decoupled weight decay, plus the warmup/cosine LR schedule."""

from __future__ import annotations

import math

import numpy as np

from .errors import ContractError
from .tensor import Tensor


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def ensure(self, name: str, shape: tuple[int, ...]) -> None:
        if name not in self.m:
            self.m[name] = np.zeros(shape, dtype=np.float64)
            self.v[name] = np.zeros(shape, dtype=np.float64)


def adamw_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
               state: AdamState, lr: float, betas: tuple[float, float] = (0.9, 0.95),
               eps: float = 1e-8, weight_decay: float = 0.01) -> None:
    """One AdamW update, in place, over params sorted by name.

    ``grads`` must hold an array per parameter; a missing entry is a contract
    violation naming the parameter.
    """
    b1, b2 = betas
    state.step += 1
    t = state.step
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            raise ContractError(f"no gradient supplied for parameter '{name}'")
        if g.shape != p.shape:
            raise ContractError(
                f"gradient shape {g.shape} does not match parameter '{name}' shape {p.shape}")
        state.ensure(name, p.shape)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p.data -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p.data)


def cosine_warmup_lr(step: int, total_steps: int, base_lr: float,
                     warmup_frac: float = 0.05) -> float:
    """LR at ``step`` (0-based): linear warmup, then cosine decay to zero."""
    warmup = max(1, int(round(warmup_frac * total_steps)))
    if step < warmup:
        return base_lr * (step + 1) / warmup
    if total_steps <= warmup:
        return base_lr
    progress = (step - warmup) / (total_steps - warmup)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Convenience wrapper binding a parameter dict to adamw_step."""

    def __init__(self, params: dict[str, Tensor], lr: float = 2e-4,
                 betas: tuple[float, float] = (0.9, 0.95), eps: float = 1e-8,
                 weight_decay: float = 0.01):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamState()

    def step(self, lr: float | None = None) -> None:
        grads = {}
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"no gradient supplied for parameter '{name}'")
            grads[name] = p.grad
        adamw_step(self.params, grads, self.state,
                   self.lr if lr is None else lr,
                   betas=self.betas, eps=self.eps, weight_decay=self.weight_decay)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None
