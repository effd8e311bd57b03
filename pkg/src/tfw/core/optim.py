"""Optimizers and learning-rate schedules operating on a ParamStore."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfw.core.params import ParamStore
from tfw.errors import ConfigError


@dataclass(frozen=True)
class LrSchedule:
    kind: str = "cyclic"  # "constant" | "cyclic"
    max_lr: float = 0.08
    base_lr: float | None = None  # defaults to max_lr / 10
    cycle_steps: int = 100

    def __post_init__(self):
        if self.kind not in ("constant", "cyclic"):
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.base_lr is None:
            object.__setattr__(self, "base_lr", self.max_lr / 10.0)
        if self.max_lr < 0 or self.base_lr < 0 or self.base_lr > self.max_lr:
            raise ConfigError(f"need 0 <= base_lr <= max_lr, got {self.base_lr}, {self.max_lr}")
        if self.cycle_steps < 1:
            raise ConfigError("cycle_steps must be positive")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Triangular cyclic learning rate: base at cycle start, max mid-cycle."""
    if schedule.kind == "constant":
        return schedule.max_lr
    half = schedule.cycle_steps / 2.0
    pos = step % schedule.cycle_steps
    frac = 1.0 - abs(pos / half - 1.0)
    return schedule.base_lr + (schedule.max_lr - schedule.base_lr) * frac


def sgd_momentum_step(store: ParamStore, lr: float, momentum: float = 0.75, l2: float = 0.0) -> None:
    for p in store:
        g = p.grad + l2 * p.value if (l2 and p.decay) else p.grad
        v = p.state.get("v")
        v = g.copy() if v is None else momentum * v + g
        p.state["v"] = v
        p.value -= lr * v


def adam_step(store: ParamStore, lr: float, beta1: float = 0.75, beta2: float = 0.999,
              eps: float = 1e-8, l2: float = 0.0) -> None:
    for p in store:
        g = p.grad + l2 * p.value if (l2 and p.decay) else p.grad
        t = p.state.get("t", 0) + 1
        m = p.state.get("m", np.zeros_like(p.value))
        v = p.state.get("v", np.zeros_like(p.value))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        p.state.update(t=t, m=m, v=v)
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
