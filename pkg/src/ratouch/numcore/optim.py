from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 3e-4
    weight_decay: float = 0.02
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    warmup_epochs: int = 10
    total_epochs: int = 60
    # False: hold the base rate after warmup instead of cosine-decaying it.
    cosine_decay: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("betas must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.total_epochs <= 0 or not 0 <= self.warmup_epochs <= self.total_epochs:
            raise ConfigError("need 0 <= warmup_epochs <= total_epochs and total_epochs > 0")


def lr_at(cfg: OptimConfig, epoch: int) -> float:
    """Learning rate for a 0-based epoch: linear ramp, then cosine to zero."""
    base = cfg.learning_rate
    if epoch < cfg.warmup_epochs:
        return base * (epoch + 1) / cfg.warmup_epochs
    if not cfg.cosine_decay:
        return base
    span = cfg.total_epochs - cfg.warmup_epochs
    if span <= 0:
        return base
    progress = min(1.0, (epoch - cfg.warmup_epochs) / span)
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


def adamw_step(params, cfg: OptimConfig, epoch: int, lr=None):
    """One decoupled-weight-decay Adam update over every trainable parameter."""
    if lr is None:
        lr = lr_at(cfg, epoch)
    params.step += 1
    t = params.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        if not p.requires_grad:
            continue
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m, v = params.moments.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        params.moments[name] = (m, v)
        data = p.data * (1.0 - lr * cfg.weight_decay)
        p.data = data - lr * (m / c1) / (np.sqrt(v / c2) + cfg.epsilon)
    return lr
