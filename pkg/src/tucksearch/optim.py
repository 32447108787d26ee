"""SGD with Nesterov momentum and a stepped learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LrSchedule", "SgdNesterov", "sgd_step"]


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: rate is multiplied by `decay` every `period` epochs."""

    initial: float
    decay: float = 0.2
    period: int = 55

    def __post_init__(self):
        if self.initial <= 0.0 or not (0.0 < self.decay <= 1.0) or self.period < 1:
            raise ValueError("bad learning-rate schedule")

    def at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        return self.initial * self.decay ** (epoch // self.period)


def sgd_step(
    param: np.ndarray,
    grad: np.ndarray,
    velocity: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """One in-place Nesterov update of a single tensor.

    v <- mu v + (g + wd p);  p <- p - lr (g + wd p + mu v)
    """
    g = grad + weight_decay * param
    velocity *= momentum
    velocity += g
    param -= lr * (g + momentum * velocity)


class SgdNesterov:
    """Keeps one velocity per named parameter; `step` consumes named grads."""

    def __init__(
        self,
        params: dict[str, np.ndarray],
        lr: float,
        momentum: float = 0.9,
        weight_decay: float = 1e-4,
    ):
        if lr <= 0.0:
            raise ValueError("lr must be positive")
        if not (0.0 <= momentum < 1.0):
            raise ValueError("momentum must be in [0, 1)")
        if weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")
        self.params = dict(params)
        self.lr = float(lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocities = {name: np.zeros_like(p) for name, p in self.params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if name not in self.params:
                raise KeyError(f"gradient for unknown parameter {name!r}")
            sgd_step(
                self.params[name],
                g,
                self.velocities[name],
                self.lr,
                self.momentum,
                self.weight_decay,
            )

    def state(self) -> dict[str, np.ndarray]:
        return self.velocities

    def load_state(self, velocities: dict[str, np.ndarray]) -> None:
        for name, v in velocities.items():
            if name not in self.velocities:
                raise KeyError(f"velocity for unknown parameter {name!r}")
            if v.shape != self.velocities[name].shape:
                raise ValueError(f"{name}: velocity shape {v.shape} does not match parameter")
            self.velocities[name][...] = v
