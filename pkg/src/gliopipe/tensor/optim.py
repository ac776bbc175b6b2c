"""SGD with momentum, Adam with bias correction, and milestone LR schedules."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .layers import Param


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant learning rate: (epoch_start, lr) milestones."""

    milestones: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.milestones:
            raise ValueError("schedule needs at least one milestone")
        epochs = [e for e, _ in self.milestones]
        if epochs[0] != 0:
            raise ValueError("first milestone must start at epoch 0")
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError("milestone epochs must be strictly increasing")
        # lr == 0 is allowed so a frozen run can be expressed through the schedule
        if any(lr < 0 for _, lr in self.milestones):
            raise ValueError("learning rates must be >= 0")


def lr_at(schedule: LrSchedule, epoch: int) -> float:
    """LR of the last milestone whose start is <= epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    lr = schedule.milestones[0][1]
    for start, value in schedule.milestones:
        if start <= epoch:
            lr = value
        else:
            break
    return lr


# the published segmentation rates; epoch boundaries are desk-scale defaults
SEGMENTATION_SCHEDULE = LrSchedule(((0, 1e-4), (50, 5e-5), (80, 1e-6)))
CLASSIFIER_SCHEDULE = LrSchedule(((0, 1e-4), (50, 5e-5), (80, 1e-5)))


class SGD:
    def __init__(self, params: Sequence[Param], lr: float, momentum: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p.value) for p in self.params]
        self.step_count = 0

    def step(self):
        self.step_count += 1
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            if self.momentum:
                v *= self.momentum
                v += p.grad
                p.value -= self.lr * v
            else:
                p.value -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    def __init__(self, params: Sequence[Param], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.step_count = 0

    def step(self):
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / c1
            vhat = v / c2
            p.value -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.value.dtype)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def state_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "m": [a.copy() for a in self.m],
            "v": [a.copy() for a in self.v],
        }

    def load_state_dict(self, state: dict):
        self.step_count = int(state["step_count"])
        if len(state["m"]) != len(self.m) or len(state["v"]) != len(self.v):
            raise ValueError("optimizer state does not match parameter list")
        self.m = [a.copy() for a in state["m"]]
        self.v = [a.copy() for a in state["v"]]
