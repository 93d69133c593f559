"""Plain stochastic gradient descent with step decay."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Parameter


def step_decay_lr(base_lr: float, epoch: int, milestones: Sequence[int], gamma: float = 0.1) -> float:
    """Learning rate in effect during ``epoch`` (0-based)."""
    passed = sum(1 for m in milestones if epoch >= m)
    return base_lr * gamma ** passed


def sgd_step(params: Sequence[Parameter], lr: float) -> None:
    for p in params:
        p.data -= np.asarray(lr, dtype=p.dtype) * p.grad


class SGD:
    def __init__(self, params: Sequence[Parameter], lr: float,
                 milestones: Sequence[int] = (), gamma: float = 0.1, momentum: float = 0.0):
        self.params = list(params)
        self.base_lr = lr
        self.lr = lr
        self.milestones = tuple(milestones)
        self.gamma = gamma
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.params] if momentum else None

    def set_epoch(self, epoch: int) -> float:
        self.lr = step_decay_lr(self.base_lr, epoch, self.milestones, self.gamma)
        return self.lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        if self._velocity is None:
            sgd_step(self.params, self.lr)
            return
        for p, v in zip(self.params, self._velocity):
            v *= self.momentum
            v += p.grad
            p.data -= np.asarray(self.lr, dtype=p.dtype) * v
