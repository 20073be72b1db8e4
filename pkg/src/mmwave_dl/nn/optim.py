"""Adam optimizer and step-decay learning-rate schedule."""

from dataclasses import dataclass

import numpy as np

__all__ = ["AdamState", "Adam", "StepDecay"]


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState(m=[np.zeros_like(p) for p in self.params],
                               v=[np.zeros_like(p) for p in self.params],
                               beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads, lr):
        s = self.state
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        s.step += 1
        b1, b2 = s.beta1, s.beta2
        c1 = 1.0 - b1 ** s.step
        c2 = 1.0 - b2 ** s.step
        for p, g, m, v in zip(self.params, grads, s.m, s.v):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + s.eps)


@dataclass(frozen=True)
class StepDecay:
    """``lr(epoch) = initial / factor ** (epoch // period)`` (epochs 0-based)."""

    initial: float
    factor: float
    period: int

    def __post_init__(self):
        if not (self.initial > 0 and self.factor > 1 and self.period > 0):
            raise ValueError("need initial > 0, factor > 1, period > 0")

    def __call__(self, epoch):
        return self.initial / self.factor ** (epoch // self.period)
