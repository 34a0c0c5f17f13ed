"""AdamW with decoupled weight decay (Loshchilov & Hutter form)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import ShapeMismatch


@dataclass
class AdamW:
    """Adaptive-moment optimizer; weight decay applied to the parameter
    directly, not mixed into the gradient moments."""

    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """One in-place update; iteration order is sorted names."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name in sorted(params):
            p, g = params[name], grads[name]
            if g.shape != p.shape:
                raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p -= self.lr * (update + self.weight_decay * p)
