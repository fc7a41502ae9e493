"""AdamW with decoupled weight decay over named parameters."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


class AdamW:
    def __init__(self, params, lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.named = {p.name: p.tensor for p in params}
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in self.named.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in self.named.items()}

    def zero_grad(self):
        for t in self.named.values():
            t.grad = None

    def step(self):
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, t in self.named.items():
            g = t.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            t.data = t.data - self.lr * (update + self.weight_decay * t.data)

    # -- serialization for exact training resume ----------------------------

    def state_arrays(self):
        out = {}
        for name in self.named:
            out[f"m/{name}"] = self.m[name]
            out[f"v/{name}"] = self.v[name]
        return out

    def load_state_arrays(self, arrays, step_count):
        for name in self.named:
            m = arrays.get(f"m/{name}")
            v = arrays.get(f"v/{name}")
            if m is None or v is None:
                raise ConfigError(f"optimizer state missing moments for {name!r}")
            if m.shape != self.m[name].shape:
                raise ConfigError(f"optimizer moment shape mismatch for {name!r}")
            self.m[name] = m.astype(self.m[name].dtype, copy=False)
            self.v[name] = v.astype(self.v[name].dtype, copy=False)
        self.step_count = int(step_count)
