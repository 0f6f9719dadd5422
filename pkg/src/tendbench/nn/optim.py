"""Adam optimizer and gradient-norm clipping for Parameter lists."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is <= max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    total = total ** 0.5
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    def __init__(self, params: list[Parameter], lr: float = 5e-4,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        b1, b2 = self.betas
        self.t += 1
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * (g * g)
            m_hat = self.m[i] / bias1
            v_hat = self.v[i] / bias2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        """Moment buffers and step count as named arrays (for checkpoints)."""
        out = {f"{prefix}.t": np.array([self.t], dtype=np.int64)}
        for i in range(len(self.params)):
            out[f"{prefix}.m.{i}"] = self.m[i].copy()
            out[f"{prefix}.v.{i}"] = self.v[i].copy()
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]):
        self.t = int(arrays[f"{prefix}.t"][0])
        for i in range(len(self.params)):
            self.m[i] = arrays[f"{prefix}.m.{i}"].astype(self.params[i].data.dtype).copy()
            self.v[i] = arrays[f"{prefix}.v.{i}"].astype(self.params[i].data.dtype).copy()
