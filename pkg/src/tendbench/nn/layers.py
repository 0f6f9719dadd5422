"""Network layers on top of the autodiff tensor: affine, layer norm, GRU cell,
and multi-head attention with per-head projections.

Weight convention is row-major batches: ``out = x @ weight + bias`` with
``weight`` shaped [in, out]. Recurrent and projection matrices start
orthogonal, biases at zero.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import (
    Parameter,
    Tensor,
    concat,
    matmul,
    sigmoid,
    softmax,
    sqrt,
    swap_last_axes,
    tanh,
    tmean,
)


def orthogonal(shape: tuple[int, int], gain: float = 1.0,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Orthogonal init (QR of a Gaussian, sign-corrected for determinism)."""
    rng = rng or np.random.default_rng(0)
    rows, cols = shape
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def _flat_matmul(x: Tensor, w: Tensor) -> Tensor:
    """x @ w with leading axes flattened into one GEMM.

    For x [..., D] against a 2-D weight this is much faster than numpy's
    stacked matmul (one big BLAS call instead of a loop of tiny ones, and the
    weight gradient reduces without a [batch, out, in] temporary).
    """
    if x.data.ndim <= 2:
        return matmul(x, w)
    lead = x.data.shape[:-1]
    out = matmul(x.reshape(-1, x.data.shape[-1]), w)
    return out.reshape(lead + (w.data.shape[-1],))


class Module:
    """Parameter container with recursive discovery in attribute order."""

    def named_parameters(self, prefix: str = "") -> list[tuple[str, Parameter]]:
        out: list[tuple[str, Parameter]] = []
        for attr, value in vars(self).items():
            key = f"{prefix}{attr}"
            if isinstance(value, Parameter):
                out.append((key, value))
            elif isinstance(value, Module):
                out.extend(value.named_parameters(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        out.append((f"{key}.{i}", item))
                    elif isinstance(item, Module):
                        out.extend(item.named_parameters(f"{key}.{i}."))
        return out

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ShapeError(
                f"state dict mismatch: missing {missing or 'none'}, unexpected {extra or 'none'}"
            )
        for name, p in own.items():
            if state[name].shape != p.data.shape:
                raise ShapeError(
                    f"parameter {name} expects shape {p.data.shape}, "
                    f"checkpoint has {state[name].shape}"
                )
            p.data = state[name].astype(p.data.dtype).copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def encode(obs, weight, bias) -> Tensor:
    """Shared affine encoding of an observation row (or batch of rows).

    ``weight`` is [embed, obs_dim] (matrix-times-column convention), ``bias``
    is [embed]; batched inputs use the transposed product.
    """
    obs = obs if isinstance(obs, Tensor) else Tensor(np.asarray(obs, dtype=np.float64))
    w = weight if isinstance(weight, Tensor) else Tensor(np.asarray(weight, dtype=np.float64))
    b = bias if isinstance(bias, Tensor) else Tensor(np.asarray(bias, dtype=np.float64))
    if obs.data.shape[-1] != w.data.shape[-1]:
        raise ShapeError(f"encode mismatch: obs {obs.data.shape} vs weight {w.data.shape}")
    return _flat_matmul(obs, swap_last_axes(w)) + b


def qkv_project(e, w_q, w_k, w_v) -> tuple[Tensor, Tensor, Tensor]:
    """Map encoded rows to query/key/value vectors (three bias-free linears)."""
    outs = []
    for w in (w_q, w_k, w_v):
        w = w if isinstance(w, Tensor) else Tensor(np.asarray(w, dtype=np.float64))
        e_t = e if isinstance(e, Tensor) else Tensor(np.asarray(e, dtype=np.float64))
        if e_t.data.shape[-1] != w.data.shape[-1]:
            raise ShapeError(f"qkv mismatch: input {e_t.data.shape} vs weight {w.data.shape}")
        outs.append(_flat_matmul(e_t, swap_last_axes(w)))
    return tuple(outs)


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, bias: bool = True,
                 gain: float = 1.0, rng: np.random.Generator | None = None,
                 dtype=np.float64):
        self.weight = Parameter(orthogonal((in_dim, out_dim), gain, rng).astype(dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def forward(self, x) -> Tensor:
        if x.data.shape[-1] != self.weight.data.shape[0]:
            raise ShapeError(
                f"linear mismatch: input {x.data.shape} vs weight {self.weight.data.shape}"
            )
        out = _flat_matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float64):
        self.gain = Parameter(np.ones(dim, dtype=dtype))
        self.shift = Parameter(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x) -> Tensor:
        mu = tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = tmean(centered * centered, axis=-1, keepdims=True)
        return centered / sqrt(var + self.eps) * self.gain + self.shift


class GRUCell(Module):
    """Fused-gate GRU cell: h' = (1 - z) * n + z * h.

    Gates are stored in r|z|n order in two fused weight matrices; the
    candidate uses n = tanh(x_n + r * h_n) (reset applied to the hidden
    contribution, including its bias).
    """

    def __init__(self, in_dim: int, hidden_dim: int,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        self.w_x = Parameter(orthogonal((in_dim, 3 * hidden_dim), 1.0, rng).astype(dtype))
        self.w_h = Parameter(orthogonal((hidden_dim, 3 * hidden_dim), 1.0, rng).astype(dtype))
        self.b_x = Parameter(np.zeros(3 * hidden_dim, dtype=dtype))
        self.b_h = Parameter(np.zeros(3 * hidden_dim, dtype=dtype))
        self.hidden_dim = hidden_dim

    def forward(self, x, h) -> Tensor:
        if h.data.shape[-1] != self.hidden_dim:
            raise ShapeError(f"hidden state {h.data.shape} vs hidden_dim {self.hidden_dim}")
        H = self.hidden_dim
        gx = matmul(x, self.w_x) + self.b_x
        gh = matmul(h, self.w_h) + self.b_h
        r = sigmoid(gx[..., 0:H] + gh[..., 0:H])
        z = sigmoid(gx[..., H:2 * H] + gh[..., H:2 * H])
        n = tanh(gx[..., 2 * H:] + r * gh[..., 2 * H:])
        return (1.0 - z) * n + z * h


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head projections.

    Per head j: head_j = softmax(Q W_q[j] (K W_k[j])^T / sqrt(head_dim)) V W_v[j];
    heads are concatenated and projected back to ``model_dim``.
    """

    def __init__(self, model_dim: int, num_heads: int = 3,
                 head_dim: int | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float64):
        rng = rng or np.random.default_rng(0)
        head_dim = head_dim or model_dim // num_heads
        self.num_heads = num_heads
        self.head_dim = head_dim
        self.w_q = [Parameter(orthogonal((model_dim, head_dim), 1.0, rng).astype(dtype))
                    for _ in range(num_heads)]
        self.w_k = [Parameter(orthogonal((model_dim, head_dim), 1.0, rng).astype(dtype))
                    for _ in range(num_heads)]
        self.w_v = [Parameter(orthogonal((model_dim, head_dim), 1.0, rng).astype(dtype))
                    for _ in range(num_heads)]
        self.w_o = Parameter(orthogonal((num_heads * head_dim, model_dim), 1.0, rng).astype(dtype))

    def forward(self, q, k, v, return_weights: bool = False):
        if q.data.shape[-2] != k.data.shape[-2] or k.data.shape[-2] != v.data.shape[-2]:
            raise ShapeError(
                f"attention row-count mismatch: Q {q.data.shape}, K {k.data.shape}, V {v.data.shape}"
            )
        heads, weights = [], []
        for j in range(self.num_heads):
            qj = _flat_matmul(q, self.w_q[j])
            kj = _flat_matmul(k, self.w_k[j])
            vj = _flat_matmul(v, self.w_v[j])
            logits = matmul(qj, swap_last_axes(kj)) * (1.0 / np.sqrt(self.head_dim))
            attn = softmax(logits, axis=-1)
            heads.append(matmul(attn, vj))
            if return_weights:
                weights.append(attn)
        out = _flat_matmul(concat(heads, axis=-1), self.w_o)
        return (out, weights) if return_weights else out


def scaled_dot_attention(q, k, v, return_weights: bool = False):
    """Plain Attention(Q, K, V) = softmax(Q K^T / sqrt(d_k)) V on the raw inputs."""
    d_k = q.data.shape[-1]
    attn = softmax(matmul(q, swap_last_axes(k)) * (1.0 / np.sqrt(d_k)), axis=-1)
    out = matmul(attn, v)
    return (out, attn) if return_weights else out
