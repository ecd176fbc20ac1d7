"""Parameter containers and the layers the transformer and discriminator use."""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from . import tensor as T
from .tensor import ShapeError, Tensor


class Module:
    """Collects parameters from attributes (Tensors, Modules, lists of Modules)."""

    def named_parameters(self, prefix: str = ""):
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def param(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        bound = 1.0 / math.sqrt(n_in)
        self.weight = param(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = param(np.zeros(n_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return T.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = T.LN_EPS):
        self.gain = param(np.ones(d))
        self.bias = param(np.zeros(d))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gain, self.bias, self.eps)


def gru_last_state(xp: Tensor, mask: np.ndarray, wh: Tensor, bh: Tensor) -> Tensor:
    """Final GRU state over the unmasked prefix of each row.

    ``xp`` holds the input projections (B, S, 3H); the recurrence itself runs
    in the compiled kernel when available.
    """
    B, S, H3 = xp.shape
    if wh.shape != (H3 // 3, H3) or bh.shape != (H3,):
        raise ShapeError(f"gru: input {xp.shape} vs recurrent weights {wh.shape}/{bh.shape}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (B, S):
        raise ShapeError(f"gru: mask {mask.shape} vs input {xp.shape}")
    if (mask.sum(axis=1) == 0).any():
        raise ValueError("gru: empty sequence in batch")
    h, cache = kernels.gru_forward(xp.data, mask, wh.data, bh.data)

    def back(g):
        return kernels.gru_backward(g, mask, wh.data, cache)

    return T.custom_op(h, (xp, wh, bh), back)


class GRU(Module):
    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(hidden)
        self.w_in = param(rng.uniform(-bound, bound, size=(n_in, 3 * hidden)))
        self.b_in = param(rng.uniform(-bound, bound, size=3 * hidden))
        self.w_h = param(rng.uniform(-bound, bound, size=(hidden, 3 * hidden)))
        self.b_h = param(rng.uniform(-bound, bound, size=3 * hidden))
        self.hidden = hidden

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        xp = T.add(T.matmul(x, self.w_in), self.b_in)
        return gru_last_state(xp, mask, self.w_h, self.b_h)
