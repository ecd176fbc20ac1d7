from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor, backward

ZERO_GRAD = 1e-7


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error.

    Gradients that are zero in exact arithmetic (e.g. a key bias under
    softmax shift invariance) leave only rounding noise on both sides; below
    ``ZERO_GRAD`` in norm the absolute difference is reported instead.
    """
    diff = np.linalg.norm(analytic - numeric)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale < ZERO_GRAD:
        return float(diff)
    return float(diff / scale)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, float]:
    """Compare backprop gradients against central finite differences.

    ``max_entries`` bounds how many coordinates per parameter are perturbed;
    the analytic side is restricted to the same coordinates.
    """
    for p in params.values():
        p.zero_grad()
    backward(loss_fn())
    errors = {}
    for name, p in params.items():
        analytic = p.grad.copy()
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort((rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            numeric[j] = (up - down) / (2 * h)
        errors[name] = relative_error(analytic.reshape(-1)[idx], numeric)
    return errors
