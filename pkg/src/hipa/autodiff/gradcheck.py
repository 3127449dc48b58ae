"""Finite-difference gradient oracle.

Central differences in float64 against the analytic backward pass. The
numeric side only ever calls the forward function, so it stays independent
of the tape machinery it is checking.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor


ZERO_FLOOR = 1e-8


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation, relative to the larger gradient magnitude.

    Structurally zero gradients come out as float noise on both sides
    (~1e-13 from central differences), so magnitudes below ZERO_FLOOR
    compare in absolute terms.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    return float(np.abs(analytic - numeric).max() / max(scale, ZERO_FLOOR))


def numeric_grads(loss_fn, tensors, step: float = 1e-4):
    """Full central-difference gradients of `loss_fn()` wrt each tensor.

    `loss_fn` must recompute the forward pass from the tensors' current
    data. Tensors are perturbed in place (in float64) and restored.
    """
    grads = []
    for t in tensors:
        if t.data.dtype != np.float64:
            raise ValueError("numeric_grads requires float64 tensors (64-bit replay)")
        flat = t.data.reshape(-1)
        g = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_fn()
            flat[i] = keep - step
            down = loss_fn()
            flat[i] = keep
            g[i] = (up - down) / (2.0 * step)
        grads.append(g.reshape(t.data.shape))
    return grads


def sampled_numeric_grad(loss_fn, tensor: Tensor, indices, step: float = 1e-4):
    """Central differences at selected flat indices of one tensor."""
    if tensor.data.dtype != np.float64:
        raise ValueError("sampled_numeric_grad requires float64 tensors")
    flat = tensor.data.reshape(-1)
    out = np.zeros(len(indices), dtype=np.float64)
    for j, i in enumerate(indices):
        keep = flat[i]
        flat[i] = keep + step
        up = loss_fn()
        flat[i] = keep - step
        down = loss_fn()
        flat[i] = keep
        out[j] = (up - down) / (2.0 * step)
    return out


def check_gradients(forward, tensors, step: float = 1e-4) -> float:
    """Worst relative error between backward() and finite differences.

    `forward(*tensors) -> Tensor scalar`. All tensors must already be
    float64 with requires_grad=True.
    """
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        loss = forward(*tensors)
    tape.backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad for t in tensors]

    def loss_value():
        return forward(*tensors).item()

    numeric = numeric_grads(loss_value, tensors, step=step)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))
