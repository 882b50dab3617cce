"""Finite-difference gradient verification.

Compares the analytic backward pass of a network against central
differences of the loss, in float64. The returned figure is the largest
absolute deviation over every parameter entry and every input entry,
divided by the largest gradient magnitude seen; normalizing by the global
scale keeps entries with vanishing gradients from blowing up the ratio.
"""

from __future__ import annotations

import numpy as np

from .layers import Dropout
from .losses import bce_with_logits_loss, mse_loss
from .network import Sequential


def _loss_fn(name: str):
    if name == "mse":
        return mse_loss
    if name == "bce_logits":
        return bce_with_logits_loss
    raise ValueError(f"unknown loss {name!r}")


def grad_check(
    network: Sequential,
    x: np.ndarray,
    target: np.ndarray | None = None,
    loss: str = "mse",
    h: float = 1e-5,
    training: bool = True,
) -> float:
    """Maximum relative disagreement between analytic and numeric gradients.

    The network is copied to float64 first. ``training`` selects the
    forward mode being differentiated (batch statistics for BatchNorm);
    dropout layers must be inactive since their masks would decorrelate
    the two loss evaluations. When ``target`` is omitted a fixed synthetic
    target ``0.7 * sin(k)`` over the flat output index is used.
    """
    for layer in network.layers:
        if isinstance(layer, Dropout) and layer.rate > 0.0:
            raise ValueError("grad_check requires inactive dropout")
    net = network.astype(np.float64)
    x = x.astype(np.float64)
    fn = _loss_fn(loss)

    out = net.forward(x, training=training)
    if target is None:
        target = 0.7 * np.sin(np.arange(out.size, dtype=np.float64)).reshape(out.shape)
    target = target.astype(np.float64)

    value, grad = fn(out, target)
    net.zero_grad()
    input_grad = net.backward(grad)
    analytic = [input_grad] + [p.grad.copy() for p in net.params()]

    def loss_at() -> float:
        return fn(net.forward(x, training=training), target)[0]

    numeric: list[np.ndarray] = []
    tensors = [x] + [p.data for p in net.params()]
    for arr in tensors:
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_at()
            flat[i] = keep - h
            down = loss_at()
            flat[i] = keep
            gf[i] = (up - down) / (2.0 * h)
        numeric.append(g)

    scale = 1e-12
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(scale, float(np.abs(a).max(initial=0.0)),
                    float(np.abs(n).max(initial=0.0)))
    for a, n in zip(analytic, numeric):
        worst = max(worst, float(np.abs(a - n).max(initial=0.0)))
    return worst / scale
