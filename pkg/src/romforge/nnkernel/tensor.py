"""Parameter tensor: a value array with an accumulated gradient."""

from __future__ import annotations

import numpy as np


class Tensor:
    """Trainable array. ``grad`` always has the same shape and dtype as
    ``data``; layers accumulate into it during backward and the optimizer
    reads it afterwards."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = np.asarray(data)
        self.grad = np.zeros_like(self.data)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter {self.data.shape}"
            )
        self.grad += g

    def astype(self, dtype) -> "Tensor":
        t = Tensor(self.data.astype(dtype))
        t.grad = self.grad.astype(dtype)
        return t

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"
