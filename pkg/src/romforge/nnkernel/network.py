"""Sequential container: ordered layers with a shared backward chain."""

from __future__ import annotations

import numpy as np

from .layers import BatchNorm, Dropout, Layer, layer_from_spec
from .tensor import Tensor


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def __len__(self) -> int:
        return len(self.layers)

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def params(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def seed_dropout(self, seed: int) -> None:
        """Give every dropout layer its own generator, derived from ``seed``
        and the layer position, so mask draws are reproducible."""
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(seed + i)

    def architecture(self) -> list[dict]:
        return [layer.spec() for layer in self.layers]

    def state_dict(self) -> dict[str, np.ndarray]:
        """Named parameter and buffer arrays, keyed layers.<idx>.<name>."""
        out: dict[str, np.ndarray] = {}
        for i, layer in enumerate(self.layers):
            names = _param_names(layer)
            for name, p in zip(names, layer.params()):
                out[f"layers.{i:03d}.{name}"] = p.data
            for name, buf in layer.buffers().items():
                out[f"layers.{i:03d}.{name}"] = buf
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set()
        for i, layer in enumerate(self.layers):
            names = _param_names(layer)
            for name, p in zip(names, layer.params()):
                key = f"layers.{i:03d}.{name}"
                expected.add(key)
                if key not in state:
                    raise KeyError(f"state is missing {key}")
                if state[key].shape != p.data.shape:
                    raise ValueError(
                        f"{key}: shape {state[key].shape} != {p.data.shape}"
                    )
                p.data = state[key].astype(p.data.dtype, copy=True)
                p.grad = np.zeros_like(p.data)
            for name in layer.buffers():
                key = f"layers.{i:03d}.{name}"
                expected.add(key)
                if key not in state:
                    raise KeyError(f"state is missing {key}")
                setattr(layer, name, state[key].astype(
                    getattr(layer, name).dtype, copy=True))
        extra = set(state) - expected
        if extra:
            raise KeyError(f"state holds unknown arrays {sorted(extra)}")

    def astype(self, dtype) -> "Sequential":
        return Sequential([layer.astype(dtype) for layer in self.layers])

    @staticmethod
    def from_architecture(arch: list[dict], rng=None) -> "Sequential":
        return Sequential([layer_from_spec(spec, rng=rng) for spec in arch])


def _param_names(layer: Layer) -> list[str]:
    count = len(layer.params())
    if count == 0:
        return []
    if count == 2:
        if isinstance(layer, BatchNorm):
            return ["gamma", "beta"]
        return ["weight", "bias"]
    raise ValueError(f"unexpected parameter count {count} on {type(layer).__name__}")
