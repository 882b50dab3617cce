"""Layer zoo with explicit forward/backward passes.

Every layer caches exactly what its backward pass needs during forward and
releases it afterwards. Calling backward without a preceding forward raises
MissingContext; feeding arrays of the wrong rank or channel count raises
ShapeMismatch. Parameters are initialized uniform on
[-sqrt(1/fan_in), sqrt(1/fan_in)] with zero biases; layers built without a
generator start at zero and expect weights to be loaded.
"""

from __future__ import annotations

import inspect

import numpy as np

from .tensor import Tensor

# transient im2col buffers are chunked to stay below this many bytes
COL_BUDGET = 64 * 1024 * 1024


class ShapeMismatch(ValueError):
    """Input array has the wrong rank, channel count or feature size."""


class MissingContext(RuntimeError):
    """backward called without a matching forward."""


def _uniform_init(rng, shape, fan_in, dtype):
    if rng is None:
        return np.zeros(shape, dtype=dtype)
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base layer. Subclasses implement forward/backward and declare their
    architecture through spec()."""

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[Tensor]:
        return []

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def spec(self) -> dict:
        raise NotImplementedError

    def _take_ctx(self):
        ctx = getattr(self, "_ctx", None)
        if ctx is None:
            raise MissingContext(f"{type(self).__name__}.backward without forward")
        self._ctx = None
        return ctx

    def astype(self, dtype) -> "Layer":
        """Deep copy with parameters and buffers converted to a new dtype."""
        other = type(self).from_spec(self.spec(), rng=None)
        for mine, theirs in zip(self.params(), other.params()):
            theirs.data = mine.data.astype(dtype)
            theirs.grad = mine.grad.astype(dtype)
        for name, buf in self.buffers().items():
            setattr(other, name, buf.astype(dtype))
        return other

    @classmethod
    def from_spec(cls, spec: dict, rng=None) -> "Layer":
        kwargs = {k: v for k, v in spec.items() if k != "type"}
        if "rng" in inspect.signature(cls.__init__).parameters:
            kwargs["rng"] = rng
        return cls(**kwargs)


def _as_nchw(x: np.ndarray, channels: int | None, who: str) -> np.ndarray:
    if x.ndim != 4:
        raise ShapeMismatch(f"{who} expects (n, c, h, w), got shape {x.shape}")
    if channels is not None and x.shape[1] != channels:
        raise ShapeMismatch(
            f"{who} expects {channels} channels, got {x.shape[1]} (shape {x.shape})"
        )
    return x


class Conv2d(Layer):
    """2D convolution, odd square kernel, same padding, stride 1 or more.

    Output height is ceil(h / stride). The forward pass rearranges input
    windows into a column matrix (chunked over the batch so the transient
    buffer stays below COL_BUDGET bytes) and multiplies by the flattened
    kernel; backward recomputes the column matrix instead of caching it.
    """

    def __init__(self, in_channels, out_channels, kernel_size=5, stride=1, rng=None,
                 dtype=np.float32):
        if kernel_size % 2 != 1:
            raise ValueError(f"kernel size must be odd, got {kernel_size}")
        if stride < 1:
            raise ValueError(f"stride must be positive, got {stride}")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = (kernel_size - 1) // 2
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Tensor(
            _uniform_init(rng, (out_channels, in_channels, kernel_size, kernel_size),
                          fan_in, dtype)
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype))
        self._ctx = None

    def params(self):
        return [self.weight, self.bias]

    def spec(self):
        return {
            "type": "conv2d",
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
        }

    def _out_hw(self, h, w):
        return -(-h // self.stride), -(-w // self.stride)

    def _cols(self, xp: np.ndarray, oh: int, ow: int) -> np.ndarray:
        # xp: padded (n, c, hp, wp) -> (n * oh * ow, c * k * k)
        k = self.kernel_size
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, :: self.stride, :: self.stride]
        n = xp.shape[0]
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, -1)

    def _chunk(self, c, oh, ow, itemsize) -> int:
        per_sample = oh * ow * c * self.kernel_size ** 2 * itemsize
        return max(1, COL_BUDGET // max(per_sample, 1))

    def forward(self, x, training=False):
        x = _as_nchw(x, self.in_channels, "Conv2d")
        n, c, h, w = x.shape
        oh, ow = self._out_hw(h, w)
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        wmat = self.weight.data.reshape(self.out_channels, -1).T
        out = np.empty((n, self.out_channels, oh, ow), dtype=x.dtype)
        step = self._chunk(c, oh, ow, x.dtype.itemsize)
        for lo in range(0, n, step):
            sl = slice(lo, min(lo + step, n))
            cols = self._cols(xp[sl], oh, ow)
            y = cols @ wmat + self.bias.data
            out[sl] = y.reshape(sl.stop - lo, oh, ow, self.out_channels).transpose(0, 3, 1, 2)
        self._ctx = (xp, (n, c, h, w), (oh, ow))
        return out

    def backward(self, grad):
        xp, (n, c, h, w), (oh, ow) = self._take_ctx()
        if grad.shape != (n, self.out_channels, oh, ow):
            raise ShapeMismatch(
                f"Conv2d backward expects {(n, self.out_channels, oh, ow)}, "
                f"got {grad.shape}"
            )
        k = self.kernel_size
        s = self.stride
        p = self.padding
        wmat = self.weight.data.reshape(self.out_channels, -1)
        dwmat = np.zeros_like(wmat)
        db = np.zeros_like(self.bias.data)
        dx = np.empty((n, c, h, w), dtype=grad.dtype)
        step = self._chunk(c, oh, ow, grad.dtype.itemsize)
        for lo in range(0, n, step):
            sl = slice(lo, min(lo + step, n))
            cn = sl.stop - lo
            cols = self._cols(xp[sl], oh, ow)
            g2 = grad[sl].transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
            dwmat += g2.T @ cols
            db += g2.sum(axis=0)
            dcol = g2 @ wmat
            dcol = dcol.reshape(cn, oh, ow, c, k, k).transpose(0, 3, 4, 5, 1, 2)
            dxp = np.zeros((cn, c, h + 2 * p, w + 2 * p), dtype=grad.dtype)
            for di in range(k):
                for dj in range(k):
                    dxp[:, :, di : di + s * oh : s, dj : dj + s * ow : s] += dcol[:, :, di, dj]
            dx[sl] = dxp[:, :, p : p + h, p : p + w]
        self.weight.accumulate(dwmat.reshape(self.weight.data.shape))
        self.bias.accumulate(db)
        return dx


class Linear(Layer):
    """Affine map on (n, features) arrays."""

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.weight = Tensor(
            _uniform_init(rng, (in_features, out_features), in_features, dtype)
        )
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))
        self._ctx = None

    def params(self):
        return [self.weight, self.bias]

    def spec(self):
        return {
            "type": "linear",
            "in_features": self.in_features,
            "out_features": self.out_features,
        }

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(
                f"Linear expects (n, {self.in_features}), got shape {x.shape}"
            )
        self._ctx = x
        return x @ self.weight.data + self.bias.data

    def backward(self, grad):
        x = self._take_ctx()
        self.weight.accumulate(x.T @ grad)
        self.bias.accumulate(grad.sum(axis=0))
        return grad @ self.weight.data.T


class BatchNorm(Layer):
    """Per-channel batch normalization on (n, c, h, w) arrays.

    Training mode normalizes by batch statistics and updates running
    moments (biased mean, unbiased variance, momentum 0.1); eval mode uses
    the running moments.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        self.channels = int(channels)
        self.eps = float(eps)
        self.momentum = float(momentum)
        self.gamma = Tensor(np.ones(channels, dtype=dtype))
        self.beta = Tensor(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._ctx = None

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def spec(self):
        return {
            "type": "batchnorm",
            "channels": self.channels,
            "eps": self.eps,
            "momentum": self.momentum,
        }

    def forward(self, x, training=False):
        x = _as_nchw(x, self.channels, "BatchNorm")
        axes = (0, 2, 3)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            count = x.shape[0] * x.shape[2] * x.shape[3]
            if count > 1:
                unbiased = var * (count / (count - 1.0))
            else:
                unbiased = var
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mean
            self.running_var[...] = (1 - m) * self.running_var + m * unbiased
        else:
            mean = self.running_mean
            var = self.running_var
        invstd = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean[:, None, None]) * invstd[:, None, None]
        self._ctx = (xhat, invstd, training)
        return self.gamma.data[:, None, None] * xhat + self.beta.data[:, None, None]

    def backward(self, grad):
        xhat, invstd, training = self._take_ctx()
        axes = (0, 2, 3)
        dgamma = (grad * xhat).sum(axis=axes)
        dbeta = grad.sum(axis=axes)
        self.gamma.accumulate(dgamma)
        self.beta.accumulate(dbeta)
        g = self.gamma.data[:, None, None] * invstd[:, None, None]
        if not training:
            return grad * g
        count = grad.shape[0] * grad.shape[2] * grad.shape[3]
        mean_g = grad.mean(axis=axes)[:, None, None]
        mean_gx = (grad * xhat).sum(axis=axes)[:, None, None] / count
        return g * (grad - mean_g - xhat * mean_gx)


class LeakyReLU(Layer):
    def __init__(self, negative_slope=0.01):
        self.negative_slope = float(negative_slope)
        self._ctx = None

    def spec(self):
        return {"type": "leaky_relu", "negative_slope": self.negative_slope}

    def forward(self, x, training=False):
        scale = np.where(x >= 0, x.dtype.type(1.0), x.dtype.type(self.negative_slope))
        self._ctx = scale
        return x * scale

    def backward(self, grad):
        return grad * self._take_ctx()


class Sigmoid(Layer):
    def __init__(self):
        self._ctx = None

    def spec(self):
        return {"type": "sigmoid"}

    def forward(self, x, training=False):
        y = np.empty_like(x)
        pos = x >= 0
        y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        y[~pos] = ex / (1.0 + ex)
        self._ctx = y
        return y

    def backward(self, grad):
        y = self._take_ctx()
        return grad * y * (1.0 - y)


class Dropout(Layer):
    """Inverted dropout: active only in training mode, identity otherwise.

    The mask generator is attached by Sequential.seed_dropout before
    training, so mask draws depend only on that seed and the forward call
    order.
    """

    def __init__(self, rate):
        rate = float(rate)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = None
        self._ctx = None

    def spec(self):
        return {"type": "dropout", "rate": self.rate}

    def forward(self, x, training=False):
        if not training or self.rate == 0.0:
            self._ctx = False  # identity pass
            return x
        if self.rng is None:
            raise MissingContext("Dropout used in training mode before seeding")
        keep = (self.rng.random(x.shape) >= self.rate).astype(x.dtype)
        keep /= x.dtype.type(1.0 - self.rate)
        self._ctx = keep
        return x * keep

    def backward(self, grad):
        ctx = self._take_ctx()
        if ctx is False:
            return grad
        return grad * ctx


class Upsample2x(Layer):
    """Nearest-neighbor upsampling by a factor of two in both directions."""

    def __init__(self):
        self._ctx = None

    def spec(self):
        return {"type": "upsample2x"}

    def forward(self, x, training=False):
        x = _as_nchw(x, None, "Upsample2x")
        self._ctx = x.shape
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h, w = self._take_ctx()
        if grad.shape != (n, c, 2 * h, 2 * w):
            raise ShapeMismatch(
                f"Upsample2x backward expects {(n, c, 2 * h, 2 * w)}, got {grad.shape}"
            )
        return grad.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5))


class Flatten(Layer):
    def __init__(self):
        self._ctx = None

    def spec(self):
        return {"type": "flatten"}

    def forward(self, x, training=False):
        self._ctx = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._take_ctx())


class Reshape(Layer):
    """Reshape (n, k) into (n, *shape)."""

    def __init__(self, shape):
        self.shape = tuple(int(v) for v in shape)
        self._ctx = None

    def spec(self):
        return {"type": "reshape", "shape": list(self.shape)}

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != int(np.prod(self.shape)):
            raise ShapeMismatch(
                f"Reshape expects (n, {int(np.prod(self.shape))}), got {x.shape}"
            )
        self._ctx = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad):
        return grad.reshape(self._take_ctx())


LAYER_TYPES = {
    "batchnorm": BatchNorm,
    "conv2d": Conv2d,
    "dropout": Dropout,
    "flatten": Flatten,
    "leaky_relu": LeakyReLU,
    "linear": Linear,
    "reshape": Reshape,
    "sigmoid": Sigmoid,
    "upsample2x": Upsample2x,
}


def layer_from_spec(spec: dict, rng=None) -> Layer:
    kind = spec.get("type")
    if kind not in LAYER_TYPES:
        raise ValueError(f"unknown layer type {kind!r}")
    return LAYER_TYPES[kind].from_spec(spec, rng=rng)
