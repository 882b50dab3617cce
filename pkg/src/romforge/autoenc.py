"""Convolutional autoencoders for solution fields and domain bitmaps.

Both autoencoders share one construction scheme. The encoder is a stack of
(conv, batchnorm, leaky relu) blocks followed by a flatten and a plain
linear map onto the latent vector. The decoder mirrors it: a linear map
back to the bottleneck tensor, then conv blocks at stride 1 whose output
resolutions run through the encoder's resolution trace in reverse, with a
nearest-neighbor 2x upsample inserted wherever the mirrored resolution
doubles. The very last convolution stays linear for solution fields and
feeds a sigmoid for bitmaps, whose reconstruction is trained with binary
cross entropy instead of mean squared error.

Solution fields are masked by the domain bitmap and standardized by a
single scalar mean/std before training; parameter-feature matrices are
standardized per column. Both transforms live here because every
downstream consumer (regressor training, online evaluation) has to apply
exactly the same ones.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import nnkernel as nk


class ConfigError(ValueError):
    """Inconsistent or unusable architecture configuration."""


class DegenerateFeature(ValueError):
    """A feature column is constant, so it cannot be standardized."""


@dataclass(frozen=True)
class SolutionAEConfig:
    """Solution autoencoder settings.

    Defaults follow the reference configuration: seven conv blocks,
    channels (8, 16, 16, 32, 64, 64, 64) with strides (1, 2, 1, 2, 1, 2, 1)
    (an 8x downsample), kernel 5, latent size 20, batch 50, peak learning
    rate 1e-3. Training length is a run choice. ``augment_flips`` also
    trains on mirrored copies of every field, which helps when snapshots
    are scarce.
    """

    latent_dim: int = 20
    channels: tuple[int, ...] = (8, 16, 16, 32, 64, 64, 64)
    strides: tuple[int, ...] = (1, 2, 1, 2, 1, 2, 1)
    kernel_size: int = 5
    epochs: int = 500
    batch_size: int = 50
    max_lr: float = 1e-3
    augment_flips: bool = False

    def __post_init__(self):
        _validate_stack(self)


@dataclass(frozen=True)
class DomainAEConfig:
    """Domain-bitmap autoencoder settings.

    Reference configuration: channels (32, 32, 64, 64, 64, 64, 64, 64)
    with strides (1, 1, 2, 2, 2, 1, 1, 1), kernel 5, latent size 20
    (15 and 30 are the other stock choices), batch 50, peak learning rate
    1e-3, sigmoid output trained with binary cross entropy.
    """

    latent_dim: int = 20
    channels: tuple[int, ...] = (32, 32, 64, 64, 64, 64, 64, 64)
    strides: tuple[int, ...] = (1, 1, 2, 2, 2, 1, 1, 1)
    kernel_size: int = 5
    epochs: int = 300
    batch_size: int = 50
    max_lr: float = 1e-3

    def __post_init__(self):
        _validate_stack(self)


def _validate_stack(cfg) -> None:
    if cfg.latent_dim < 1:
        raise ConfigError(f"latent_dim must be positive, got {cfg.latent_dim}")
    if len(cfg.channels) != len(cfg.strides) or not cfg.channels:
        raise ConfigError(
            f"channels {cfg.channels} and strides {cfg.strides} must be "
            "nonempty and equally long"
        )
    if any(c < 1 for c in cfg.channels):
        raise ConfigError(f"channel counts must be positive: {cfg.channels}")
    if any(s not in (1, 2) for s in cfg.strides):
        raise ConfigError(f"strides must be 1 or 2, got {cfg.strides}")
    if cfg.kernel_size % 2 != 1 or cfg.kernel_size < 1:
        raise ConfigError(f"kernel_size must be odd, got {cfg.kernel_size}")
    if cfg.epochs < 1 or cfg.batch_size < 1 or cfg.max_lr <= 0:
        raise ConfigError("epochs, batch_size and max_lr must be positive")


def resolution_trace(in_hw: tuple[int, int], strides) -> list[tuple[int, int]]:
    """Spatial size after each conv block; raises ConfigError on a size
    that a stride does not divide evenly."""
    h, w = in_hw
    trace = []
    for i, s in enumerate(strides):
        if h % s or w % s:
            raise ConfigError(
                f"stride {s} of block {i} does not divide {h}x{w} evenly"
            )
        h //= s
        w //= s
        trace.append((h, w))
    return trace


def build_encoder(
    in_hw: tuple[int, int],
    channels,
    strides,
    latent_dim: int,
    kernel_size: int,
    rng,
    in_channels: int = 1,
) -> nk.Sequential:
    trace = resolution_trace(in_hw, strides)
    layers: list[nk.Layer] = []
    prev = in_channels
    for ch, st in zip(channels, strides):
        layers += [
            nk.Conv2d(prev, ch, kernel_size, st, rng=rng),
            nk.BatchNorm(ch),
            nk.LeakyReLU(),
        ]
        prev = ch
    bh, bw = trace[-1]
    layers += [nk.Flatten(), nk.Linear(prev * bh * bw, latent_dim, rng=rng)]
    return nk.Sequential(layers)


def build_decoder(
    in_hw: tuple[int, int],
    channels,
    strides,
    latent_dim: int,
    kernel_size: int,
    rng,
    out_channels: int = 1,
    sigmoid_output: bool = False,
) -> nk.Sequential:
    trace = resolution_trace(in_hw, strides)
    if trace[0] != tuple(in_hw):
        raise ConfigError(
            "first conv block must keep resolution (stride 1) so the "
            f"mirrored decoder can restore {in_hw[0]}x{in_hw[1]}"
        )
    mirrored = list(reversed(trace))
    bh, bw = trace[-1]
    bc = channels[-1]
    layers: list[nk.Layer] = [
        nk.Linear(latent_dim, bc * bh * bw, rng=rng),
        nk.Reshape((bc, bh, bw)),
        nk.BatchNorm(bc),
        nk.LeakyReLU(),
    ]
    outs = list(reversed(channels[:-1])) + [out_channels]
    h, w = bh, bw
    prev = bc
    for i, (ch, (th, tw)) in enumerate(zip(outs, mirrored)):
        if (th, tw) == (2 * h, 2 * w):
            layers.append(nk.Upsample2x())
            h, w = th, tw
        elif (th, tw) != (h, w):
            raise ConfigError(
                f"cannot mirror resolution {h}x{w} -> {th}x{tw} at block {i}"
            )
        layers.append(nk.Conv2d(prev, ch, kernel_size, 1, rng=rng))
        if i < len(outs) - 1:
            layers += [nk.BatchNorm(ch), nk.LeakyReLU()]
        prev = ch
    if sigmoid_output:
        layers.append(nk.Sigmoid())
    return nk.Sequential(layers)


def build_solution_ae(
    config: SolutionAEConfig, in_hw: tuple[int, int], seed: int
) -> tuple[nk.Sequential, nk.Sequential]:
    """Encoder and decoder with weights drawn from one generator, encoder
    first."""
    rng = np.random.default_rng(seed)
    enc = build_encoder(in_hw, config.channels, config.strides,
                        config.latent_dim, config.kernel_size, rng)
    dec = build_decoder(in_hw, config.channels, config.strides,
                        config.latent_dim, config.kernel_size, rng)
    return enc, dec


def build_domain_ae(
    config: DomainAEConfig, in_hw: tuple[int, int], seed: int
) -> tuple[nk.Sequential, nk.Sequential]:
    rng = np.random.default_rng(seed)
    enc = build_encoder(in_hw, config.channels, config.strides,
                        config.latent_dim, config.kernel_size, rng)
    dec = build_decoder(in_hw, config.channels, config.strides,
                        config.latent_dim, config.kernel_size, rng,
                        sigmoid_output=True)
    return enc, dec


def conv_resolutions(network: nk.Sequential,
                     probe: np.ndarray) -> list[tuple[int, int]]:
    """Observed spatial size after every conv layer under a probe batch.

    ``probe`` is whatever the network's first layer accepts: an
    (n, c, h, w) image batch for encoders, an (n, latent) code batch for
    decoders. Useful for checking mirror symmetry of built stacks.
    """
    x = probe
    sizes = []
    for layer in network.layers:
        x = layer.forward(x, training=False)
        if isinstance(layer, nk.Conv2d):
            sizes.append((x.shape[2], x.shape[3]))
    return sizes


# ---------------------------------------------------------------------------
# standardization


@dataclass(frozen=True)
class StandardizationStats:
    """Scalar solution statistics plus per-column feature statistics."""

    sol_mean: float
    sol_std: float
    feat_mean: np.ndarray = field(repr=False)
    feat_std: np.ndarray = field(repr=False)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "sol_mean": np.float64(self.sol_mean).reshape(()),
            "sol_std": np.float64(self.sol_std).reshape(()),
            "feat_mean": np.asarray(self.feat_mean, dtype=np.float64),
            "feat_std": np.asarray(self.feat_std, dtype=np.float64),
        }

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray]) -> "StandardizationStats":
        return StandardizationStats(
            sol_mean=float(arrays["sol_mean"]),
            sol_std=float(arrays["sol_std"]),
            feat_mean=np.asarray(arrays["feat_mean"], dtype=np.float64),
            feat_std=np.asarray(arrays["feat_std"], dtype=np.float64),
        )


def solution_stats(masked_solutions: np.ndarray) -> tuple[float, float]:
    """Scalar mean and std over every entry of the masked solution stack."""
    mean = float(np.mean(masked_solutions, dtype=np.float64))
    std = float(np.std(masked_solutions, dtype=np.float64))
    if std == 0.0:
        raise DegenerateFeature("solution values are constant; std is zero")
    return mean, std


def feature_stats(
    features: np.ndarray, strict: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Column means and stds of a feature matrix.

    Constant columns raise DegenerateFeature when ``strict``; otherwise a
    warning is issued and their std is set to one, leaving the column
    centered but unscaled.
    """
    if features.ndim != 2:
        raise ValueError(f"feature matrix must be 2d, got shape {features.shape}")
    mean = features.mean(axis=0, dtype=np.float64)
    std = features.std(axis=0, dtype=np.float64)
    flat = np.flatnonzero(std == 0.0)
    if flat.size:
        if strict:
            raise DegenerateFeature(
                f"feature columns {flat.tolist()} are constant"
            )
        warnings.warn(
            f"feature columns {flat.tolist()} are constant; std forced to 1",
            stacklevel=2,
        )
        std = std.copy()
        std[flat] = 1.0
    return mean, std


def standardize(x: np.ndarray, mean, std) -> np.ndarray:
    return ((x - mean) / std).astype(x.dtype, copy=False)


def destandardize(x: np.ndarray, mean, std) -> np.ndarray:
    return (x * std + mean).astype(x.dtype, copy=False)


# ---------------------------------------------------------------------------
# training and encoding


def train_autoencoder(
    encoder: nk.Sequential,
    decoder: nk.Sequential,
    data: np.ndarray,
    loss: str,
    epochs: int,
    batch_size: int,
    max_lr: float,
    seed: int,
    val_data: np.ndarray | None = None,
) -> nk.TrainReport:
    """Train encoder and decoder jointly to reproduce ``data``.

    ``data`` is (n, 1, h, w) float32, already standardized (solutions) or
    binary (bitmaps). The two stacks are chained into one backward pass;
    both are updated in place.
    """
    if data.ndim != 4:
        raise ValueError(f"data must be (n, 1, h, w), got shape {data.shape}")
    chain = nk.Sequential(encoder.layers + decoder.layers)
    return nk.fit(
        chain, data, data,
        loss=loss, epochs=epochs, batch_size=batch_size, max_lr=max_lr,
        seed=seed,
        val_inputs=val_data, val_targets=val_data,
    )


def encode(network: nk.Sequential, data: np.ndarray,
           batch_size: int = 256) -> np.ndarray:
    """Eval-mode forward pass in batches; returns float32 codes."""
    outs = []
    for lo in range(0, data.shape[0], batch_size):
        outs.append(network.forward(data[lo : lo + batch_size], training=False))
    return np.concatenate(outs, axis=0)


def pixel_accuracy(probs: np.ndarray, bitmaps: np.ndarray) -> float:
    """Share of pixels whose thresholded reconstruction matches the truth."""
    pred = probs >= 0.5
    truth = bitmaps >= 0.5
    return float(np.mean(pred == truth))


def as_net_input(stack: np.ndarray) -> np.ndarray:
    """(n, h, w) array of any numeric dtype -> (n, 1, h, w) float32."""
    if stack.ndim != 3:
        raise ValueError(f"expected (n, h, w), got shape {stack.shape}")
    return stack.astype(np.float32)[:, None, :, :]


def with_flips(data: np.ndarray) -> np.ndarray:
    """Stack vertical, horizontal and double mirror copies onto a batch.

    The hole layouts are sampled mirror-symmetrically and the walls carry
    the same condition top and bottom, so flipped fields still look like
    members of the snapshot family. Quadrupling a small training set this
    way buys the autoencoder generalization it cannot get from the
    originals alone; the flipped copies never need parameter vectors.
    """
    if data.ndim != 4:
        raise ValueError(f"expected (n, c, h, w), got shape {data.shape}")
    return np.concatenate([data, data[:, :, ::-1, :], data[:, :, :, ::-1],
                           data[:, :, ::-1, ::-1]])
