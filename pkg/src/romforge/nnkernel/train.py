"""Shared mini-batch training loop: Adam plus a one-cycle schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import Sigmoid
from .losses import bce_loss, bce_with_logits_loss, mse_loss
from .network import Sequential
from .optim import Adam, OneCycleSchedule


class NonFiniteLoss(RuntimeError):
    """Training loss left the finite range."""


@dataclass
class TrainReport:
    """Per-epoch loss history of one training run."""

    epochs: int
    batch_size: int
    max_lr: float
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_val_loss: float | None = None
    best_val_epoch: int | None = None
    final_train_loss: float | None = None

    def summary(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "max_lr": self.max_lr,
            "final_train_loss": self.final_train_loss,
            "best_val_loss": self.best_val_loss,
            "best_val_epoch": self.best_val_epoch,
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
        }


def evaluate_loss(
    network: Sequential, inputs: np.ndarray, targets: np.ndarray,
    loss: str = "mse", batch_size: int = 256,
) -> float:
    """Mean loss over a dataset in eval mode, batched to bound memory."""
    loss_fn = _plain_loss(loss)
    total = 0.0
    n = inputs.shape[0]
    for lo in range(0, n, batch_size):
        sl = slice(lo, min(lo + batch_size, n))
        pred = network.forward(inputs[sl], training=False)
        value, _ = loss_fn(pred, targets[sl])
        total += value * (sl.stop - lo)
    return total / n


def _plain_loss(loss: str):
    if loss == "mse":
        return mse_loss
    if loss == "bce":
        return bce_loss
    raise ValueError(f"unknown loss {loss!r}")


def fit(
    network: Sequential,
    inputs: np.ndarray,
    targets: np.ndarray,
    *,
    loss: str = "mse",
    epochs: int,
    batch_size: int,
    max_lr: float,
    seed: int,
    val_inputs: np.ndarray | None = None,
    val_targets: np.ndarray | None = None,
    restore_best: bool = False,
) -> TrainReport:
    """Train ``network`` in place and return its loss history.

    One Adam step per mini batch, learning rate from a one-cycle schedule
    over epochs * ceil(n / batch_size) steps. Sample order reshuffles each
    epoch from ``numpy.random.default_rng(seed)``; dropout masks are seeded
    from seed + 7919. With ``loss="bce"`` and a final Sigmoid layer the
    sigmoid is folded into a fused logit loss for stability (same value,
    stable gradients). ``restore_best`` puts the parameters back to the
    best validation epoch after the last epoch.

    Raises NonFiniteLoss as soon as a batch loss is not finite.
    """
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if targets.shape[0] != n:
        raise ValueError(f"inputs ({n}) and targets ({targets.shape[0]}) disagree")
    if epochs < 1:
        raise ValueError(f"epochs must be positive, got {epochs}")
    has_val = val_inputs is not None
    if restore_best and not has_val:
        raise ValueError("restore_best needs validation data")

    train_net = network
    train_loss_name = loss
    if loss == "bce" and network.layers and isinstance(network.layers[-1], Sigmoid):
        train_net = Sequential(network.layers[:-1])
        train_loss_name = "bce_logits"
    loss_fn = (
        bce_with_logits_loss if train_loss_name == "bce_logits"
        else _plain_loss(train_loss_name)
    )

    rng = np.random.default_rng(seed)
    network.seed_dropout(seed + 7919)
    steps_per_epoch = -(-n // batch_size)
    schedule = OneCycleSchedule(max_lr=max_lr, total_steps=epochs * steps_per_epoch)
    optimizer = Adam(network.params())

    report = TrainReport(epochs=epochs, batch_size=batch_size, max_lr=max_lr)
    best_state: dict[str, np.ndarray] | None = None
    step = 0
    for epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo : lo + batch_size]
            pred = train_net.forward(inputs[idx], training=True)
            value, grad = loss_fn(pred, targets[idx])
            if not np.isfinite(value):
                raise NonFiniteLoss(f"epoch {epoch}, step {step}: loss {value}")
            network.zero_grad()
            train_net.backward(grad)
            optimizer.step(schedule.lr(step))
            step += 1
            epoch_loss += value * idx.size
        report.train_losses.append(epoch_loss / n)
        if has_val:
            vl = evaluate_loss(network, val_inputs, val_targets, loss=loss)
            report.val_losses.append(vl)
            if report.best_val_loss is None or vl < report.best_val_loss:
                report.best_val_loss = vl
                report.best_val_epoch = epoch
                if restore_best:
                    best_state = {
                        k: v.copy() for k, v in network.state_dict().items()
                    }
    report.final_train_loss = report.train_losses[-1]
    if restore_best and best_state is not None:
        network.load_state_dict(best_state)
    return report
