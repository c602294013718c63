"""SGD-with-momentum training loop with per-epoch metrics and evolution.

One epoch: shuffle, minibatch updates, then (when enabled) one evolution
step per sparse layer, then a dropout-off evaluation pass over the full
train and validation splits. The overfit value is the train/validation
accuracy gap; positive means overfitting.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .data import Dataset
from .evolution import EvolutionConfig, evolve
from .network import Network, cross_entropy, forward, loss_and_backward
from .sparse import SparseWeights

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    zeta: float = 0.3
    batch_size: int = 100
    epochs: int = 500
    seed: int = 0
    evolution_enabled: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "zeta": self.zeta,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "evolution_enabled": self.evolution_enabled,
        }


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    train_accuracy: float
    val_accuracy: float
    train_loss: float
    val_loss: float
    overfit: float  # train_accuracy - val_accuracy, exactly
    wall_time: float


def sgd_momentum_step(param, grad, velocity, lr: float, mu: float) -> None:
    """Classical momentum, in place: v <- mu*v - lr*g; p <- p + v."""
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient")
    np.multiply(velocity, mu, out=velocity)
    velocity -= lr * grad
    param += velocity


@dataclass
class _LayerVelocity:
    weights: np.ndarray | None  # None for sparse layers (they carry momentum)
    bias: np.ndarray
    srelu: list[np.ndarray] | None


@dataclass
class Velocity:
    hidden: list[_LayerVelocity]
    out_w: np.ndarray
    out_b: np.ndarray


def init_velocity(net: Network) -> Velocity:
    hidden = []
    for layer in net.hidden:
        hidden.append(
            _LayerVelocity(
                weights=None if layer.is_sparse else np.zeros_like(layer.weights),
                bias=np.zeros_like(layer.bias),
                srelu=None
                if layer.srelu is None
                else [np.zeros_like(a) for _, a in layer.srelu.arrays()],
            )
        )
    return Velocity(
        hidden=hidden, out_w=np.zeros_like(net.out_w), out_b=np.zeros_like(net.out_b)
    )


def apply_gradients(net: Network, grads, vel: Velocity, lr: float, mu: float) -> None:
    for layer, g, v in zip(net.hidden, grads.hidden, vel.hidden):
        if layer.is_sparse:
            # per-connection momentum lives on the sparse matrix itself
            sgd_momentum_step(layer.weights.weights, g.weights, layer.weights.momentum, lr, mu)
        else:
            sgd_momentum_step(layer.weights, g.weights, v.weights, lr, mu)
        sgd_momentum_step(layer.bias, g.bias, v.bias, lr, mu)
        if layer.srelu is not None:
            for (_, param), (_, grad), velocity in zip(
                layer.srelu.arrays(), g.srelu.arrays(), v.srelu
            ):
                sgd_momentum_step(param, grad, velocity, lr, mu)
    sgd_momentum_step(net.out_w, grads.out_w, vel.out_w, lr, mu)
    sgd_momentum_step(net.out_b, grads.out_b, vel.out_b, lr, mu)


def evaluate(net: Network, x, y, batch_size: int = 1000) -> tuple[float, float]:
    """Accuracy and mean loss on a split, dropout off, deterministic.
    Prediction is argmax over probabilities; ties go to the lowest class index."""
    if len(x) == 0:
        raise ValueError("cannot evaluate an empty split")
    correct = 0
    loss_sum = 0.0
    for lo in range(0, len(x), batch_size):
        xb = x[lo : lo + batch_size]
        yb = y[lo : lo + batch_size]
        probs, _ = forward(net, xb, training=False)
        correct += int(np.sum(np.argmax(probs, axis=1) == np.argmax(yb, axis=1)))
        loss_sum += cross_entropy(probs, yb) * len(xb)
    return correct / len(x), loss_sum / len(x)


def train_epoch(
    net: Network,
    dataset: Dataset,
    cfg: TrainConfig,
    rng: np.random.Generator,
    epoch: int,
    velocity: Velocity,
    clock: Callable[[], float] = time.perf_counter,
) -> EpochRecord:
    """One full pass: seeded shuffle, batch updates (the last partial batch is
    trained too), evolution of each sparse layer, then metric capture."""
    start = clock()
    try:
        n = dataset.n_train
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = perm[lo : lo + cfg.batch_size]
            probs, trace = forward(net, dataset.train_x[idx], training=True, rng=rng)
            loss, grads = loss_and_backward(net, trace, probs, dataset.train_y[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss in epoch {epoch}")
            apply_gradients(net, grads, velocity, cfg.learning_rate, cfg.momentum)

        if cfg.evolution_enabled:
            evo = EvolutionConfig(zeta=cfg.zeta)
            for layer in net.hidden:
                if isinstance(layer.weights, SparseWeights):
                    layer.weights, stats = evolve(layer.weights, evo, rng)
                    if stats.shortfall:
                        log.warning(
                            "epoch %d: regrow pool exhausted, %d connections short",
                            epoch,
                            stats.shortfall,
                        )

        train_acc, train_loss = evaluate(net, dataset.train_x, dataset.train_y)
        val_acc, val_loss = evaluate(net, dataset.val_x, dataset.val_y)
    except FloatingPointError as err:  # non-finite activations: blown-up weights
        raise DivergenceError(f"epoch {epoch}: {err}") from err
    return EpochRecord(
        epoch=epoch,
        train_accuracy=train_acc,
        val_accuracy=val_acc,
        train_loss=train_loss,
        val_loss=val_loss,
        overfit=train_acc - val_acc,
        wall_time=clock() - start,
    )


def train(
    net: Network,
    dataset: Dataset,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> Iterator[EpochRecord]:
    """Run the configured number of epochs, yielding one record per epoch.
    Raises DivergenceError mid-stream if training blows up; records already
    yielded remain valid."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    velocity = init_velocity(net)
    for epoch in range(1, cfg.epochs + 1):
        yield train_epoch(net, dataset, cfg, rng, epoch, velocity, clock=clock)
