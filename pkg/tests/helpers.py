"""Shared test utilities: reference oracles, fixture builders, a fake clock."""

from __future__ import annotations

import numpy as np

from setnet.data import IMAGE_BYTES, write_cifar10_batches
from setnet.network import forward, loss_and_backward
from setnet.sparse import SparseWeights


class TickClock:
    """Deterministic perf_counter stand-in: advances one second per call."""

    def __init__(self):
        self.t = 0.0

    def __call__(self) -> float:
        self.t += 1.0
        return self.t


def dense_of(w: SparseWeights) -> np.ndarray:
    """Explicit zero-filled matrix for the dense reference path."""
    dense = np.zeros((w.n_in, w.n_out))
    dense[w.rows, w.cols] = w.weights
    return dense


def random_sparse(n_in, n_out, nnz, rng, momentum=False) -> SparseWeights:
    """Random sparse matrix built without going through init_sparse_layer."""
    flat = rng.choice(n_in * n_out, size=nnz, replace=False)
    rows, cols = np.divmod(flat, n_out)
    return SparseWeights(
        n_in,
        n_out,
        rows,
        cols,
        rng.normal(size=nnz),
        rng.normal(size=nnz) if momentum else None,
    )


def centroid_accuracy(train_x, train_y, val_x, val_y) -> float:
    """Nearest-centroid classifier, the independent separability oracle."""
    classes = train_y.shape[1]
    centroids = np.stack(
        [train_x[train_y[:, c] == 1].mean(axis=0) for c in range(classes)]
    )
    d2 = ((val_x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) == np.argmax(val_y, axis=1)))


def enumerate_params(net) -> list[np.ndarray]:
    """Every trainable array of the network, in a fixed order."""
    arrays = []
    for layer in net.hidden:
        if isinstance(layer.weights, SparseWeights):
            arrays.append(layer.weights.weights)
        else:
            arrays.append(layer.weights)
        arrays.append(layer.bias)
        if layer.srelu is not None:
            arrays.extend(a for _, a in layer.srelu.arrays())
    arrays.append(net.out_w)
    arrays.append(net.out_b)
    return arrays


def enumerate_grads(grads) -> list[np.ndarray]:
    """Gradient arrays aligned with :func:`enumerate_params`."""
    arrays = []
    for g in grads.hidden:
        arrays.append(g.weights)
        arrays.append(g.bias)
        if g.srelu is not None:
            arrays.extend(a for _, a in g.srelu.arrays())
    arrays.append(grads.out_w)
    arrays.append(grads.out_b)
    return arrays


def randomize_for_fd(net, rng) -> None:
    """Move the net into general position for finite differences.

    Fresh nets have zero biases and SReLU t_l = 0, so ReLU/SReLU zeros cascade
    into pre-activations sitting exactly on kink points, where central
    differences are invalid. Random biases and spread-out SReLU parameters
    remove those coincidences (and make all four SReLU gradients active).
    """
    for layer in net.hidden:
        layer.bias += 0.2 * rng.standard_normal(layer.bias.shape)
        if layer.srelu is not None:
            n = layer.srelu.size
            layer.srelu.t_r[:] = 0.3 + 0.5 * rng.random(n)
            layer.srelu.a_r[:] = 0.5 + rng.random(n)
            layer.srelu.t_l[:] = -0.6 + 0.4 * rng.random(n)
            layer.srelu.a_l[:] = 0.1 + 0.2 * rng.random(n)
    net.out_b += 0.2 * rng.standard_normal(net.out_b.shape)


def finite_difference_check(net, x, labels, h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences
    over every parameter of the network (dropout must be off)."""

    def loss_of() -> float:
        probs, trace = forward(net, x, training=False)
        loss, _ = loss_and_backward(net, trace, probs, labels)
        return loss

    probs, trace = forward(net, x, training=False)
    _, grads = loss_and_backward(net, trace, probs, labels)
    analytic = enumerate_grads(grads)
    params = enumerate_params(net)

    worst = 0.0
    for param, grad in zip(params, analytic):
        flat_p = param.reshape(-1)
        flat_g = np.asarray(grad, dtype=np.float64).reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_of()
            flat_p[i] = orig - h
            down = loss_of()
            flat_p[i] = orig
            fd = (up - down) / (2.0 * h)
            rel = abs(fd - flat_g[i]) / max(abs(fd), abs(flat_g[i]), 1e-3)
            worst = max(worst, rel)
    return worst


def write_synthetic_cifar(dir_path, n_train, n_val, seed=0, shift=25.0, noise=60.0):
    """Class-templated random images in the exact CIFAR-10 binary layout.

    Each class gets a fixed +-shift pixel template on a mid-gray base; samples
    add heavy Gaussian noise. Learnable but far from trivial.
    """
    rng = np.random.default_rng(seed)
    templates = 128.0 + shift * rng.choice([-1.0, 1.0], size=(10, IMAGE_BYTES))

    def _make(n):
        labels = rng.integers(0, 10, size=n)
        images = templates[labels] + noise * rng.standard_normal((n, IMAGE_BYTES))
        return np.clip(np.rint(images), 0, 255).astype(np.uint8), labels

    train_images, train_labels = _make(n_train)
    val_images, val_labels = _make(n_val)
    write_cifar10_batches(dir_path, train_images, train_labels, val_images, val_labels)
