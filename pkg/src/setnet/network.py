"""The MLP: sparse hidden layers, dense output layer, dropout, softmax + CCE.

Hidden weight matrices are sparse (or plain dense arrays for the dense
configuration, which skips sparse bookkeeping entirely); the final
classification layer is always dense and never evolves. Dropout is the
inverted variant, applied to hidden activations in training mode only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import ActivationKind, SReLUParams, act_backward, act_forward
from .evolution import glorot_limit, init_sparse_layer, validate_sparsity
from .sparse import SparseWeights, as_batch, sparse_backward, sparse_forward

PROB_FLOOR = 1e-12  # clamp before log so the loss stays finite


@dataclass
class NetworkConfig:
    layer_dims: tuple[int, ...] = (3072, 4000, 1000, 4000, 10)
    activation: ActivationKind = ActivationKind.RELU
    sparsity: float = 0.0
    dropout_rate: float = 0.3
    seed: int = 0

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        if any(d <= 0 for d in self.layer_dims):
            raise ValueError(f"layer dims must be positive, got {self.layer_dims}")
        if isinstance(self.activation, str):
            self.activation = ActivationKind.parse(self.activation)
        validate_sparsity(self.sparsity)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]

    @property
    def hidden_pairs(self) -> list[tuple[int, int]]:
        """(n_in, n_out) of each hidden weight matrix."""
        dims = self.layer_dims
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 2)]

    def to_dict(self) -> dict:
        return {
            "layer_dims": list(self.layer_dims),
            "activation": self.activation.value,
            "sparsity": self.sparsity,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
        }


@dataclass
class HiddenLayer:
    weights: SparseWeights | np.ndarray
    bias: np.ndarray
    srelu: SReLUParams | None = None

    @property
    def is_sparse(self) -> bool:
        return isinstance(self.weights, SparseWeights)


@dataclass
class Network:
    config: NetworkConfig
    hidden: list[HiddenLayer]
    out_w: np.ndarray
    out_b: np.ndarray


def build_network(
    config: NetworkConfig,
    rng: np.random.Generator | None = None,
    force_sparse: bool = False,
) -> Network:
    """Construct a network from its config.

    At sparsity 0 the hidden layers are plain dense matrices unless
    ``force_sparse`` asks for the sparse representation (used to test that
    both code paths agree).
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    hidden = []
    for n_in, n_out in config.hidden_pairs:
        if config.sparsity == 0.0 and not force_sparse:
            limit = glorot_limit(n_in, n_out)
            weights = rng.uniform(-limit, limit, size=(n_in, n_out))
        else:
            weights = init_sparse_layer(config.sparsity, n_in, n_out, rng)
        srelu = None
        if config.activation == ActivationKind.SRELU:
            srelu = SReLUParams.initialize(n_out, rng)
        hidden.append(HiddenLayer(weights=weights, bias=np.zeros(n_out), srelu=srelu))
    n_in, n_out = config.layer_dims[-2], config.layer_dims[-1]
    limit = glorot_limit(n_in, n_out)
    out_w = rng.uniform(-limit, limit, size=(n_in, n_out))
    return Network(config=config, hidden=hidden, out_w=out_w, out_b=np.zeros(n_out))


@dataclass
class ForwardTrace:
    """Per-layer caches the backward pass needs. ``masks[i]`` is the dropout
    mask of hidden layer i with values in {0, 1/(1-p)}, or None when dropout
    was inactive (eval mode), which means the identity mask."""

    inputs: list[np.ndarray] = field(default_factory=list)
    preacts: list[np.ndarray] = field(default_factory=list)
    masks: list[np.ndarray | None] = field(default_factory=list)
    hidden_out: np.ndarray | None = None
    training: bool = False


def _layer_forward(weights, x):
    if isinstance(weights, SparseWeights):
        return sparse_forward(weights, x)
    return x @ weights


def _layer_backward(weights, x, grad_z):
    if isinstance(weights, SparseWeights):
        return sparse_backward(weights, x, grad_z)
    return x.T @ grad_z, grad_z @ weights.T


def softmax(logits: np.ndarray) -> np.ndarray:
    # non-finite logits produce nan rows here; the caller's finite check
    # turns that into a divergence signal rather than a warning
    with np.errstate(invalid="ignore"):
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)


def forward(
    net: Network,
    x,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardTrace]:
    """Full forward pass. Returns class probabilities (rows sum to 1) and the
    trace for a subsequent backward pass."""
    x = as_batch(x, net.config.layer_dims[0], "x")
    p = net.config.dropout_rate
    use_dropout = training and p > 0.0
    if use_dropout and rng is None:
        raise ValueError("training forward with dropout needs an rng")

    trace = ForwardTrace(training=training)
    a = x
    for layer in net.hidden:
        trace.inputs.append(a)
        z = _layer_forward(layer.weights, a) + layer.bias
        out, state = act_forward(net.config.activation, z, layer.srelu)
        mask = None
        if use_dropout:
            mask = (rng.random(out.shape) >= p) / (1.0 - p)
            out = out * mask
        trace.preacts.append(state)
        trace.masks.append(mask)
        a = out
    trace.hidden_out = a

    with np.errstate(over="ignore"):  # overflow here is a divergence signal
        logits = a @ net.out_w + net.out_b
    probs = softmax(logits)
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("non-finite network output (training diverged?)")
    return probs, trace


@dataclass
class LayerGrads:
    weights: np.ndarray  # per-connection (flat) for sparse layers, matrix for dense
    bias: np.ndarray
    srelu: SReLUParams | None = None


@dataclass
class NetworkGrads:
    hidden: list[LayerGrads]
    out_w: np.ndarray
    out_b: np.ndarray


def _check_one_hot(labels: np.ndarray):
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValueError("labels must be one-hot (0/1 entries)")
    if not np.all(labels.sum(axis=1) == 1.0):
        raise ValueError("labels must be one-hot (each row sums to 1)")


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean categorical cross-entropy, probabilities clamped at PROB_FLOOR."""
    p_true = np.clip(np.sum(probs * labels, axis=1), PROB_FLOOR, None)
    return float(-np.mean(np.log(p_true)))


def loss_and_backward(
    net: Network, trace: ForwardTrace, probs: np.ndarray, labels
) -> tuple[float, NetworkGrads]:
    """Mean cross-entropy and gradients for every parameter: sparse hidden
    weights (stored positions only), biases, the dense output layer, and the
    SReLU parameters when that activation is active."""
    labels = as_batch(labels, net.config.class_count, "labels")
    if labels.shape != probs.shape:
        raise ValueError(f"labels shape {labels.shape} != probs shape {probs.shape}")
    _check_one_hot(labels)

    loss = cross_entropy(probs, labels)
    batch = probs.shape[0]
    delta = (probs - labels) / batch  # gradient of mean CCE through softmax

    grad_out_w = trace.hidden_out.T @ delta
    grad_out_b = delta.sum(axis=0)
    g = delta @ net.out_w.T

    hidden_grads: list[LayerGrads | None] = [None] * len(net.hidden)
    for i in range(len(net.hidden) - 1, -1, -1):
        layer = net.hidden[i]
        if trace.masks[i] is not None:
            g = g * trace.masks[i]
        grad_z, grad_srelu = act_backward(
            net.config.activation, trace.preacts[i], g, layer.srelu
        )
        grad_w, g = _layer_backward(layer.weights, trace.inputs[i], grad_z)
        hidden_grads[i] = LayerGrads(
            weights=grad_w, bias=grad_z.sum(axis=0), srelu=grad_srelu
        )
    return loss, NetworkGrads(hidden=hidden_grads, out_w=grad_out_w, out_b=grad_out_b)


def save_network(net: Network, path) -> None:
    """Checkpoint: config header plus every parameter array (including sparse
    structure and momentum) in a single npz file."""
    arrays: dict[str, np.ndarray] = {
        "config": np.array(json.dumps(net.config.to_dict())),
        "out_w": net.out_w,
        "out_b": net.out_b,
    }
    for i, layer in enumerate(net.hidden):
        if layer.is_sparse:
            w = layer.weights
            arrays[f"h{i}_rows"] = w.rows
            arrays[f"h{i}_cols"] = w.cols
            arrays[f"h{i}_weights"] = w.weights
            arrays[f"h{i}_momentum"] = w.momentum
        else:
            arrays[f"h{i}_dense"] = layer.weights
        arrays[f"h{i}_bias"] = layer.bias
        if layer.srelu is not None:
            for name, arr in layer.srelu.arrays():
                arrays[f"h{i}_srelu_{name}"] = arr
    np.savez(path, **arrays)


def load_network(path) -> Network:
    with np.load(path, allow_pickle=False) as data:
        config = NetworkConfig(**json.loads(str(data["config"][()])))
        hidden = []
        for i, (n_in, n_out) in enumerate(config.hidden_pairs):
            if f"h{i}_dense" in data:
                weights: SparseWeights | np.ndarray = data[f"h{i}_dense"]
            else:
                weights = SparseWeights(
                    n_in,
                    n_out,
                    data[f"h{i}_rows"],
                    data[f"h{i}_cols"],
                    data[f"h{i}_weights"],
                    data[f"h{i}_momentum"],
                )
            srelu = None
            if f"h{i}_srelu_t_r" in data:
                srelu = SReLUParams(
                    t_r=data[f"h{i}_srelu_t_r"],
                    a_r=data[f"h{i}_srelu_a_r"],
                    t_l=data[f"h{i}_srelu_t_l"],
                    a_l=data[f"h{i}_srelu_a_l"],
                )
            hidden.append(HiddenLayer(weights=weights, bias=data[f"h{i}_bias"], srelu=srelu))
        return Network(
            config=config, hidden=hidden, out_w=data["out_w"], out_b=data["out_b"]
        )
