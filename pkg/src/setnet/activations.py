"""The seven activation functions, with exact derivatives.

Six are fixed nonlinearities; the seventh (SReLU) carries four trainable
per-neuron parameters that get their own gradients and are updated by the
same optimizer step as the weights. All functions apply elementwise to a
batch and return the cached pre-activation as backward state.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .sparse import as_batch

# standard self-normalizing constants
SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717


class ActivationKind(enum.Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    SOFTPLUS = "softplus"
    SOFTSIGN = "softsign"
    SELU = "selu"
    SRELU = "srelu"

    @classmethod
    def parse(cls, name: str) -> "ActivationKind":
        try:
            return cls(name.strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown activation {name!r} (valid: {valid})") from None


@dataclass
class SReLUParams:
    """Per-neuron (t_r, a_r, t_l, a_l): thresholds and outer slopes of the
    three-piece linear unit. Also reused as the container for their gradients."""

    t_r: np.ndarray
    a_r: np.ndarray
    t_l: np.ndarray
    a_l: np.ndarray

    @classmethod
    def initialize(cls, n: int, rng: np.random.Generator) -> "SReLUParams":
        # left piece starts as ReLU's zero branch, right piece as identity
        return cls(
            t_r=rng.random(n),
            a_r=np.ones(n),
            t_l=np.zeros(n),
            a_l=np.zeros(n),
        )

    @classmethod
    def zeros(cls, n: int) -> "SReLUParams":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n))

    def arrays(self):
        """(name, array) pairs in fixed order, for optimizer and checkpoint code."""
        return (
            ("t_r", self.t_r),
            ("a_r", self.a_r),
            ("t_l", self.t_l),
            ("a_l", self.a_l),
        )

    def copy(self) -> "SReLUParams":
        return SReLUParams(
            self.t_r.copy(), self.a_r.copy(), self.t_l.copy(), self.a_l.copy()
        )

    @property
    def size(self) -> int:
        return len(self.t_r)


def _srelu_masks(z, params):
    # at a threshold exactly, the outer (closed) piece wins; right checked first
    right = z >= params.t_r
    left = (z <= params.t_l) & ~right
    return right, left


def act_forward(kind, z, params=None):
    """Apply the activation elementwise. Returns (output, state); the state
    is the pre-activation batch the matching backward call needs."""
    z = as_batch(z, None, "z")
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("non-finite activation input")
    if kind == ActivationKind.RELU:
        out = np.maximum(z, 0.0)
    elif kind == ActivationKind.SIGMOID:
        out = expit(z)
    elif kind == ActivationKind.TANH:
        out = np.tanh(z)
    elif kind == ActivationKind.SOFTPLUS:
        # stable form of ln(1 + e^z)
        out = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
    elif kind == ActivationKind.SOFTSIGN:
        out = z / (1.0 + np.abs(z))
    elif kind == ActivationKind.SELU:
        out = SELU_LAMBDA * np.where(z > 0.0, z, SELU_ALPHA * np.expm1(np.minimum(z, 0.0)))
    elif kind == ActivationKind.SRELU:
        _require_srelu_params(params, z)
        right, left = _srelu_masks(z, params)
        out = np.where(
            right,
            params.t_r + params.a_r * (z - params.t_r),
            np.where(left, params.t_l + params.a_l * (z - params.t_l), z),
        )
    else:
        raise ValueError(f"unknown activation kind {kind!r}")
    return out, z


def act_backward(kind, state, grad_out, params=None):
    """Chain-rule through the activation.

    Returns (grad_z, grad_params); grad_params is None except for SReLU,
    where it holds the four per-neuron gradients summed over the batch.
    """
    z = as_batch(state, None, "state")
    grad_out = as_batch(grad_out, None, "grad_out")
    if z.shape != grad_out.shape:
        raise ValueError(f"state shape {z.shape} != grad_out shape {grad_out.shape}")

    if kind == ActivationKind.RELU:
        return grad_out * (z > 0.0), None
    if kind == ActivationKind.SIGMOID:
        s = expit(z)
        return grad_out * s * (1.0 - s), None
    if kind == ActivationKind.TANH:
        t = np.tanh(z)
        return grad_out * (1.0 - t * t), None
    if kind == ActivationKind.SOFTPLUS:
        return grad_out * expit(z), None
    if kind == ActivationKind.SOFTSIGN:
        d = 1.0 + np.abs(z)
        return grad_out / (d * d), None
    if kind == ActivationKind.SELU:
        deriv = SELU_LAMBDA * np.where(
            z > 0.0, 1.0, SELU_ALPHA * np.exp(np.minimum(z, 0.0))
        )
        return grad_out * deriv, None
    if kind == ActivationKind.SRELU:
        _require_srelu_params(params, z)
        right, left = _srelu_masks(z, params)
        deriv = np.where(right, params.a_r, np.where(left, params.a_l, 1.0))
        grad_z = grad_out * deriv
        g_right = grad_out * right
        g_left = grad_out * left
        grad_params = SReLUParams(
            t_r=np.sum(g_right * (1.0 - params.a_r), axis=0),
            a_r=np.sum(g_right * (z - params.t_r), axis=0),
            t_l=np.sum(g_left * (1.0 - params.a_l), axis=0),
            a_l=np.sum(g_left * (z - params.t_l), axis=0),
        )
        return grad_z, grad_params
    raise ValueError(f"unknown activation kind {kind!r}")


def _require_srelu_params(params, z):
    if params is None:
        raise ValueError("SReLU requires params")
    if params.size != z.shape[1]:
        raise ValueError(
            f"SReLU params cover {params.size} neurons, batch has {z.shape[1]} columns"
        )
