"""Two-layer ReLU classifier with hand-written backprop.

The network is split the usual federated way into an extractor
``u = (W1, b1)`` and a classifier head ``v = (W2, b2)``. All arrays are
float64; batches are row-major ``(batch, features)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """Raised when an argument violates a shape or finiteness contract."""


class ConfigError(ValueError):
    """Raised when a loss/run configuration is inconsistent."""


@dataclass
class ModelParams:
    W1: np.ndarray  # (hidden, input)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (classes, hidden)
    b2: np.ndarray  # (classes,)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h, d = self.W1.shape
        c, h2 = self.W2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (c,):
            raise ContractError(
                f"inconsistent shapes W1{self.W1.shape} b1{self.b1.shape} "
                f"W2{self.W2.shape} b2{self.b2.shape}"
            )

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def num_classes(self) -> int:
        return self.W2.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)

    def shapes(self) -> tuple[tuple[int, ...], ...]:
        return tuple(a.shape for a in self.arrays())

    def copy(self) -> "ModelParams":
        return ModelParams(*(a.copy() for a in self.arrays()))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vec: np.ndarray) -> "ModelParams":
        """New params of the same shapes filled from a flat vector."""
        vec = np.asarray(vec, dtype=np.float64)
        out, pos = [], 0
        for a in self.arrays():
            out.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vec.size:
            raise ContractError(f"flat vector has {vec.size} entries, expected {pos}")
        return ModelParams(*out)

    def zeros_like(self) -> "ModelParams":
        return ModelParams(*(np.zeros_like(a) for a in self.arrays()))

    def to_bytes(self) -> bytes:
        """Four int64 shape prefixes (W1 rows/cols, W2 rows/cols) then all weights, little-endian."""
        head = struct.pack("<4q", self.hidden, self.input_dim, self.num_classes, self.hidden)
        return head + self.flat().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["ModelParams", int]:
        """Decode params starting at ``offset``; returns the params and the end offset."""
        h, d, c, h2 = struct.unpack_from("<4q", buf, offset)
        if h2 != h or min(h, d, c) <= 0:
            raise ContractError(f"corrupt parameter header {(h, d, c, h2)}")
        n = h * d + h + c * h + c
        start = offset + 32
        vec = np.frombuffer(buf, dtype="<f8", count=n, offset=start).astype(np.float64)
        template = ModelParams(np.zeros((h, d)), np.zeros(h), np.zeros((c, h)), np.zeros(c))
        return template.with_flat(vec), start + 8 * n


# Gradients share the parameter layout.
GradientSet = ModelParams


def _check_same_shapes(a: ModelParams, b: ModelParams) -> None:
    if a.shapes() != b.shapes():
        raise ContractError(f"shape mismatch: {a.shapes()} vs {b.shapes()}")


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def init_params(input_dim: int, hidden: int, num_classes: int, rng: np.random.Generator) -> ModelParams:
    """Symmetric-uniform fan init, ``s = sqrt(6 / (fan_in + fan_out))``; zero biases."""
    if min(input_dim, hidden, num_classes) < 1:
        raise ContractError("all dimensions must be positive")
    s1 = np.sqrt(6.0 / (input_dim + hidden))
    s2 = np.sqrt(6.0 / (hidden + num_classes))
    W1 = rng.uniform(-s1, s1, size=(hidden, input_dim))
    W2 = rng.uniform(-s2, s2, size=(num_classes, hidden))
    return ModelParams(W1, np.zeros(hidden), W2, np.zeros(num_classes))


def _check_input(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim or x.ndim not in (1, 2):
        raise ContractError(f"input of shape {x.shape} does not match input dim {params.input_dim}")
    return x


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(features, logits)`` for one sample ``(d,)`` or a batch ``(n, d)``."""
    x = _check_input(params, x)
    z = np.maximum(x @ params.W1.T + params.b1, 0.0)
    return z, z @ params.W2.T + params.b2


def logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return forward(params, x)[1]


def backward(
    params: ModelParams,
    x: np.ndarray,
    labels: np.ndarray,
    loss_cfg,
    global_sk=None,
    normalizers: np.ndarray | None = None,
    global_params: ModelParams | None = None,
) -> tuple[float, GradientSet]:
    """Batch-mean objective and its exact gradient.

    ``labels`` may be integer class ids or a one-hot matrix. The objective
    is selected by ``loss_cfg.method``:

    * ``fedavg``:  cross-entropy
    * ``fedprox``: cross-entropy + ``mu/2 * ||w - w_global||^2``
    * ``fedskc``:  cross-entropy + ``lambda_lcl * LCL``; the per-class
      normalizers are constants here (no gradient flows through them).
    """
    from . import losses

    x = np.atleast_2d(_check_input(params, x))
    pre = x @ params.W1.T + params.b1
    z = np.maximum(pre, 0.0)
    out = z @ params.W2.T + params.b2

    loss, dout = losses.ce_loss_grad(out, labels)
    if loss_cfg.method == "fedskc" and loss_cfg.lambda_lcl != 0.0:
        if global_sk is None:
            raise ConfigError("LCL is enabled but no global structural knowledge was supplied")
        if normalizers is None:
            raise ConfigError("LCL is enabled but no class normalizers were supplied")
        y = losses.as_label_ids(labels)
        lam = loss_cfg.lambda_lcl
        loss += lam * losses.lcl_loss(out, y, global_sk, normalizers, loss_cfg.tau)
        dout = dout + lam * losses.lcl_grad(out, y, global_sk, normalizers, loss_cfg.tau)

    dW2 = dout.T @ z
    db2 = dout.sum(axis=0)
    dz = dout @ params.W2
    dz[pre <= 0.0] = 0.0
    grads = ModelParams(dz.T @ x, dz.sum(axis=0), dW2, db2)

    if loss_cfg.method == "fedprox":
        if global_params is None:
            raise ConfigError("fedprox needs the global parameters for its proximal term")
        ploss, pgrad = losses.prox_term_grad(params, global_params, loss_cfg.mu_prox)
        loss += ploss
        grads = ModelParams(*(g + p for g, p in zip(grads.arrays(), pgrad.arrays())))
    return float(loss), grads


def sgd_step(params: ModelParams, grads: GradientSet, eta: float) -> ModelParams:
    _check_same_shapes(params, grads)
    if eta < 0:
        raise ContractError(f"learning rate must be >= 0, got {eta}")
    if not grads.is_finite():
        raise ContractError("non-finite gradient")
    return ModelParams(*(w - eta * g for w, g in zip(params.arrays(), grads.arrays())))
