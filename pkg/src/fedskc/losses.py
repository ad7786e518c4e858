"""Objective terms: cross-entropy, local contrastive loss (LCL), proximal term.

LCL compares each sample's logit vector ``l`` with every class's global
knowledge vector ``g_j`` through a cosine scaled by a per-class normalizer
``U[j]`` (mean distance from the client's logits to ``g_j``) and a
temperature. Normalizers are treated as constants when differentiating.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .model import ContractError, ModelParams, logits as model_logits

log = logging.getLogger(__name__)

METHODS = ("fedavg", "fedprox", "fedskc")

_zero_norm_reported = False


def reset_zero_norm_warning() -> None:
    """Re-arm the once-per-round zero-norm similarity warning."""
    global _zero_norm_reported
    _zero_norm_reported = False


def _note_zero_norm() -> None:
    global _zero_norm_reported
    if not _zero_norm_reported:
        _zero_norm_reported = True
        log.info("zero-norm logit or knowledge vector; similarity taken as 0")


@dataclass(frozen=True)
class LossConfig:
    method: str = "fedavg"
    tau: float = 0.08
    mu_prox: float = 0.0
    u_floor: float = 1e-8
    lambda_lcl: float = 1.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if not self.u_floor > 0:
            raise ValueError("u_floor must be > 0")
        if self.mu_prox < 0:
            raise ValueError("mu_prox must be >= 0")


def as_label_ids(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.argmax(axis=1)
    return labels.astype(np.int64)


def _onehot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        return labels.astype(np.float64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _centers(global_sk) -> np.ndarray:
    # accepts a GlobalSK or a bare (classes, classes) array
    return np.asarray(getattr(global_sk, "per_class", global_sk), dtype=np.float64)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def ce_loss_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    onehot = _onehot(labels, logits.shape[1])
    n = logits.shape[0]
    logp = _log_softmax(logits)
    loss = -(onehot * logp).sum() / n
    return float(loss), (np.exp(logp) - onehot) / n


def compute_normalizers(params: ModelParams, x: np.ndarray, global_sk, u_floor: float = 1e-8) -> np.ndarray:
    """``U[j] = max(u_floor, mean_i ||l_i - g_j||)`` over every local sample."""
    out = np.atleast_2d(model_logits(params, x))
    if out.shape[0] == 0:
        raise ContractError("normalizers need a nonempty dataset")
    return normalizers_from_logits(out, global_sk, u_floor)


def normalizers_from_logits(logits: np.ndarray, global_sk, u_floor: float = 1e-8) -> np.ndarray:
    g = _centers(global_sk)
    dist = np.linalg.norm(logits[:, None, :] - g[None, :, :], axis=2)
    return np.maximum(u_floor, dist.mean(axis=0))


def lcl_similarity(l: np.ndarray, c_tilde_j: np.ndarray, u_j: float) -> float:
    l = np.asarray(l, dtype=np.float64)
    c = np.asarray(c_tilde_j, dtype=np.float64)
    denom = np.linalg.norm(l) * np.linalg.norm(c)
    if denom == 0.0:
        _note_zero_norm()
        return 0.0
    return float(l @ c / denom / u_j)


def _cosines(L: np.ndarray, G: np.ndarray):
    ln = np.linalg.norm(L, axis=1)
    gn = np.linalg.norm(G, axis=1)
    denom = ln[:, None] * gn[None, :]
    valid = denom > 0.0
    if not valid.all():
        _note_zero_norm()
    cos = np.divide(L @ G.T, denom, out=np.zeros_like(denom), where=valid)
    return cos, valid, ln, gn


def _scaled_similarities(L, global_sk, normalizers, tau):
    L = np.atleast_2d(np.asarray(L, dtype=np.float64))
    G = _centers(global_sk)
    cos, valid, ln, gn = _cosines(L, G)
    scale = 1.0 / (tau * np.asarray(normalizers, dtype=np.float64))
    return L, G, cos, valid, ln, gn, cos * scale[None, :], scale


def lcl_loss(logits, labels, global_sk, normalizers, tau: float) -> float:
    """Batch mean of ``-log softmax(s / tau)[y]`` with ``s_j = cos(l, g_j) / U[j]``."""
    y = as_label_ids(labels)
    *_, z, _ = _scaled_similarities(logits, global_sk, normalizers, tau)
    return float(-_log_softmax(z)[np.arange(z.shape[0]), y].mean())


def lcl_loss_log1p(logits, labels, global_sk, normalizers, tau: float) -> float:
    """Same loss written as ``log(1 + sum_{j != y} exp(z_j - z_y))``."""
    y = as_label_ids(labels)
    *_, z, _ = _scaled_similarities(logits, global_sk, normalizers, tau)
    rows = np.arange(z.shape[0])
    others = np.exp(z - z[rows, y][:, None])
    others[rows, y] = 0.0
    return float(np.log1p(others.sum(axis=1)).mean())


def lcl_grad(logits, labels, global_sk, normalizers, tau: float) -> np.ndarray:
    """Gradient of :func:`lcl_loss` with respect to each logit row."""
    y = as_label_ids(labels)
    L, G, cos, valid, ln, gn, z, scale = _scaled_similarities(logits, global_sk, normalizers, tau)
    n = L.shape[0]
    dz = np.exp(_log_softmax(z))
    dz[np.arange(n), y] -= 1.0
    dz /= n
    # d cos(l, g) / dl = g / (|l||g|) - cos * l / |l|^2
    w = np.where(valid, dz * scale[None, :], 0.0)
    g_hat = np.divide(G, gn[:, None], out=np.zeros_like(G), where=gn[:, None] > 0)
    inv_ln = np.divide(1.0, ln, out=np.zeros_like(ln), where=ln > 0)
    radial = (w * cos).sum(axis=1)
    return (w @ g_hat) * inv_ln[:, None] - (radial * inv_ln**2)[:, None] * L


def prox_term_grad(params: ModelParams, global_params: ModelParams, mu: float) -> tuple[float, ModelParams]:
    if params.shapes() != global_params.shapes():
        raise ContractError(f"shape mismatch: {params.shapes()} vs {global_params.shapes()}")
    diffs = [w - g for w, g in zip(params.arrays(), global_params.arrays())]
    loss = 0.5 * mu * sum(float((d * d).sum()) for d in diffs)
    return loss, ModelParams(*(mu * d for d in diffs))
