"""Server logic: client sampling, aggregation weights, averaging and period review."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .knowledge import GlobalSK, sk_variances
from .model import ContractError, ModelParams, sigmoid

log = logging.getLogger(__name__)

GPR_SKIP_THRESHOLD = 1e-12
GAMMA_WARN = 10.0


@dataclass
class FederationState:
    round: int
    global_params: ModelParams
    global_sk: GlobalSK
    prev_global_params: ModelParams | None = None
    prev_global_sk: GlobalSK | None = None
    variances: np.ndarray | None = None
    prev_variances: np.ndarray | None = None
    metrics: list = field(default_factory=list)


def sample_clients(K: int, epsilon: float, rng: np.random.Generator) -> list[int]:
    """Sorted uniform sample without replacement of ``max(1, round(epsilon * K))`` ids."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    n = max(1, int(round(epsilon * K)))
    return sorted(int(k) for k in rng.choice(K, size=n, replace=False))


def _check_sizes(sizes) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    if (sizes < 0).any():
        raise ContractError("dataset sizes must be non-negative")
    if sizes.sum() <= 0:
        raise ContractError("total dataset size must be positive")
    return sizes


def fedavg_weights(sizes) -> np.ndarray:
    sizes = _check_sizes(sizes)
    return sizes / sizes.sum()


def gda_weights(sizes, discrepancies, mode: str = "normalized") -> np.ndarray:
    """Discrepancy-aware weights ``sigmoid(n_k - a_k d_k + b_k)``, normalized.

    ``a_k`` and ``b_k`` are the discrepancy and size fractions. In ``raw``
    mode ``n_k`` is the sample count itself, which saturates the sigmoid for
    realistic datasets; ``normalized`` mode uses ``b_k`` in its place.
    """
    sizes = _check_sizes(sizes)
    d = np.asarray(discrepancies, dtype=np.float64)
    if d.shape != sizes.shape:
        raise ContractError("one discrepancy per client required")
    if (d < 0).any():
        raise ContractError("discrepancies must be non-negative")
    if d.sum() <= 0:
        log.info("all discrepancies are zero; falling back to size weights")
        return fedavg_weights(sizes)
    a = d / d.sum()
    b = sizes / sizes.sum()
    if mode == "normalized":
        arg = b - a * d + b
    elif mode == "raw":
        arg = sizes - a * d + b
    else:
        raise ValueError(f"unknown GDA mode {mode!r}")
    s = sigmoid(arg)
    return s / s.sum()


def aggregate(params_list: list[ModelParams], weights) -> ModelParams:
    weights = np.asarray(weights, dtype=np.float64)
    if len(params_list) != weights.size or not params_list:
        raise ContractError("need one weight per parameter set")
    shapes = params_list[0].shapes()
    for p in params_list[1:]:
        if p.shapes() != shapes:
            raise ContractError(f"shape mismatch: {p.shapes()} vs {shapes}")
    out = []
    for arrays in zip(*(p.arrays() for p in params_list)):
        acc = np.zeros_like(arrays[0])
        for w, a in zip(weights, arrays):
            acc += w * a
        out.append(acc)
    return ModelParams(*out)


def gpr_coefficient(variances: np.ndarray, prev_variances: np.ndarray) -> float | None:
    """Relative change of the summed class variances; None when the previous sum is ~0."""
    denom = float(np.sum(prev_variances))
    if denom < GPR_SKIP_THRESHOLD:
        return None
    return float(np.sum(np.asarray(variances) - np.asarray(prev_variances))) / denom


def gpr_update(state: FederationState, beta: float, affine: bool = False) -> ModelParams:
    """Blend the current global model with the previous round's.

    The default is the literal rule ``beta*w + (1-beta)*gamma*(w_prev - w)``,
    which also shrinks ``w`` by ``beta``. ``affine=True`` uses
    ``w + (1-beta)*gamma*(w_prev - w)`` instead.
    """
    if state.round < 1 or state.prev_global_params is None:
        raise ContractError("period review needs a previous round")
    if not 0 <= beta <= 1:
        raise ValueError("beta must lie in [0, 1]")
    variances = state.variances if state.variances is not None else sk_variances(state.global_sk)
    prev_variances = (state.prev_variances if state.prev_variances is not None
                      else sk_variances(state.prev_global_sk))
    gamma = gpr_coefficient(variances, prev_variances)
    w = state.global_params
    if gamma is None or beta == 1.0:
        return w.copy()
    if abs(gamma) > GAMMA_WARN:
        log.warning("round %d: large review coefficient gamma=%.4g", state.round, gamma)
    keep = 1.0 if affine else beta
    return ModelParams(*(
        keep * cur + (1.0 - beta) * gamma * (prev - cur)
        for cur, prev in zip(w.arrays(), state.prev_global_params.arrays())
    ))
