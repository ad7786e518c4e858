"""Closed-form convergence bounds for the FedSKC objective.

Constants follow the usual non-convex FL assumptions: ``L1`` smoothness,
``sigma2`` gradient variance, ``B`` gradient-norm bound and ``L2`` Lipschitz
constant of the loss. ``E`` is local steps, ``C`` classes, ``M`` merge
neighbours and ``eta`` the (single) learning rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class RateConditionError(ValueError):
    pass


@dataclass(frozen=True)
class TheoryConstants:
    L1: float
    L2: float
    B: float
    sigma2: float
    E: int
    C: int
    M: int
    eta: float

    def __post_init__(self):
        if min(self.L1, self.L2, self.B, self.sigma2, self.eta) < 0:
            raise ValueError("constants must be non-negative")
        if self.E < 1 or self.M < 0 or self.C < 2:
            raise ValueError("need E >= 1, M >= 0, C >= 2")


class EtaMax(NamedTuple):
    eta: float
    admissible: bool


def theorem1_drop(k: TheoryConstants) -> float:
    """Per-round additive bound on the change of the expected loss."""
    eta = k.eta
    return (-(eta - k.L1 * eta**2 / 2) * k.E * k.B**2
            + k.L1 * k.E * eta**2 / 2 * k.sigma2
            + k.L2 * k.E * eta * k.C * k.B / (k.M + 1))


def theorem2_eta_max(k: TheoryConstants) -> EtaMax:
    """Largest learning rate for which the loss bound decreases every round."""
    denom = k.L1 * (k.M + 1) * (k.sigma2 + k.B**2)
    if denom <= 0:
        raise ValueError("L1 (M+1) (sigma2 + B^2) must be positive")
    num = 2 * (k.M + 1) * k.B**2 - 2 * k.L2 * k.C * k.B
    if num <= 0:
        return EtaMax(0.0, False)
    return EtaMax(num / denom, True)


def theorem3_eta_max(k: TheoryConstants, xi: float) -> float:
    num = 2 * xi * (k.M + 1) - 2 * k.L2 * k.C * k.B
    denom = k.L1 * (k.M + 1) * (xi + k.sigma2)
    if num <= 0:
        return 0.0
    return math.inf if denom == 0 else num / denom


def theorem3_min_rounds(k: TheoryConstants, xi: float, loss0: float, loss_star: float) -> int:
    """Smallest integer round count strictly above the convergence bound."""
    if xi <= 0:
        raise ValueError("xi must be > 0")
    if loss0 < loss_star:
        raise ValueError("loss0 must be >= loss_star")
    if not k.eta < theorem3_eta_max(k, xi):
        raise RateConditionError(f"rate condition violated: eta={k.eta} not below the admissible bound")
    m1 = k.M + 1
    P = m1 * k.L1 * k.E * k.eta**2 * k.sigma2
    H = 2 * k.L2 * k.E * k.eta * k.C * k.B
    denom = xi * k.E * k.eta * m1 * (2 - k.L1 * k.eta) - P - H
    if denom <= 0:
        raise RateConditionError(f"rate condition violated: denominator {denom:.6g} <= 0")
    bound = 2 * m1 * (loss0 - loss_star) / denom
    return math.floor(bound) + 1


def empirical_gradient_bound(params, x, y) -> float:
    """Largest per-sample cross-entropy gradient norm over a dataset.

    A crude stand-in for ``B`` only; it bounds nothing rigorously.
    """
    from .losses import LossConfig
    from .model import backward

    cfg = LossConfig(method="fedavg")
    norms = [np.linalg.norm(backward(params, x[i:i + 1], y[i:i + 1], cfg)[1].flat())
             for i in range(len(y))]
    return float(max(norms)) if norms else 0.0
