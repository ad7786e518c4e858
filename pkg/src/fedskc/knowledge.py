"""Class-wise structural knowledge: local extraction and server-side merge.

A client's knowledge for class ``j`` is the mean logit vector ``m`` over its
class-``j`` samples, smoothed to ``m * sigmoid(m)``. The server merges the
clients' vectors per class by averaging each client with its ``M`` nearest
neighbours (Euclidean) and then averaging those merged vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .model import ModelParams, logits as model_logits, sigmoid

# min over x of x * sigmoid(x)
SILU_MIN = -0.2784645427610738


@dataclass
class LocalSK:
    client_id: int
    per_class: np.ndarray  # (C, C); rows of absent classes are zero
    present: np.ndarray    # (C,) bool
    counts: np.ndarray     # (C,) samples per class

    @property
    def num_classes(self) -> int:
        return self.per_class.shape[0]


@dataclass
class GlobalSK:
    round: int
    per_class: np.ndarray          # (C, C)
    contributor_count: np.ndarray  # (C,)

    @classmethod
    def zeros(cls, C: int, round: int = -1) -> "GlobalSK":
        return cls(round, np.zeros((C, C)), np.zeros(C, dtype=np.int64))

    def to_bytes(self) -> bytes:
        C = self.per_class.shape[0]
        return (struct.pack("<2q", self.round, C)
                + self.per_class.astype("<f8").tobytes()
                + np.asarray(self.contributor_count, dtype="<i8").tobytes())

    @classmethod
    def from_bytes(cls, buf: bytes, offset: int = 0) -> tuple["GlobalSK", int]:
        rnd, C = struct.unpack_from("<2q", buf, offset)
        pos = offset + 16
        per_class = np.frombuffer(buf, "<f8", C * C, pos).reshape(C, C).astype(np.float64)
        pos += 8 * C * C
        contrib = np.frombuffer(buf, "<i8", C, pos).astype(np.int64)
        return cls(rnd, per_class, contrib), pos + 8 * C


@dataclass
class AdjacencyMatrix:
    cls: int
    clients: tuple[int, ...]  # client ids, one per row/column
    matrix: np.ndarray        # 0/1 entries

    @property
    def empty(self) -> bool:
        return len(self.clients) == 0


def compute_local_sk(params: ModelParams, dataset) -> LocalSK:
    """Knowledge vectors of one client from its full dataset."""
    C = params.num_classes
    out = model_logits(params, dataset.x)
    counts = np.bincount(dataset.y, minlength=C)
    per_class = np.zeros((C, C))
    for j in np.flatnonzero(counts):
        m = out[dataset.y == j].mean(axis=0)
        per_class[j] = m * sigmoid(m)
    return LocalSK(dataset.client_id, per_class, counts > 0, counts)


def build_adjacency(sks: list[LocalSK], j: int, M: int) -> AdjacencyMatrix:
    """Self plus the ``M`` nearest other clients holding class ``j``.

    Distance ties go to the lower client id. When fewer than ``M`` others
    hold the class, all of them are selected.
    """
    if M < 0:
        raise ValueError("M must be >= 0")
    holders = sorted((s for s in sks if s.present[j]), key=lambda s: s.client_id)
    n = len(holders)
    A = np.zeros((n, n), dtype=np.int64)
    if n == 0:
        return AdjacencyMatrix(j, (), A)
    vecs = np.stack([s.per_class[j] for s in holders])
    dist = np.linalg.norm(vecs[:, None, :] - vecs[None, :, :], axis=2)
    for a in range(n):
        others = [b for b in range(n) if b != a]
        order = sorted(others, key=lambda b: (dist[a, b], b))
        A[a, a] = 1
        A[a, order[:M]] = 1
    return AdjacencyMatrix(j, tuple(s.client_id for s in holders), A)


def merge_global_sk(sks: list[LocalSK], M: int, prev: GlobalSK, round: int) -> GlobalSK:
    """Global knowledge for every class; classes nobody holds keep ``prev``."""
    C = prev.per_class.shape[0]
    by_id = {s.client_id: s for s in sks}
    per_class = np.zeros((C, C))
    contrib = np.zeros(C, dtype=np.int64)
    for j in range(C):
        adj = build_adjacency(sks, j, M)
        if adj.empty:
            per_class[j] = prev.per_class[j]
            continue
        vecs = np.stack([by_id[k].per_class[j] for k in adj.clients])
        rows = adj.matrix.sum(axis=1)
        merged = (adj.matrix @ vecs) / rows[:, None]
        per_class[j] = merged.mean(axis=0)
        contrib[j] = len(adj.clients)
    return GlobalSK(round, per_class, contrib)


def discrepancy(local: LocalSK, global_sk: GlobalSK, absent: str = "skip") -> float:
    """Sum over classes of ``||c_k^j - g^j||``.

    ``absent="skip"`` ignores classes the client does not hold;
    ``absent="zero"`` treats their local vector as zero, so they cost ``||g^j||``.
    """
    if absent == "skip":
        diff = local.per_class[local.present] - global_sk.per_class[local.present]
    elif absent == "zero":
        diff = np.where(local.present[:, None], local.per_class, 0.0) - global_sk.per_class
    else:
        raise ValueError(f"unknown absent-class mode {absent!r}")
    return float(np.linalg.norm(diff, axis=1).sum())


def sk_variance(global_sk: GlobalSK, j: int) -> float:
    """Population variance of the entries of class ``j``'s global vector."""
    return float(np.var(global_sk.per_class[j]))


def sk_variances(global_sk: GlobalSK) -> np.ndarray:
    return np.var(global_sk.per_class, axis=1)
