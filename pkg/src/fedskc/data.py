"""Synthetic Gaussian-blob data, long-tailed profiles and Dirichlet client splits."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import fnv1a64


@dataclass
class Dataset:
    """A labelled sample set: ``x`` is ``(n, input_dim)``, ``y`` holds class ids."""

    x: np.ndarray
    y: np.ndarray
    num_classes: int

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)


@dataclass
class ClientDataset(Dataset):
    client_id: int = 0
    # positions of this client's samples in the global training set
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def per_class_counts(self) -> np.ndarray:
        return self.class_counts


@dataclass
class PartitionManifest:
    seed: int
    alpha: float
    rho: float
    K: int
    C: int
    counts: list[list[int]]
    checksum: str

    def to_json(self) -> str:
        return json.dumps(
            {"seed": self.seed, "alpha": self.alpha, "rho": self.rho, "K": self.K,
             "C": self.C, "counts": self.counts, "checksum": self.checksum},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PartitionManifest":
        d = json.loads(text)
        return cls(int(d["seed"]), float(d["alpha"]), float(d["rho"]), int(d["K"]), int(d["C"]),
                   [[int(v) for v in row] for row in d["counts"]], str(d["checksum"]))

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def read(cls, path) -> "PartitionManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def longtail_profile(C: int, n_max: int, rho: float) -> list[int]:
    """Exponentially decaying per-class counts, head ``n_max``, tail ``n_max / rho``."""
    if C < 2:
        raise ValueError("need at least two classes")
    if rho < 1 or n_max < 1:
        raise ValueError("require rho >= 1 and n_max >= 1")
    return [max(1, int(round(n_max * rho ** (-j / (C - 1))))) for j in range(C)]


def class_centers(C: int, input_dim: int, sep: float, rng: np.random.Generator) -> np.ndarray:
    """One center per class, uniformly placed on the sphere of radius ``sep``."""
    v = rng.standard_normal((C, input_dim))
    return sep * v / np.linalg.norm(v, axis=1, keepdims=True)


def synth_dataset(
    C: int,
    counts,
    input_dim: int,
    sep: float,
    noise: float,
    rng: np.random.Generator,
    centers: np.ndarray | None = None,
) -> Dataset:
    """Class-ordered blobs: ``counts[j]`` samples ``mu_j + noise * N(0, I)``.

    Centers are drawn from ``rng`` first unless supplied, so a test set can
    share them while drawing its noise from a separate stream.
    """
    if C < 2 or input_dim < 2:
        raise ValueError("need C >= 2 and input_dim >= 2")
    if sep <= 0 or noise < 0:
        raise ValueError("need sep > 0 and noise >= 0")
    counts = [int(c) for c in counts]
    if len(counts) != C:
        raise ValueError(f"{len(counts)} counts given for {C} classes")
    if centers is None:
        centers = class_centers(C, input_dim, sep, rng)
    y = np.repeat(np.arange(C), counts)
    x = centers[y] + noise * rng.standard_normal((y.size, input_dim))
    return Dataset(x, y, C)


def sample_gamma(shape: float, rng: np.random.Generator) -> float:
    """log of a Gamma(shape, 1) draw via Marsaglia-Tsang.

    For ``shape < 1`` the draw is boosted from ``shape + 1`` and multiplied by
    ``U ** (1 / shape)``; the log form keeps small-shape draws from
    underflowing to zero.
    """
    if shape <= 0:
        raise ValueError("gamma shape must be > 0")
    if shape < 1:
        u = rng.random()
        while u == 0.0:
            u = rng.random()
        return sample_gamma(shape + 1.0, rng) + math.log(u) / shape
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = rng.standard_normal()
        v = 1.0 + c * x
        if v <= 0:
            continue
        v = v * v * v
        u = rng.random()
        if u < 1.0 - 0.0331 * x ** 4 or (u > 0 and math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v))):
            return math.log(d * v)


def sample_dirichlet(alpha: float, K: int, rng: np.random.Generator) -> np.ndarray:
    logs = np.array([sample_gamma(alpha, rng) for _ in range(K)])
    logs -= logs.max()
    p = np.exp(logs)
    return p / p.sum()


def checksum_indices(client_indices) -> str:
    buf = b"".join(np.asarray(ix, dtype="<u8").tobytes() for ix in client_indices)
    return f"{fnv1a64(buf):016x}"


def dirichlet_partition(
    data: Dataset, K: int, alpha: float, rng: np.random.Generator, seed: int = 0, rho: float = 1.0
) -> tuple[list[ClientDataset], PartitionManifest]:
    """Split every class over ``K`` clients with Dirichlet(alpha) proportions.

    Each class's (shuffled) samples are cut at ``round(cumsum(p) * n_j)`` so
    every sample lands on exactly one client. Empty clients are allowed.
    ``seed`` and ``rho`` are only recorded in the manifest.
    """
    if alpha <= 0 or K < 1:
        raise ValueError("need alpha > 0 and K >= 1")
    C = data.num_classes
    buckets: list[list[np.ndarray]] = [[] for _ in range(K)]
    for j in range(C):
        idx = np.flatnonzero(data.y == j)
        idx = idx[rng.permutation(idx.size)]
        p = sample_dirichlet(alpha, K, rng)
        cuts = np.rint(np.cumsum(p) * idx.size).astype(np.int64)
        cuts[-1] = idx.size
        for k, part in enumerate(np.split(idx, cuts[:-1])):
            buckets[k].append(part)

    clients = []
    for k in range(K):
        ix = np.sort(np.concatenate(buckets[k])) if buckets[k] else np.zeros(0, dtype=np.int64)
        clients.append(ClientDataset(data.x[ix], data.y[ix], C, client_id=k, indices=ix))
    manifest = PartitionManifest(
        seed=seed, alpha=alpha, rho=rho, K=K, C=C,
        counts=[c.per_class_counts.tolist() for c in clients],
        checksum=checksum_indices([c.indices for c in clients]),
    )
    return clients, manifest
