"""Single-process federated simulation of FedAvg, FedProx and FedSKC.

Every random draw is taken from a purpose-keyed stream (see :mod:`fedskc.rng`),
so switching a FedSKC component on or off never perturbs data generation,
client sampling or batch order.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import losses
from .config import ExperimentConfig, dumps
from .data import ClientDataset, Dataset, PartitionManifest, class_centers, dirichlet_partition, \
    longtail_profile, synth_dataset
from .knowledge import GlobalSK, LocalSK, compute_local_sk, discrepancy, merge_global_sk, sk_variances
from .model import ModelParams, backward, init_params, logits as model_logits, sgd_step
from .rng import stream
from .server import FederationState, aggregate, fedavg_weights, gda_weights, gpr_coefficient, \
    gpr_update, sample_clients

log = logging.getLogger(__name__)

METRICS_HEADER = ["round", "method", "seed", "train_loss", "test_acc", "participants", "gamma", "wall_ms"]


class TrainingAborted(RuntimeError):
    """A client produced a non-finite loss; the run cannot continue honestly."""

    def __init__(self, client: int, round: int, detail: str = ""):
        super().__init__(f"non-finite loss on client {client} in round {round}{': ' + detail if detail else ''}")
        self.client = client
        self.round = round


@dataclass
class RoundMetrics:
    round: int
    train_loss: float
    test_accuracy: float
    participants: list[int]
    gamma: float | None = None
    wall_ms: float = 0.0


@dataclass
class LocalResult:
    client_id: int
    params: ModelParams
    sk: LocalSK
    train_loss: float
    num_samples: int


@dataclass
class Federation:
    clients: list[ClientDataset]
    test: Dataset
    manifest: PartitionManifest


@dataclass
class RunResult:
    seed: int
    metrics: list[RoundMetrics]
    state: FederationState
    server_log: list[str] = field(default_factory=list)


def loss_config(cfg: ExperimentConfig) -> losses.LossConfig:
    return losses.LossConfig(method=cfg.method, tau=cfg.skc.tau, mu_prox=cfg.train.mu_prox,
                             u_floor=cfg.skc.u_floor, lambda_lcl=cfg.skc.lambda_lcl)


def build_federation(cfg: ExperimentConfig, seed: int | None = None) -> Federation:
    """Training data, client split and a balanced test set for one seed."""
    seed = cfg.seed if seed is None else seed
    d = cfg.data
    centers = class_centers(d.num_classes, d.input_dim, d.sep, stream(seed, "centers"))
    counts = longtail_profile(d.num_classes, d.n_max, d.rho)
    train = synth_dataset(d.num_classes, counts, d.input_dim, d.sep, d.noise, stream(seed, "train"), centers)
    test = synth_dataset(d.num_classes, [d.test_per_class] * d.num_classes, d.input_dim, d.sep, d.noise,
                         stream(seed, "test"), centers)
    clients, manifest = dirichlet_partition(train, cfg.fed.num_clients, d.alpha, stream(seed, "partition"),
                                            seed=seed, rho=d.rho)
    return Federation(clients, test, manifest)


def evaluate(params: ModelParams, test: Dataset) -> float:
    """Top-1 accuracy; argmax ties resolve to the lowest class id."""
    if len(test) == 0:
        raise ValueError("empty test set")
    pred = np.argmax(model_logits(params, test.x), axis=1)
    return float(np.mean(pred == test.y))


def rounds_to_target(metrics, target_acc: float) -> int | None:
    """First round whose test accuracy reaches ``target_acc``, else None.

    Accepts :class:`RoundMetrics` rows or a bare accuracy sequence (indexed from 0).
    """
    for i, m in enumerate(metrics):
        acc, rnd = (m.test_accuracy, m.round) if isinstance(m, RoundMetrics) else (float(m), i)
        if acc >= target_acc:
            return rnd
    return None


def local_train(
    client: ClientDataset,
    params_init: ModelParams,
    global_sk: GlobalSK | None,
    cfg: ExperimentConfig,
    round: int,
    seed: int | None = None,
) -> LocalResult:
    """``E`` epochs of mini-batch SGD on one client, then its local knowledge."""
    if len(client) == 0:
        raise ValueError(f"client {client.client_id} has no data")
    seed = cfg.seed if seed is None else seed
    lcfg = loss_config(cfg)
    use_lcl = cfg.use_lcl
    rng = stream(seed, "shuffle", client.client_id, round)
    params = params_init.copy()
    n, bs = len(client), cfg.train.batch_size
    epoch_loss = 0.0
    for _ in range(cfg.train.epochs):
        order = rng.permutation(n)
        normalizers = None
        if use_lcl:
            normalizers = losses.compute_normalizers(params, client.x, global_sk, cfg.skc.u_floor)
        total = 0.0
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            loss, grads = backward(params, client.x[idx], client.y[idx], lcfg,
                                   global_sk=global_sk if use_lcl else None,
                                   normalizers=normalizers, global_params=params_init)
            if not np.isfinite(loss):
                raise TrainingAborted(client.client_id, round, f"loss={loss}")
            params = sgd_step(params, grads, cfg.train.eta)
            total += loss * idx.size
        epoch_loss = total / n
    if not params.is_finite():
        raise TrainingAborted(client.client_id, round, "non-finite parameters")
    return LocalResult(client.client_id, params, compute_local_sk(params, client), epoch_loss, n)


def init_state(cfg: ExperimentConfig, seed: int | None = None) -> FederationState:
    seed = cfg.seed if seed is None else seed
    d = cfg.data
    params = init_params(d.input_dim, cfg.train.hidden, d.num_classes, stream(seed, "init"))
    return FederationState(round=0, global_params=params, global_sk=GlobalSK.zeros(d.num_classes))


def run_round(
    state: FederationState,
    fed: Federation,
    cfg: ExperimentConfig,
    r: int,
    seed: int | None = None,
    server_log: list[str] | None = None,
) -> FederationState:
    """One communication round; returns the next state with metrics appended."""
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    losses.reset_zero_norm_warning()
    K = cfg.fed.num_clients
    sampled = sample_clients(K, cfg.fed.epsilon, stream(seed, "sample", -1, r))
    active = [k for k in sampled if len(fed.clients[k]) > 0]
    if len(active) < len(sampled):
        log.info("round %d: skipping empty clients %s", r, sorted(set(sampled) - set(active)))

    broadcast_sk = state.global_sk if cfg.method == "fedskc" else None

    def train(k):
        return local_train(fed.clients[k], state.global_params, broadcast_sk, cfg, r, seed)

    if cfg.fed.workers > 1 and len(active) > 1:
        with ThreadPoolExecutor(max_workers=cfg.fed.workers) as pool:
            results = list(pool.map(train, active))
    else:
        results = [train(k) for k in active]

    new_sk = state.global_sk
    gamma = None
    skipped = True
    if not results:
        log.warning("round %d: no participant holds data; global model unchanged", r)
        params, weights = state.global_params.copy(), np.zeros(0)
    else:
        sizes = [res.num_samples for res in results]
        if cfg.method == "fedskc":
            new_sk = merge_global_sk([res.sk for res in results], cfg.skc.neighbors, state.global_sk, r)
        if cfg.use_gda:
            d = [discrepancy(res.sk, new_sk, cfg.skc.absent_discrepancy) for res in results]
            weights = gda_weights(sizes, d, cfg.skc.gda_mode)
        else:
            weights = fedavg_weights(sizes)
        params = aggregate([res.params for res in results], weights)

    variances = sk_variances(new_sk)
    prev_variances = state.variances
    if cfg.use_gpr and r >= 1 and state.prev_global_params is not None:
        review = FederationState(round=r, global_params=params, global_sk=new_sk,
                                 prev_global_params=state.global_params, prev_global_sk=state.global_sk,
                                 variances=variances, prev_variances=prev_variances)
        gamma = gpr_coefficient(variances, prev_variances)
        skipped = gamma is None
        params = gpr_update(review, cfg.skc.beta, affine=cfg.skc.gpr_affine)

    acc = evaluate(params, fed.test)
    train_loss = float(np.mean([res.train_loss for res in results])) if results else float("nan")
    wall_ms = (time.perf_counter() - t0) * 1000.0 if cfg.output.record_wall_ms else 0.0
    metrics = state.metrics + [RoundMetrics(r, train_loss, acc, [res.client_id for res in results],
                                            gamma, wall_ms)]
    if server_log is not None:
        server_log.append(_server_line(r, cfg.method, weights, gamma, skipped))
    return FederationState(
        round=r + 1,
        global_params=params,
        global_sk=new_sk,
        prev_global_params=state.global_params,
        prev_global_sk=state.global_sk,
        variances=variances,
        prev_variances=prev_variances,
        metrics=metrics,
    )


def _server_line(r, method, weights, gamma, skipped) -> str:
    lo = f"{weights.min():.6g}" if weights.size else ""
    hi = f"{weights.max():.6g}" if weights.size else ""
    g = "" if gamma is None else f"{gamma:.6g}"
    return "\t".join([str(r), method, str(weights.size), lo, hi, g, "1" if skipped else "0"])


def simulate(cfg: ExperimentConfig, seed: int | None = None, fed: Federation | None = None) -> RunResult:
    """Run every round in memory."""
    seed = cfg.seed if seed is None else seed
    fed = build_federation(cfg, seed) if fed is None else fed
    state = init_state(cfg, seed)
    server_log: list[str] = []
    for r in range(cfg.fed.rounds):
        state = run_round(state, fed, cfg, r, seed, server_log)
        m = state.metrics[-1]
        log.debug("%s seed=%d round=%d loss=%.4f acc=%.4f", cfg.method, seed, r, m.train_loss, m.test_accuracy)
    return RunResult(seed, state.metrics, state, server_log)


def metrics_csv(metrics: list[RoundMetrics], method: str, seed: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow([m.round, method, seed, repr(m.train_loss), repr(m.test_accuracy),
                    ";".join(str(k) for k in m.participants),
                    "" if m.gamma is None else repr(m.gamma), f"{m.wall_ms:.3f}"])
    return buf.getvalue()


def atomic_write(path, data: str | bytes) -> None:
    """Write to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, params: ModelParams, global_sk: GlobalSK | None = None) -> None:
    data = params.to_bytes()
    if global_sk is not None:
        data += global_sk.to_bytes()
    atomic_write(path, data)


def load_checkpoint(path) -> tuple[ModelParams, GlobalSK | None]:
    buf = Path(path).read_bytes()
    params, pos = ModelParams.from_bytes(buf)
    sk = GlobalSK.from_bytes(buf, pos)[0] if pos < len(buf) else None
    return params, sk


def run_experiment(cfg: ExperimentConfig, seeds: list[int] | None = None, out_dir=None) -> dict:
    """Run one or more seeds and write metrics, checkpoints and server logs.

    With an explicit seed list a ``summary_<method>.csv`` with per-seed final
    accuracy and the population mean/std is written as well. Returns a map of
    written paths.
    """
    out = Path(out_dir if out_dir is not None else cfg.output.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    run_seeds = list(seeds) if seeds else [cfg.seed]
    written: dict = {"metrics": [], "checkpoints": [], "server_logs": [], "summary": None}
    atomic_write(out / f"config_{cfg.method}.json", dumps(cfg) + "\n")
    finals = []
    for seed in run_seeds:
        result = simulate(cfg, seed)
        stem = f"{cfg.method}_seed{seed}"
        mpath = out / f"metrics_{stem}.csv"
        atomic_write(mpath, metrics_csv(result.metrics, cfg.method, seed))
        cpath = out / f"checkpoint_{stem}.bin"
        save_checkpoint(cpath, result.state.global_params,
                        result.state.global_sk if cfg.method == "fedskc" else None)
        spath = out / f"server_{stem}.tsv"
        atomic_write(spath, "".join(line + "\n" for line in result.server_log))
        written["metrics"].append(mpath)
        written["checkpoints"].append(cpath)
        written["server_logs"].append(spath)
        finals.append(result.metrics[-1].test_accuracy)
    if seeds:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "seed", "final_acc"])
        for seed, acc in zip(run_seeds, finals):
            w.writerow([cfg.method, seed, repr(acc)])
        w.writerow([cfg.method, "mean", repr(float(np.mean(finals)))])
        w.writerow([cfg.method, "std", repr(float(np.std(finals)))])
        spath = out / f"summary_{cfg.method}.csv"
        atomic_write(spath, buf.getvalue())
        written["summary"] = spath
    return written


def save_manifest(fed: Federation, path) -> None:
    atomic_write(path, fed.manifest.to_json() + "\n")

