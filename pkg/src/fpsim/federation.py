"""Round orchestration: distribute, train locally, upload, aggregate.

Strategies: "standard" exchanges dense parameters forever; "proposed"
builds a relevance-guided mask once after the warmup round and exchanges
only surviving values from then on; "random" does the same with a
uniformly random component ranking (same budget and layer-survival
rules), isolating the value of the relevance signal.

Rounds are 1-indexed. In the warmup round itself the exchange is still
dense; the mask is built after that round's aggregation, applied to the
global vector, and its bitmap is charged to that round's downlink. Every
later round re-applies the stored mask after aggregation.

All reductions run in a fixed order (clients ascending by id, float64
accumulation), so results do not depend on scheduling; client training
may run on a thread pool (FPSIM_THREADS) without changing a single bit.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from fpsim.data import Dataset, PartitionSpec, generate, partition
from fpsim.lrp import ReferenceSet, component_relevance_report
from fpsim.metrics import mean_average_precision
from fpsim.nn.network import Network, build_cnn, save_checkpoint
from fpsim.nn.optim import AdamState, adam_step
from fpsim.nn.loss import binary_cross_entropy
from fpsim.pruning import (
    PruningMask,
    all_ones_mask,
    apply_mask,
    build_mask,
    enumerate_components,
    random_mask,
)
from fpsim.sparse import decode_sparse, encode_sparse, mask_wire_bytes

STRATEGIES = ("standard", "random", "proposed")

# Entropy tags for the independent derived PRNG streams.
_TAG_INIT = 1
_TAG_SHUFFLE = 2
_TAG_RANDOM_MASK = 3

_EVAL_BATCH = 256


@dataclass
class FederationConfig:
    clients: int
    rounds: int
    local_epochs: int
    warmup: int
    pruning_rate: float
    batch_size: int
    learning_rate: float
    seed: int
    lrp_epsilon: float
    lrp_bias: str = "denominator"
    lrp_logits: str = "full"
    mask_timing: str = "every_step"  # or "at_upload"

    def __post_init__(self):
        if not 1 <= self.warmup <= self.rounds:
            raise ValueError(
                f"warmup must lie in [1, rounds], got {self.warmup} of "
                f"{self.rounds}"
            )
        if self.clients < 1 or self.local_epochs < 1:
            raise ValueError("clients and local_epochs must be >= 1")
        if not 0 <= self.pruning_rate < 1:
            raise ValueError("pruning_rate must lie in [0, 1)")


@dataclass
class ClientState:
    client_id: int
    dataset: Dataset
    seed: int


@dataclass
class ServerState:
    net: Network                 # architecture template + eval scratch
    params: np.ndarray           # w*, canonical float32
    reference_set: ReferenceSet
    strategy: str
    mask: PruningMask | None = None
    round: int = 0


@dataclass
class RoundRecord:
    round: int
    strategy: str
    q: float
    test_map: float
    uplink_bytes: int
    downlink_bytes: int
    pruned_fraction: float
    wall_ms: float
    warnings: list[str] = field(default_factory=list)


def worker_count(requested: int | None = None) -> int:
    """Thread-pool size: explicit request, else FPSIM_THREADS, else 1."""
    if requested is not None:
        return max(1, requested)
    return max(1, int(os.environ.get("FPSIM_THREADS", "1")))


def local_train(
    client: ClientState,
    global_params: np.ndarray,
    template: Network,
    mask: PruningMask | None,
    cfg: FederationConfig,
    round_no: int,
) -> tuple[np.ndarray, list[str]]:
    """E epochs of seeded mini-batch Adam from the distributed weights."""
    ds = client.dataset
    warnings: list[str] = []
    batch = cfg.batch_size
    if batch > len(ds):
        warnings.append(
            f"client {client.client_id}: batch_size {batch} clamped to "
            f"dataset size {len(ds)}"
        )
        batch = len(ds)
    net = template.clone()
    net.set_params(global_params)
    params = net.get_params()
    state = AdamState(size=params.size, learning_rate=cfg.learning_rate)
    rng = np.random.default_rng(
        np.random.SeedSequence(
            (cfg.seed, _TAG_SHUFFLE, client.client_id, round_no)
        )
    )
    for _ in range(cfg.local_epochs):
        perm = rng.permutation(len(ds))
        for start in range(0, len(ds), batch):
            idx = perm[start : start + batch]
            logits = net.forward(ds.images[idx], cache=True)
            _, lgrad = binary_cross_entropy(logits, ds.labels[idx])
            grad = net.backward(lgrad)
            params = adam_step(params, grad, state)
            if mask is not None and cfg.mask_timing == "every_step":
                params = apply_mask(params, mask)
            net.set_params(params)
    if mask is not None and cfg.mask_timing == "at_upload":
        params = apply_mask(params, mask)
    return params, warnings


def aggregate(updates: list[tuple[int, np.ndarray, int]]) -> np.ndarray:
    """Size-weighted average sum_i (M_i / sum M) * w_i in client-id order.

    Weights are formed as exact rationals before float conversion, so
    they sum to one by construction.
    """
    if not updates:
        raise ValueError("aggregate needs at least one update")
    ordered = sorted(updates, key=lambda u: u[0])
    sizes = [int(m) for _, _, m in ordered]
    total = sum(sizes)
    if total <= 0:
        raise ValueError("total sample count must be positive")
    length = ordered[0][1].size
    acc = np.zeros(length, np.float64)
    for (_, w, _), m in zip(ordered, sizes):
        if w.size != length:
            raise ValueError("parameter vectors differ in length")
        acc += float(Fraction(m, total)) * w.astype(np.float64)
    return acc.astype(np.float32)


def evaluate_map(net: Network, params: np.ndarray, test: Dataset) -> float:
    net.set_params(params)
    chunks = [
        net.forward(test.images[s : s + _EVAL_BATCH])
        for s in range(0, len(test), _EVAL_BATCH)
    ]
    logits = np.concatenate(chunks, axis=0)
    return mean_average_precision(logits, test.labels).mAP


def run_round(
    server: ServerState,
    clients: list[ClientState],
    cfg: FederationConfig,
    test: Dataset,
    threads: int = 1,
) -> RoundRecord:
    t0 = time.perf_counter()
    server.round += 1
    r = server.round
    n = server.params.size
    wire_mask = server.mask if server.mask is not None else all_ones_mask(n)

    payload, per_client_down = encode_sparse(server.params, wire_mask, r)
    distributed = decode_sparse(payload, wire_mask)
    downlink = per_client_down * len(clients)

    def _train(client: ClientState):
        return local_train(client, distributed, server.net, server.mask, cfg, r)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(clients))) as ex:
            results = list(ex.map(_train, clients))
    else:
        results = [_train(c) for c in clients]

    uplink = 0
    updates = []
    warnings: list[str] = []
    for client, (w, warns) in zip(clients, results):
        up_payload, up_bytes = encode_sparse(w, wire_mask, r)
        uplink += up_bytes
        updates.append(
            (client.client_id, decode_sparse(up_payload, wire_mask),
             len(client.dataset))
        )
        warnings.extend(warns)

    new_global = aggregate(updates)

    if server.strategy != "standard" and r == cfg.warmup:
        comps = enumerate_components(server.net)
        if server.strategy == "proposed":
            server.net.set_params(new_global)
            report = component_relevance_report(
                server.net,
                server.reference_set,
                epsilon=cfg.lrp_epsilon,
                bias_mode=cfg.lrp_bias,
                logits_mode=cfg.lrp_logits,
            )
            server.mask = build_mask(
                report, comps, cfg.pruning_rate, n, created_at_round=r
            )
        else:  # random
            rng = np.random.default_rng(
                np.random.SeedSequence((cfg.seed, _TAG_RANDOM_MASK))
            )
            server.mask = random_mask(
                comps, cfg.pruning_rate, n, rng, created_at_round=r
            )
        _, mask_bytes = mask_wire_bytes(server.mask, r)
        downlink += mask_bytes * len(clients)
        new_global = apply_mask(new_global, server.mask)
    elif server.mask is not None:
        new_global = apply_mask(new_global, server.mask)

    server.params = new_global
    test_map = evaluate_map(server.net, server.params, test)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    return RoundRecord(
        round=r,
        strategy=server.strategy,
        q=cfg.pruning_rate if server.strategy != "standard" else 0.0,
        test_map=test_map,
        uplink_bytes=uplink,
        downlink_bytes=downlink,
        pruned_fraction=(
            server.mask.pruned_fraction if server.mask is not None else 0.0
        ),
        wall_ms=wall_ms,
        warnings=warnings,
    )


def build_experiment(
    cfg: FederationConfig,
    strategy: str,
    data_cfg,
    arch_cfg,
) -> tuple[ServerState, list[ClientState], Dataset]:
    """Datasets, shards, and the seeded initial model for one run."""
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}")
    shape = tuple(data_cfg.shape)
    n_total = data_cfg.train + data_cfg.test + data_cfg.reference
    full = generate(
        n_total,
        data_cfg.classes,
        shape=shape,
        seed=cfg.seed,
        noise_sigma=data_cfg.noise_sigma,
        max_positives=data_cfg.max_positives,
    )
    train = Dataset(
        images=full.images[: data_cfg.train],
        labels=full.labels[: data_cfg.train],
        class_count=full.class_count,
    )
    test = Dataset(
        images=full.images[data_cfg.train : data_cfg.train + data_cfg.test],
        labels=full.labels[data_cfg.train : data_cfg.train + data_cfg.test],
        class_count=full.class_count,
    )
    ref = ReferenceSet(
        images=full.images[data_cfg.train + data_cfg.test :],
        labels=full.labels[data_cfg.train + data_cfg.test :],
    )
    shards = partition(
        train, PartitionSpec(clients=cfg.clients, alpha=data_cfg.alpha,
                             seed=cfg.seed)
    )
    clients = [
        ClientState(client_id=i, dataset=shard, seed=cfg.seed)
        for i, shard in enumerate(shards)
    ]
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, _TAG_INIT)))
    net = build_cnn(
        shape,
        data_cfg.classes,
        conv_channels=list(arch_cfg.conv_channels),
        dense_units=list(arch_cfg.dense_units),
        rng=rng,
    )
    server = ServerState(
        net=net,
        params=net.get_params(),
        reference_set=ref,
        strategy=strategy,
    )
    return server, clients, test


def run_experiment(
    cfg: FederationConfig,
    strategy: str,
    data_cfg,
    arch_cfg,
    threads: int | None = None,
    csv_path: str | None = None,
    checkpoint_path: str | None = None,
    keep_timing: bool = False,
    round_callback=None,
) -> list[RoundRecord]:
    """T rounds of one strategy/rate cell; optionally persists records + model.

    round_callback(server, record) fires after every round — handy for
    capturing per-round global parameters in tests.
    """
    server, clients, test = build_experiment(cfg, strategy, data_cfg, arch_cfg)
    pool = worker_count(threads)
    records = []
    for _ in range(cfg.rounds):
        rec = run_round(server, clients, cfg, test, threads=pool)
        records.append(rec)
        if round_callback is not None:
            round_callback(server, rec)
    if csv_path is not None:
        write_records_csv(csv_path, records, keep_timing=keep_timing)
    if checkpoint_path is not None:
        server.net.set_params(server.params)
        save_checkpoint(server.net, checkpoint_path)
    return records


CSV_HEADER = "round,strategy,q,map,uplink_bytes,downlink_bytes,pruned_fraction,wall_ms"


def record_csv_row(rec: RoundRecord, keep_timing: bool = False) -> str:
    wall = rec.wall_ms if keep_timing else 0.0
    return (
        f"{rec.round},{rec.strategy},{rec.q:g},{rec.test_map:.10f},"
        f"{rec.uplink_bytes},{rec.downlink_bytes},"
        f"{rec.pruned_fraction:.10f},{wall:g}"
    )


def write_records_csv(path: str, records: list[RoundRecord],
                      keep_timing: bool = False):
    lines = [CSV_HEADER]
    lines += [record_csv_row(r, keep_timing) for r in records]
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")
