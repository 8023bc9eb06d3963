"""Acceptance suite: one test per release criterion.

Criteria 5-8 share a module-scoped fixture that executes the full
default-configuration sweep (standard, proposed at q in {0.2, 0.4}, and
random at q=0.4, five seeds each — 20 complete federated runs). This is
the expensive part of the suite; everything else is seconds.
"""

import dataclasses
import hashlib
import itertools
import json
import time

import numpy as np
import pytest

from fpsim.config import ExperimentConfig, parse_config
from fpsim.federation import run_experiment
from fpsim.lrp import propagate
from fpsim.metrics import average_precision
from fpsim.nn import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool2D,
    Network,
    ReLU,
    he_uniform_init,
)
from fpsim.pruning import enumerate_components
from fpsim.nn.network import build_cnn

from gradcheck import max_rel_error, sample_with_margin

SEEDS = (0, 1, 2, 3, 4)


# --------------------------------------------------------------------------
# Criterion 1: backprop matches central finite differences (h = 1e-3)
# with per-coordinate relative error < 1e-4 on 20 random small networks,
# in under 30 seconds.
# --------------------------------------------------------------------------

def _random_small_net(seed):
    rng = np.random.default_rng(10_000 + seed)
    kind = seed % 4
    if kind == 0:
        sizes = [int(rng.integers(4, 9)) for _ in range(3)]
        net = Network(
            [Dense(sizes[0], sizes[1]), ReLU(), Dense(sizes[1], sizes[2])],
            input_shape=(sizes[0],),
        )
    elif kind == 1:
        cin = int(rng.integers(1, 3))
        ch = int(rng.integers(2, 5))
        net = Network(
            [Conv2D(cin, ch, 3, pad=1), ReLU(), MaxPool2D(2), Flatten(),
             Dense(ch * 9, 3)],
            input_shape=(cin, 6, 6),
        )
    elif kind == 2:
        cin = int(rng.integers(1, 3))
        ch = int(rng.integers(2, 4))
        hidden = int(rng.integers(3, 6))
        net = Network(
            [Conv2D(cin, ch, 3, pad=0), ReLU(), Flatten(),
             Dense(ch * 9, hidden), ReLU(), Dense(hidden, 3)],
            input_shape=(cin, 5, 5),
        )
    else:
        ch = int(rng.integers(2, 5))
        net = Network(
            [Conv2D(1, ch, 3, pad=1), ReLU(), GlobalAvgPool(),
             Dense(ch, 3)],
            input_shape=(1, 5, 5),
        )
    he_uniform_init(net, rng)
    return net, rng


def test_criterion_1_gradients_match_finite_differences():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        net, rng = _random_small_net(seed)
        num_out = net.forward(
            np.zeros((1, *net.input_shape), np.float32)).shape[1]
        x, y = sample_with_margin(net, rng, batch=2, num_out=num_out)
        err = max_rel_error(net, x, y)
        worst = max(worst, err)
        assert err < 1e-4, f"net {seed}: max rel err {err:.2e}"
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"gradient sweep took {elapsed:.1f}s"
    print(f"criterion 1: 20 nets, worst rel err {worst:.2e}, "
          f"{elapsed:.1f}s")


# --------------------------------------------------------------------------
# Criterion 2: relevance conservation at epsilon = 0 with zero biases,
# per-layer sums within 1e-5 relative, 50 random nets, under 30 seconds.
# --------------------------------------------------------------------------

def _conservation_net(seed):
    rng = np.random.default_rng(20_000 + seed)
    kind = seed % 3
    if kind == 0:
        net = Network(
            [Conv2D(2, 4, 3, pad=1), ReLU(), MaxPool2D(2), Flatten(),
             Dense(4 * 9, 6), ReLU(), Dense(6, 3)],
            input_shape=(2, 6, 6),
        )
    elif kind == 1:
        net = Network(
            [Dense(10, 12), ReLU(), Dense(12, 8), ReLU(), Dense(8, 4)],
            input_shape=(10,),
        )
    else:
        net = Network(
            [Conv2D(1, 3, 3, pad=1), ReLU(), GlobalAvgPool(), Dense(3, 2)],
            input_shape=(1, 8, 8),
        )
    he_uniform_init(net, rng)
    for layer in net.layers:
        if layer.has_params:
            layer.bias[:] = 0
    return net, rng


def test_criterion_2_relevance_conservation():
    t0 = time.perf_counter()
    for seed in range(50):
        net, rng = _conservation_net(seed)
        x = rng.uniform(-1, 1, (2, *net.input_shape)).astype(np.float32)
        logits = net.forward(x, cache=True)
        rmap = propagate(net, logits.astype(np.float64), epsilon=0.0)
        out_sum = logits.astype(np.float64).sum(axis=1)
        scale = max(float(np.abs(out_sum).max()), 1e-12)
        for layer_rel in rmap:
            layer_sum = layer_rel.reshape(layer_rel.shape[0], -1).sum(axis=1)
            rel_err = np.abs(layer_sum - out_sum) / scale
            assert rel_err.max() < 1e-5, (
                f"net {seed}: conservation error {rel_err.max():.2e}"
            )
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0, f"conservation sweep took {elapsed:.1f}s"


# --------------------------------------------------------------------------
# Shared heavy fixture: full default-config runs for criteria 5-8, with
# per-round parameter hashes and mask digests captured along the way.
# --------------------------------------------------------------------------

HEAVY_CELLS = (
    ("standard", 0.0),
    ("proposed", 0.2),
    ("proposed", 0.4),
    ("random", 0.4),
)


def _run_cell(cfg: ExperimentConfig, strategy: str, q: float):
    param_sha = {}
    mask_digest = {}
    holder = {}

    def cb(server, rec):
        param_sha[rec.round] = hashlib.sha256(
            server.params.tobytes()).hexdigest()
        if server.mask is not None:
            mask_digest[rec.round] = server.mask.digest
            holder["mask"] = server.mask

    records = run_experiment(
        cfg.federation_config(q), strategy, cfg.data, cfg.arch,
        round_callback=cb,
    )
    return {
        "records": records,
        "param_sha": param_sha,
        "mask_digest": mask_digest,
        "mask": holder.get("mask"),
    }


@pytest.fixture(scope="module")
def default_runs():
    cfg = ExperimentConfig()  # the documented default configuration
    out = {}
    for seed in SEEDS:
        seeded = dataclasses.replace(cfg, seed=seed)
        for strategy, q in HEAVY_CELLS:
            out[(strategy, q, seed)] = _run_cell(seeded, strategy, q)
    return out


def _final_map(runs, strategy, q):
    return np.mean([
        runs[(strategy, q, s)]["records"][-1].test_map for s in SEEDS
    ])


# --------------------------------------------------------------------------
# Criterion 3: pruning budget window, layer survival, and a mask digest
# that never changes between the warmup round and the final round, for
# q in {0.1, 0.2, 0.3, 0.4} on the default CNN.
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def budget_runs():
    cfg = parse_config({
        "rounds": 8,
        "warmup": 3,
        "local_epochs": 1,
        "data": {"train": 1024, "test": 256, "reference": 64},
    })
    return {
        q: _run_cell(cfg, "proposed", q) for q in (0.1, 0.2, 0.3, 0.4)
    }


def test_criterion_3_budget_survival_and_digest_stability(budget_runs):
    net = build_cnn((3, 32, 32), 8, conv_channels=[8, 16], dense_units=[64],
                    rng=np.random.default_rng(0))
    comps = enumerate_components(net)
    total = net.param_count
    largest = max(c.parameter_count for c in comps) / total
    for q, run in budget_runs.items():
        mask = run["mask"]
        assert mask is not None
        fraction = mask.pruned_fraction
        assert q - largest < fraction <= q, (
            f"q={q}: pruned fraction {fraction:.4f} outside "
            f"({q - largest:.4f}, {q}]"
        )
        for layer_idx in {c.layer_index for c in comps}:
            layer_comps = [c for c in comps if c.layer_index == layer_idx]
            assert any(
                mask.bits[c.start : c.stop].any() for c in layer_comps
            ), f"q={q}: layer {layer_idx} fully pruned"
        digests = run["mask_digest"]
        assert sorted(digests) == list(range(3, 9))  # rounds 3..8
        assert len(set(digests.values())) == 1, (
            f"q={q}: mask digest changed after warmup"
        )


# --------------------------------------------------------------------------
# Criterion 4: hand-computed aggregation oracle and exhaustive AP
# enumeration for all label/score lists of length <= 6.
# --------------------------------------------------------------------------

def test_criterion_4_aggregate_oracle_and_exhaustive_ap():
    from fpsim.federation import aggregate

    out = aggregate([
        (0, np.array([0.0], np.float32), 1),
        (1, np.array([1.0], np.float32), 3),
    ])
    assert abs(float(out[0]) - 0.75) < 1e-7

    def brute_ap(scores, labels):
        order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
        hits, precisions = 0, []
        for rank, i in enumerate(order, start=1):
            if labels[i] == 1:
                hits += 1
                precisions.append(hits / rank)
        return sum(precisions) / len(precisions)

    checked = 0
    for n in range(1, 7):
        score_sets = set(itertools.product((0.0, 0.5, 1.0), repeat=n))
        score_sets.update(
            tuple(float(v) for v in perm)
            for perm in itertools.permutations(range(n))
        )
        for labels in itertools.product((0, 1), repeat=n):
            if not any(labels):
                continue
            lab = np.array(labels, np.float32)
            for scores in score_sets:
                got = average_precision(np.array(scores, np.float64), lab)
                want = brute_ap(list(scores), list(labels))
                assert got == pytest.approx(want, abs=1e-12), (scores,
                                                               labels)
                checked += 1
    assert checked > 50_000  # genuinely exhaustive, not a token sample


# --------------------------------------------------------------------------
# Criterion 5: at q=0.4 the steady-state per-round uplink is at most
# 0.63x the standard strategy's, measured from serialized payloads.
# --------------------------------------------------------------------------

def test_criterion_5_communication_reduction(default_runs):
    for seed in SEEDS:
        std = default_runs[("standard", 0.0, seed)]["records"]
        pruned = default_runs[("proposed", 0.4, seed)]["records"]
        warmup = 9
        std_uplink = {r.round: r.uplink_bytes for r in std}
        for rec in pruned:
            if rec.round > warmup:
                ratio = rec.uplink_bytes / std_uplink[rec.round]
                assert ratio <= 0.63, (
                    f"seed {seed} round {rec.round}: uplink ratio "
                    f"{ratio:.4f} > 0.63"
                )


# --------------------------------------------------------------------------
# Criterion 6: proposed and standard produce bit-identical global
# checkpoints for every round before the warmup round.
# --------------------------------------------------------------------------

def test_criterion_6_warmup_equivalence(default_runs):
    warmup = 9
    for seed in SEEDS:
        std = default_runs[("standard", 0.0, seed)]["param_sha"]
        for q in (0.2, 0.4):
            prop = default_runs[("proposed", q, seed)]["param_sha"]
            for rnd in range(1, warmup):
                assert std[rnd] == prop[rnd], (
                    f"seed {seed} q={q}: round {rnd} checkpoints differ"
                )
            assert std[warmup] != prop[warmup]  # mask applied at warmup


# --------------------------------------------------------------------------
# Criterion 7: final mAP of proposed (q=0.2) within 3 mAP points of
# standard, averaged over 5 seeds, on the default configuration.
# --------------------------------------------------------------------------

def test_criterion_7_recovery_within_three_points(default_runs):
    std = _final_map(default_runs, "standard", 0.0)
    prop = _final_map(default_runs, "proposed", 0.2)
    gap_points = abs(std - prop) * 100.0
    print(f"criterion 7: standard {std:.4f}, proposed(q=0.2) {prop:.4f}, "
          f"gap {gap_points:.2f} points")
    assert gap_points <= 3.0


# --------------------------------------------------------------------------
# Criterion 8: relevance-guided pruning does not underperform random
# pruning by more than 1 mAP point at q=0.4, averaged over 5 seeds.
# --------------------------------------------------------------------------

def test_criterion_8_relevance_not_worse_than_random(default_runs):
    prop = _final_map(default_runs, "proposed", 0.4)
    rand = _final_map(default_runs, "random", 0.4)
    print(f"criterion 8: proposed(q=0.4) {prop:.4f}, "
          f"random(q=0.4) {rand:.4f}")
    assert prop >= rand - 0.01


# --------------------------------------------------------------------------
# Criterion 9: identical config + seed give byte-identical records.csv
# across repeated runs and across thread-count settings.
# --------------------------------------------------------------------------

def test_criterion_9_end_to_end_determinism(tmp_path, monkeypatch):
    from fpsim.cli import main

    config = {
        "seed": 7,
        "clients": 4,
        "rounds": 5,
        "local_epochs": 1,
        "warmup": 2,
        "batch_size": 64,
        "strategies": ["standard", "proposed", "random"],
        "pruning_rates": [0.3],
        "data": {"train": 256, "test": 64, "reference": 16},
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(config))
    outputs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        monkeypatch.setenv("FPSIM_THREADS", threads)
        outdir = tmp_path / name
        assert main(["run", str(cfg_path), "--outdir", str(outdir)]) == 0
        outputs.append((outdir / "records.csv").read_bytes())
    assert outputs[0] == outputs[1], "repeat run differs"
    assert outputs[0] == outputs[2], "thread setting changed results"
