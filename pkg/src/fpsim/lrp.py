"""Relevance propagation through a cached forward pass.

Output relevance starts as the raw logits and is redistributed backwards
layer by layer: for a parameterized layer each input cell k receives

    R_k = sum_j (a_k * w_kj / d_j) * R_j,
    d_j = sum_k a_k * w_kj + b_j + eps * sign(...)

with sign(0) := +1 and 0/0 := 0. ReLU passes relevance through unchanged,
max pooling routes it to the winning cell (ties already resolved to the
lowest flat index by the forward pass), global average pooling behaves as
a linear layer with uniform 1/(H*W) weights, flatten only reshapes.

Denominators and redistribution sums reuse the kernel backend (float64
accumulation, fixed order), so relevance values are bit-identical across
backends and independent of batch composition; the relevance chain itself
is carried in float64.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from fpsim import _kernels as K
from fpsim.nn.layers import (
    Conv2D,
    Dense,
    Flatten,
    GlobalAvgPool,
    MaxPool2D,
    MissingCacheError,
    ReLU,
)
from fpsim.nn.network import Network
from fpsim.pruning import Component, enumerate_components

BIAS_MODES = ("denominator", "exclude")


@dataclass
class ReferenceSet:
    """Server-held samples over which component relevance is averaged."""

    images: np.ndarray  # [M, C, H, W] float32
    labels: np.ndarray  # [M, L] binary

    def __post_init__(self):
        if len(self.images) < 1:
            raise ValueError("reference set must hold at least one sample")
        if len(self.images) != len(self.labels):
            raise ValueError("images/labels length mismatch")


@dataclass
class RelevanceReport:
    """Mean per-component relevance over a reference set."""

    scores: dict[int, float]  # component id -> mean relevance
    sample_count: int
    components: list[Component]

    def to_csv(self, path: str):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(
                ["component_id", "layer_index", "channel_index", "mean_relevance"]
            )
            for comp in self.components:
                wr.writerow(
                    [
                        comp.id,
                        comp.layer_index,
                        comp.channel_index,
                        repr(self.scores[comp.id]),
                    ]
                )


def _stabilized(z32: np.ndarray, epsilon: float) -> np.ndarray:
    z = z32.astype(np.float64)
    sign = np.where(z >= 0.0, 1.0, -1.0)
    return z + epsilon * sign


def _safe_ratio(rel: np.ndarray, denom: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rel)
    np.divide(rel, denom, out=out, where=denom != 0.0)
    return out


def propagate(net: Network, out_relevance: np.ndarray, epsilon: float,
              bias_mode: str = "denominator") -> list[np.ndarray]:
    """Relevance at every layer boundary, output boundary last.

    Returns a list of len(layers)+1 float64 arrays: entry l holds the
    relevance at the input of layer l (entry 0 is the input image
    relevance), the final entry is ``out_relevance`` itself. The network
    must have been run with forward(x, cache=True) on the same batch.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if bias_mode not in BIAS_MODES:
        raise ValueError(f"bias_mode must be one of {BIAS_MODES}")
    rel = np.asarray(out_relevance, np.float64)
    rmap: list[np.ndarray | None] = [None] * (len(net.layers) + 1)
    rmap[len(net.layers)] = rel
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        if layer.cached_input is None:
            raise MissingCacheError(
                f"layer {li} ({layer.kind}) has no cached activations; "
                "run forward(batch, cache=True) first"
            )
        a = layer.cached_input
        if isinstance(layer, Dense):
            bias = layer.bias if bias_mode == "denominator" else np.zeros_like(
                layer.bias
            )
            z = K.dense_fwd(a, layer.weights, bias)
            msg = _safe_ratio(rel, _stabilized(z, epsilon)).astype(np.float32)
            back = K.dense_bwd_input(msg, layer.weights)
            rel = a.astype(np.float64) * back.astype(np.float64)
        elif isinstance(layer, Conv2D):
            bias = layer.bias if bias_mode == "denominator" else np.zeros_like(
                layer.bias
            )
            z = K.conv2d_fwd(a, layer.weights, bias, layer.pad)
            msg = _safe_ratio(rel, _stabilized(z, epsilon)).astype(np.float32)
            back = K.conv2d_bwd_input(
                msg, layer.weights, layer.pad, a.shape[2], a.shape[3]
            )
            rel = a.astype(np.float64) * back.astype(np.float64)
        elif isinstance(layer, ReLU):
            pass  # identity routing: output cells map 1:1 onto input cells
        elif isinstance(layer, MaxPool2D):
            bsz, c, h, w = a.shape
            routed = np.zeros((bsz, c, h * w), np.float64)
            np.put_along_axis(
                routed,
                layer.cached_idx.reshape(bsz, c, -1),
                rel.reshape(bsz, c, -1),
                axis=2,
            )
            rel = routed.reshape(a.shape)
        elif isinstance(layer, GlobalAvgPool):
            _, _, h, w = a.shape
            z = a.astype(np.float64).mean(axis=(2, 3)).astype(np.float32)
            msg = _safe_ratio(rel, _stabilized(z, epsilon))
            rel = a.astype(np.float64) * (msg[:, :, None, None] / (h * w))
        elif isinstance(layer, Flatten):
            rel = rel.reshape(a.shape)
        else:
            raise TypeError(f"no relevance rule for layer kind {layer.kind!r}")
        rmap[li] = rel
    return rmap


def _component_scores(
    rmap: list[np.ndarray], components: list[Component]
) -> np.ndarray:
    """Per-sample component scores, shape [batch, n_components] (float64)."""
    bsz = rmap[0].shape[0]
    out = np.empty((bsz, len(components)), np.float64)
    for ci, comp in enumerate(components):
        r_out = rmap[comp.layer_index + 1]  # relevance at the layer's output
        channel = r_out[:, comp.channel_index]
        out[:, ci] = channel.reshape(bsz, -1).sum(axis=1)
    return out


def component_relevance(
    rmap: list[np.ndarray], net: Network
) -> dict[int, float]:
    """Single-sample relevance per component: sum over that channel's
    output activation cells."""
    comps = enumerate_components(net)
    if rmap[0].shape[0] != 1:
        raise ValueError("component_relevance expects a single-sample map")
    scores = _component_scores(rmap, comps)
    return {comp.id: float(scores[0, ci]) for ci, comp in enumerate(comps)}


def component_relevance_report(
    net: Network,
    ref: ReferenceSet,
    epsilon: float,
    bias_mode: str = "denominator",
    logits_mode: str = "full",
    batch_size: int = 64,
) -> RelevanceReport:
    """Mean component relevance over the reference set.

    logits_mode "full" initializes output relevance with the raw logit
    vector; "positive" keeps only the logits of ground-truth-positive
    classes (the rest start at zero).
    """
    if logits_mode not in ("full", "positive"):
        raise ValueError("logits_mode must be 'full' or 'positive'")
    comps = enumerate_components(net)
    m = len(ref.images)
    total = np.zeros(len(comps), np.float64)
    for start in range(0, m, batch_size):
        batch = ref.images[start : start + batch_size]
        logits = net.forward(batch, cache=True)
        out_rel = logits.astype(np.float64)
        if logits_mode == "positive":
            out_rel = out_rel * ref.labels[start : start + batch_size]
        rmap = propagate(net, out_rel, epsilon, bias_mode)
        total += _component_scores(rmap, comps).sum(axis=0)
    scores = {comp.id: float(total[ci] / m) for ci, comp in enumerate(comps)}
    return RelevanceReport(scores=scores, sample_count=m, components=comps)
