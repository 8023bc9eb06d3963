"""Prunable components, one-time mask construction, and mask files.

A component is one output channel of a conv or dense layer together with
its bias — a contiguous slice of the canonical parameter vector. The
final parameterized layer (the classifier) is never a component: pruning
output logits would delete classes. Masks zero whole components chosen
greedily from the least relevant upward under a parameter budget
q * total_params, never exceeding the budget and never emptying a layer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from fpsim.nn.network import Network

MASK_MAGIC = b"FPMK"
MASK_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class Component:
    id: int
    layer_index: int
    channel_index: int
    start: int
    stop: int

    @property
    def parameter_count(self) -> int:
        return self.stop - self.start


def enumerate_components(net: Network) -> list[Component]:
    """One component per output channel of every conv/dense layer except
    the last parameterized layer, ordered by (layer, channel)."""
    param_layers = net.param_layers
    if not param_layers:
        return []
    classifier_li = param_layers[-1][0]
    out = []
    for li, ch, start, stop in net.parameter_index():
        if li == classifier_li:
            continue
        out.append(
            Component(
                id=len(out), layer_index=li, channel_index=ch,
                start=start, stop=stop,
            )
        )
    return out


@dataclass
class PruningMask:
    bits: np.ndarray  # uint8 per parameter, 1 = keep
    pruned_component_ids: list[int]
    rate_requested: float
    created_at_round: int
    _digest: int | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.bits.size

    @property
    def pruned_fraction(self) -> float:
        return float(np.count_nonzero(self.bits == 0) / self.bits.size)

    def bitmap(self) -> bytes:
        """LSB-first packed bitmap, ceil(n/8) bytes."""
        return np.packbits(self.bits, bitorder="little").tobytes()

    @property
    def digest(self) -> int:
        if self._digest is None:
            self._digest = fnv1a64(self.bitmap())
        return self._digest


def all_ones_mask(n: int) -> PruningMask:
    return PruningMask(
        bits=np.ones(n, np.uint8),
        pruned_component_ids=[],
        rate_requested=0.0,
        created_at_round=0,
    )


def build_mask(
    report,
    components: list[Component],
    q: float,
    total_params: int,
    created_at_round: int = 0,
) -> PruningMask:
    """Greedy selection of the least relevant components under the budget.

    ``report`` is anything with a ``scores`` mapping component id ->
    relevance (or such a mapping itself). Components are visited in
    ascending (relevance, id) order; one that would overflow the budget
    or empty its layer is skipped and the scan continues.
    """
    if not 0 <= q < 1:
        raise ValueError(f"pruning rate must lie in [0, 1), got {q}")
    scores = getattr(report, "scores", report)
    missing = [c.id for c in components if c.id not in scores]
    if missing:
        raise ValueError(f"report lacks scores for components {missing[:5]}")
    budget = q * total_params
    order = sorted(components, key=lambda c: (scores[c.id], c.id))
    alive_per_layer: dict[int, int] = {}
    for comp in components:
        alive_per_layer[comp.layer_index] = (
            alive_per_layer.get(comp.layer_index, 0) + 1
        )
    bits = np.ones(total_params, np.uint8)
    pruned_ids = []
    pruned_params = 0
    for comp in order:
        if pruned_params + comp.parameter_count > budget:
            continue
        if alive_per_layer[comp.layer_index] <= 1:
            continue
        bits[comp.start : comp.stop] = 0
        pruned_ids.append(comp.id)
        pruned_params += comp.parameter_count
        alive_per_layer[comp.layer_index] -= 1
    return PruningMask(
        bits=bits,
        pruned_component_ids=sorted(pruned_ids),
        rate_requested=float(q),
        created_at_round=int(created_at_round),
    )


def random_mask(
    components: list[Component],
    q: float,
    total_params: int,
    rng: np.random.Generator,
    created_at_round: int = 0,
) -> PruningMask:
    """Same budget and layer-survival rules, uniformly random ranking."""
    ranks = rng.permutation(len(components))
    scores = {comp.id: float(ranks[i]) for i, comp in enumerate(components)}
    return build_mask(scores, components, q, total_params, created_at_round)


def apply_mask(params: np.ndarray, mask: PruningMask) -> np.ndarray:
    """Elementwise product; masked coordinates come out exactly +0.0."""
    if params.size != mask.n:
        raise ValueError(f"params length {params.size} != mask length {mask.n}")
    return np.where(mask.bits == 1, params, np.float32(0.0)).astype(np.float32)


# ---- mask file --------------------------------------------------------------


def save_mask(mask: PruningMask, path: str):
    bitmap = mask.bitmap()
    with open(path, "wb") as f:
        f.write(MASK_MAGIC)
        f.write(
            struct.pack(
                "<HQfI", MASK_VERSION, mask.n, mask.rate_requested,
                mask.created_at_round,
            )
        )
        f.write(bitmap)
        f.write(struct.pack("<Q", mask.digest))


def load_mask(path: str) -> PruningMask:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MASK_MAGIC:
        raise ValueError(f"{path}: not a mask file (bad magic)")
    version, n, q, created = struct.unpack_from("<HQfI", raw, 4)
    if version != MASK_VERSION:
        raise ValueError(f"{path}: unsupported mask version {version}")
    off = 4 + struct.calcsize("<HQfI")
    nbytes = (n + 7) // 8
    bitmap = raw[off : off + nbytes]
    (digest,) = struct.unpack_from("<Q", raw, off + nbytes)
    if fnv1a64(bitmap) != digest:
        raise ValueError(f"{path}: mask bitmap digest mismatch")
    bits = np.unpackbits(
        np.frombuffer(bitmap, np.uint8), count=n, bitorder="little"
    ).astype(np.uint8)
    pruned_ids: list[int] = []  # component geometry is not stored in the file
    return PruningMask(
        bits=bits,
        pruned_component_ids=pruned_ids,
        rate_requested=float(q),
        created_at_round=int(created),
        _digest=digest,
    )
