"""Seeded synthetic multi-label datasets, non-IID splits, dataset files.

Each class owns a fixed blocky spatial prototype; a sample is the clipped
sum of its positive classes' prototypes plus Gaussian noise. Client skew
comes from Dirichlet-weighted assignment: each client draws a class
preference vector and every sample picks a client in proportion to the
preference mass on its positive classes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DATASET_MAGIC = b"FPDS"
DATASET_VERSION = 1

# Entropy tags keeping the generator's independent streams apart.
_TAG_PROTO = 101
_TAG_LABELS = 102
_TAG_NOISE = 103
_TAG_PARTITION = 104


@dataclass
class Dataset:
    images: np.ndarray  # [N, C, H, W] float32 in [0, 1]
    labels: np.ndarray  # [N, L] float32 binary
    class_count: int

    def __post_init__(self):
        if len(self.images) < 1:
            raise ValueError("dataset must hold at least one sample")
        if len(self.images) != len(self.labels):
            raise ValueError("images/labels length mismatch")
        if not (self.labels.sum(axis=1) >= 1).all():
            raise ValueError("every sample needs at least one positive label")

    def __len__(self) -> int:
        return len(self.images)


@dataclass
class PartitionSpec:
    clients: int
    alpha: float  # Dirichlet concentration; small = strong label skew
    seed: int

    def __post_init__(self):
        if self.clients < 1:
            raise ValueError("client count must be >= 1")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def class_prototypes(
    num_classes: int, shape: tuple, seed: int, block: int = 4
) -> np.ndarray:
    """Fixed per-class blocky patterns in [0, 1], shape [L, C, H, W]."""
    c, h, w = shape
    rng = np.random.default_rng(np.random.SeedSequence((seed, _TAG_PROTO)))
    coarse = rng.uniform(0.0, 1.0, (num_classes, c, -(-h // block), -(-w // block)))
    full = np.repeat(np.repeat(coarse, block, axis=2), block, axis=3)
    return full[:, :, :h, :w].astype(np.float32)


def generate(
    n: int,
    num_classes: int,
    shape: tuple = (3, 32, 32),
    seed: int = 0,
    noise_sigma: float = 0.1,
    max_positives: int = 3,
) -> Dataset:
    """N samples: 1..max_positives positive classes each, image = clipped
    scaled prototype sum + N(0, sigma^2) noise."""
    if n < 1 or num_classes < 1:
        raise ValueError("n and num_classes must be >= 1")
    if not 1 <= max_positives <= num_classes:
        raise ValueError(
            f"max_positives must lie in [1, num_classes], got "
            f"{max_positives} of {num_classes}"
        )
    c, h, w = shape
    protos = class_prototypes(num_classes, shape, seed)
    lab_rng = np.random.default_rng(np.random.SeedSequence((seed, _TAG_LABELS)))
    noise_rng = np.random.default_rng(np.random.SeedSequence((seed, _TAG_NOISE)))
    labels = np.zeros((n, num_classes), np.float32)
    counts = lab_rng.integers(1, max_positives + 1, size=n)
    for i in range(n):
        pos = lab_rng.choice(num_classes, size=counts[i], replace=False)
        labels[i, pos] = 1.0
    # Scale so a full stack of positives still leaves headroom below 1.
    amp = np.float32(1.0 / max_positives)
    images = np.einsum("nl,lchw->nchw", labels, protos).astype(np.float32) * amp
    if noise_sigma > 0:
        images = images + noise_rng.normal(
            0.0, noise_sigma, images.shape
        ).astype(np.float32)
    images = np.clip(images, 0.0, 1.0).astype(np.float32)
    return Dataset(images=images, labels=labels, class_count=num_classes)


def partition(ds: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """Disjoint, exhaustive K-way split with Dirichlet label skew."""
    n, k = len(ds), spec.clients
    if n < k:
        raise ValueError(f"cannot split {n} samples across {k} clients")
    rng = np.random.default_rng(
        np.random.SeedSequence((spec.seed, _TAG_PARTITION))
    )
    prefs = rng.dirichlet(
        np.full(ds.class_count, spec.alpha, np.float64), size=k
    )  # [K, L]
    # Per-sample client weights: preference mass on the sample's positives.
    weights = ds.labels.astype(np.float64) @ prefs.T  # [N, K]
    weights /= weights.sum(axis=1, keepdims=True)
    u = rng.uniform(size=n)
    owner = (weights.cumsum(axis=1) < u[:, None]).sum(axis=1)
    # Nobody may come up empty: hand over one sample from the largest shard.
    for cid in range(k):
        if not (owner == cid).any():
            donor = np.bincount(owner, minlength=k).argmax()
            owner[np.nonzero(owner == donor)[0][-1]] = cid
    out = []
    for cid in range(k):
        idx = np.nonzero(owner == cid)[0]
        out.append(
            Dataset(
                images=ds.images[idx], labels=ds.labels[idx],
                class_count=ds.class_count,
            )
        )
    return out


def save_dataset(ds: Dataset, path: str):
    c, h, w = ds.images.shape[1:]
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(
            struct.pack(
                "<HIHHHH", DATASET_VERSION, len(ds), c, h, w, ds.class_count
            )
        )
        f.write(ds.images.astype("<f4").tobytes())
        packed = np.packbits(
            ds.labels.astype(np.uint8).reshape(-1), bitorder="little"
        )
        f.write(packed.tobytes())


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != DATASET_MAGIC:
        raise ValueError(f"{path}: not a dataset file (bad magic)")
    version, n, c, h, w, l = struct.unpack_from("<HIHHHH", raw, 4)
    if version != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset version {version}")
    off = 4 + struct.calcsize("<HIHHHH")
    img_bytes = 4 * n * c * h * w
    images = np.frombuffer(raw, "<f4", count=n * c * h * w, offset=off)
    images = images.reshape(n, c, h, w).astype(np.float32)
    if not np.all(np.isfinite(images)):
        raise ValueError(f"{path}: images contain NaN/Inf")
    packed = np.frombuffer(raw, np.uint8, offset=off + img_bytes)
    labels = np.unpackbits(packed, count=n * l, bitorder="little")
    labels = labels.reshape(n, l).astype(np.float32)
    return Dataset(images=images, labels=labels, class_count=l)
