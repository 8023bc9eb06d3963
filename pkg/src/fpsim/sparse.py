"""Wire formats for masked model exchange, with exact byte accounting.

Payload layout: 16-byte header (round u32, value count u32, mask digest
u64, little-endian) followed by the surviving parameter values as f32 —
16 + 4k bytes for k survivors. A dense send is the same payload under an
all-ones mask. The mask itself travels once as a 16-byte header (round
u32, bit count u32, digest u64) plus the LSB-first bitmap.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from fpsim.pruning import PruningMask, fnv1a64

_HEADER = struct.Struct("<IIQ")

HEADER_BYTES = _HEADER.size  # 16


class IntegrityError(ValueError):
    """A masked coordinate held a nonzero value at encode time."""


class ProtocolError(ValueError):
    """Payload and mask disagree (digest or count mismatch)."""


@dataclass
class SparsePayload:
    round: int
    values: np.ndarray  # float32, survivors in canonical order
    mask_digest: int

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(self.round, self.values.size, self.mask_digest)
        return head + self.values.astype("<f4").tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SparsePayload":
        rnd, count, digest = _HEADER.unpack_from(raw, 0)
        values = np.frombuffer(
            raw, dtype="<f4", count=count, offset=HEADER_BYTES
        ).astype(np.float32)
        return cls(round=rnd, values=values, mask_digest=digest)


def encode_sparse(
    params: np.ndarray, mask: PruningMask, round: int
) -> tuple[SparsePayload, int]:
    """Surviving values of an already-masked vector, plus its wire size."""
    if params.size != mask.n:
        raise ValueError(f"params length {params.size} != mask length {mask.n}")
    dropped = params[mask.bits == 0]
    if dropped.size and np.any(dropped != 0.0):
        raise IntegrityError(
            "params carry nonzero values at masked coordinates; "
            "apply the mask before encoding"
        )
    values = np.ascontiguousarray(params[mask.bits == 1])
    payload = SparsePayload(round=int(round), values=values,
                            mask_digest=mask.digest)
    return payload, HEADER_BYTES + 4 * values.size


def decode_sparse(payload: SparsePayload, mask: PruningMask) -> np.ndarray:
    """Full parameter vector, zeros at masked coordinates."""
    if payload.mask_digest != mask.digest:
        raise ProtocolError(
            f"payload mask digest {payload.mask_digest:#x} does not match "
            f"the local mask {mask.digest:#x}"
        )
    keep = mask.bits == 1
    if payload.values.size != int(np.count_nonzero(keep)):
        raise ProtocolError(
            f"payload holds {payload.values.size} values, mask keeps "
            f"{int(np.count_nonzero(keep))}"
        )
    out = np.zeros(mask.n, np.float32)
    out[keep] = payload.values
    return out


def mask_wire_bytes(mask: PruningMask, round: int) -> tuple[bytes, int]:
    """One-time mask transmission: header + LSB-first bitmap."""
    bitmap = mask.bitmap()
    head = _HEADER.pack(round, mask.n, mask.digest)
    wire = head + bitmap
    return wire, len(wire)


def mask_from_wire(raw: bytes) -> tuple[int, np.ndarray]:
    """Round and bit vector recovered from a mask wire message."""
    rnd, n, digest = _HEADER.unpack_from(raw, 0)
    bitmap = raw[HEADER_BYTES : HEADER_BYTES + (n + 7) // 8]
    if fnv1a64(bitmap) != digest:
        raise ProtocolError("mask bitmap digest mismatch")
    bits = np.unpackbits(
        np.frombuffer(bitmap, np.uint8), count=n, bitorder="little"
    ).astype(np.uint8)
    return rnd, bits
