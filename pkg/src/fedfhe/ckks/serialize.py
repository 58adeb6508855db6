"""Ciphertext wire format.

Layout: magic "FHE1", 32-byte parameter digest, level u8, scale exponent
u16 LE, limb count u32 LE, then the RNS limbs as little-endian u64 words
in polynomial-major order (all limbs of c0, then all limbs of c1).
Limbs are serialized in coefficient representation so the bytes do not
depend on any transform-domain convention.
"""

from __future__ import annotations

import struct

import numpy as np

from .cipher import CtVector
from .params import FheParams

MAGIC = b"FHE1"
HEADER = struct.Struct("<4s32sBHI")


def serialize_ct(ct: CtVector) -> bytes:
    params = ct.params
    idx = np.arange(ct.limbs)
    body = bytearray()
    for poly in range(2):
        coeffs = params.plan.inverse(ct.data[poly], idx)
        body += coeffs.astype("<u8").tobytes()
    head = HEADER.pack(MAGIC, params.digest, ct.level, ct.scale_exp, ct.limbs)
    return head + bytes(body)


def deserialize_ct(blob: bytes, params: FheParams) -> CtVector:
    magic, digest, level, scale_exp, limbs = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ValueError("bad magic")
    if digest != params.digest:
        raise ValueError("ciphertext was produced under different parameters")
    if limbs != level + 1:
        raise ValueError("inconsistent limb count")
    n = params.ring_degree
    expect = HEADER.size + 2 * limbs * n * 8
    if len(blob) != expect:
        raise ValueError(f"bad length: {len(blob)} != {expect}")
    raw = np.frombuffer(blob, dtype="<u8", offset=HEADER.size)
    coeffs = raw.reshape(2, limbs, n).astype(np.uint64)
    idx = np.arange(limbs)
    data = np.stack([params.plan.forward(coeffs[0], idx),
                     params.plan.forward(coeffs[1], idx)])
    return CtVector(params, data, level, scale_exp)


def ct_nbytes(params: FheParams, level: int) -> int:
    """Serialized size of a ciphertext at the given level."""
    return HEADER.size + 2 * (level + 1) * params.ring_degree * 8
