"""Matrix-in-slots packing and the rotation-summation kernels.

A real n x m matrix is stored row-major in ciphertext slots, both
dimensions padded to powers of two with zeros.  Row sums, column sums,
masking and replication are built from slot rotations; every kernel
notes which slots hold garbage afterwards.  Datasets larger than one
ciphertext are split into full-height row-block chunks that the caller
aggregates with plain adds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import ckks
from .ckks import CtVector, FheParams, KeySet, Plaintext


@dataclass
class OpCounter:
    """Homomorphic operation tally threaded through the kernels."""

    mul: int = 0
    add: int = 0
    rot: int = 0

    def copy(self) -> "OpCounter":
        return OpCounter(self.mul, self.add, self.rot)


@dataclass
class MaskSpec:
    """First-column mask, optionally pre-scaled by a constant."""

    scale: float = 1.0
    scale_bits: int | None = None  # defaults to params.const_bits


@dataclass
class SlotMatrix:
    """n x m matrix packed row-major into one ciphertext's slots."""

    rows: int
    cols: int
    padded_rows: int
    padded_cols: int
    backing: Union[Plaintext, CtVector]

    @property
    def is_encrypted(self) -> bool:
        return isinstance(self.backing, CtVector)

    @property
    def params(self) -> FheParams:
        return self.backing.params

    def with_backing(self, backing) -> "SlotMatrix":
        return SlotMatrix(self.rows, self.cols, self.padded_rows,
                          self.padded_cols, backing)


def _pow2(x: int) -> int:
    return 1 << max(0, (x - 1)).bit_length()


def layout_for(params: FheParams, rows: int, cols: int,
               full_height: bool = False) -> tuple[int, int]:
    """Padded (rows, cols) for one ciphertext; raises if over budget."""
    if rows <= 0 or cols <= 0:
        raise ValueError("matrix must be nonempty")
    pr, pc = _pow2(rows), _pow2(cols)
    if pr * pc > params.slot_count:
        raise ValueError(
            f"{rows}x{cols} needs {pr * pc} slots > {params.slot_count}; "
            "split into row-block chunks")
    if full_height:
        pr = params.slot_count // pc
        if rows > pr:
            raise ValueError("full-height layout cannot hold this many rows")
    return pr, pc


def pack(params: FheParams, m: np.ndarray, scale_exp: int | None = None,
         level: int | None = None, full_height: bool = False) -> SlotMatrix:
    """Encode a matrix into a single plaintext (row-major, zero padding)."""
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    rows, cols = m.shape
    pr, pc = layout_for(params, rows, cols, full_height)
    flat = np.zeros(pr * pc)
    flat.reshape(pr, pc)[:rows, :cols] = m
    pt = ckks.encode(params, flat, scale_exp, level)
    return SlotMatrix(rows, cols, pr, pc, pt)


def encrypt_matrix(sm: SlotMatrix, keys: KeySet, rng=None) -> SlotMatrix:
    if sm.is_encrypted:
        raise ValueError("already encrypted")
    return sm.with_backing(ckks.encrypt(sm.backing, keys, rng))


def unpack(sm: SlotMatrix, keys: KeySet | None = None,
           value_bits: int = 14) -> np.ndarray:
    """Logical matrix values (decrypting first when backed by a ciphertext)."""
    if sm.is_encrypted:
        if keys is None:
            raise ValueError("decryption key required")
        flat = ckks.decrypt(sm.backing, keys, value_bits=value_bits)
    else:
        flat = ckks.decode(sm.backing)
    grid = flat[: sm.padded_rows * sm.padded_cols].reshape(
        sm.padded_rows, sm.padded_cols)
    return grid[: sm.rows, : sm.cols].copy()


def transpose_plain(m: np.ndarray) -> np.ndarray:
    """Plaintext transpose; packing this equals packing m.T by definition."""
    return np.asarray(m).T.copy()


def pack_chunks(params: FheParams, m: np.ndarray,
                scale_exp: int | None = None,
                level: int | None = None) -> list[SlotMatrix]:
    """Split a tall matrix into full-height row-block chunks.

    The row count is padded to a power of two first, so the chunk count
    is padded_rows / rows_per_chunk and trailing chunks may be all zero;
    per-chunk kernels then see identical layouts.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    rows, cols = m.shape
    pc = _pow2(cols)
    per = params.slot_count // pc
    total = max(_pow2(rows), per)
    chunks = []
    for start in range(0, total, per):
        block = m[start: min(start + per, rows)]
        if block.shape[0] == 0:
            block = np.zeros((1, cols))
        sm = pack(params, block, scale_exp, level, full_height=True)
        chunks.append(sm)
    return chunks


def unpack_chunks(chunks: list[SlotMatrix], rows: int,
                  keys: KeySet | None = None) -> np.ndarray:
    parts = [unpack(c, keys) for c in chunks]
    out = np.vstack([np.pad(p, ((0, c.padded_rows - p.shape[0]), (0, 0)))
                     for p, c in zip(parts, chunks)])
    return out[:rows]


def pack_gh_pairs(params: FheParams, g: np.ndarray, h: np.ndarray,
                  scale_exp: int | None = None,
                  level: int | None = None) -> SlotMatrix:
    """Interleave gradient/hessian vectors as an n x 2 packed matrix, so a
    single ciphertext add aggregates both statistics."""
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.shape != h.shape or g.ndim != 1:
        raise ValueError("g and h must be equal-length vectors")
    return pack(params, np.stack([g, h], axis=1), scale_exp, level)


# -- rotation-summation kernels ----------------------------------------------


def _require_ct(sm: SlotMatrix) -> CtVector:
    if not sm.is_encrypted:
        raise ValueError("kernel requires an encrypted matrix")
    return sm.backing


def rotsum_ct(ct: CtVector, first_step: int, last_step: int, keys: KeySet,
              counter: OpCounter | None = None) -> CtVector:
    """x += rotate(x, s) for s doubling from first_step through last_step."""
    s = first_step
    while s <= last_step:
        ct = ckks.add(ct, ckks.rotate(ct, s, keys))
        if counter is not None:
            counter.add += 1
            counter.rot += 1
        s *= 2
    return ct


def row_sum_rotate(sm: SlotMatrix, keys: KeySet,
                   counter: OpCounter | None = None) -> SlotMatrix:
    """Per-row sums into column 0; columns 1.. hold garbage afterwards."""
    ct = _require_ct(sm)
    if sm.padded_cols > 1:
        ct = rotsum_ct(ct, 1, sm.padded_cols // 2, keys, counter)
    return sm.with_backing(ct)


def col_sum_rotate(sm: SlotMatrix, keys: KeySet,
                   counter: OpCounter | None = None) -> SlotMatrix:
    """Column sums replicated into every row; no garbage slots.

    Requires the full-height layout (padded_rows * padded_cols =
    slot_count) so the rotation wrap-around closes the cyclic sum.
    """
    ct = _require_ct(sm)
    if sm.padded_rows * sm.padded_cols != sm.params.slot_count:
        raise ValueError("column summation needs a full-height layout")
    if sm.padded_rows > 1:
        ct = rotsum_ct(ct, sm.padded_cols,
                       sm.padded_cols * (sm.padded_rows // 2), keys, counter)
    return sm.with_backing(ct)


def first_column_mask(sm: SlotMatrix, scale: float = 1.0) -> np.ndarray:
    mask = np.zeros(sm.padded_rows * sm.padded_cols)
    mask[:: sm.padded_cols] = scale
    return mask


def mask_first_column(sm: SlotMatrix, spec: MaskSpec | float,
                      counter: OpCounter | None = None) -> SlotMatrix:
    """Scale column 0 by a constant and zero every other column.

    One cmult at p_c bits plus a p_c rescale, so the working scale is
    unchanged while the level drops by one.
    """
    ct = _require_ct(sm)
    if not isinstance(spec, MaskSpec):
        spec = MaskSpec(scale=float(spec))
    bits = spec.scale_bits if spec.scale_bits is not None else \
        sm.params.const_bits
    masked = ckks.cmult(ct, first_column_mask(sm, spec.scale), bits)
    if counter is not None:
        counter.mul += 1
    return sm.with_backing(ckks.rescale(masked, bits))


def replicate_first_column(sm: SlotMatrix, keys: KeySet,
                           counter: OpCounter | None = None) -> SlotMatrix:
    """Copy column 0 across the row; requires other columns already zero."""
    ct = _require_ct(sm)
    s = 1
    while s < sm.padded_cols:
        ct = ckks.add(ct, ckks.rotate(ct, -s, keys))
        if counter is not None:
            counter.add += 1
            counter.rot += 1
        s *= 2
    return sm.with_backing(ct)
