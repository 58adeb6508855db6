"""Encrypted gradient-descent kernels for logistic regression.

Two pipelines over slot-packed batches:

* baseline: row-major packing; inner products by an in-row rotation sum
  whose garbage slots are cleared with a mask multiply, then refilled,
  then the weighted rows are summed down the sample axis.  Four
  pipeline multiplications, five levels.
* improved: the batch is transposed in plaintext before encryption, so
  the inner-product sum runs down the feature axis where the cyclic
  rotation ladder leaves no garbage.  The mask multiply is deferred to
  the end and fused with the learning-rate constant.  Three pipeline
  multiplications, four levels.

Both evaluate the affine sigmoid surrogate 0.5 + u/4 between the two
data multiplications (one constant multiply, two constant additions,
one level).  The instrumented operation counter runs the same pipeline
code against a recording engine; its conventions are documented on
count_ops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ckks import cipher
from ..ckks.keys import KeySet
from .core import SURROGATE_SLOPE, LrConfig, quantized_rate

BASELINE_LEVELS = 5
IMPROVED_LEVELS = 4


def _pow2(x: int) -> int:
    return 1 << max(0, x - 1).bit_length() if x > 1 else 1


@dataclass
class PackedMatrix:
    """Batch matrix packed into full-slot ciphertext chunks.

    layout "rows": row-major n x width blocks, slots//width rows per
    chunk.  layout "cols": transposed width x k blocks, slots//width
    samples per chunk.  width is the padded feature count (bias
    included) and is a power of two.
    """

    chunks: list
    n: int
    width: int
    layout: str
    keys: KeySet

    @property
    def per_chunk(self) -> int:
        return self.keys.params.slot_count // self.width

    @property
    def level(self) -> int:
        return self.chunks[0].level


def pack_rows(Z: np.ndarray, keys: KeySet, level: int = BASELINE_LEVELS,
              rng=None) -> PackedMatrix:
    """Encrypt a batch row-major, one width-aligned row per slot group."""
    Z = np.atleast_2d(np.asarray(Z, float))
    n, d = Z.shape
    width = _pow2(d)
    slots = keys.params.slot_count
    per = slots // width
    chunks = []
    for base in range(0, n, per):
        block = np.zeros((per, width))
        rows = Z[base:base + per]
        block[:len(rows), :d] = rows
        chunks.append(_encrypt_vec(block.ravel(), keys, level, rng))
    return PackedMatrix(chunks, n, width, "rows", keys)


def pack_cols(Z: np.ndarray, keys: KeySet, level: int = IMPROVED_LEVELS,
              rng=None) -> PackedMatrix:
    """Encrypt a batch transposed, one feature per slot group."""
    Z = np.atleast_2d(np.asarray(Z, float))
    n, d = Z.shape
    width = _pow2(d)
    per = keys.params.slot_count // width
    chunks = []
    for base in range(0, n, per):
        block = np.zeros((width, per))
        cols = Z[base:base + per].T
        block[:d, :cols.shape[1]] = cols
        chunks.append(_encrypt_vec(block.ravel(), keys, level, rng))
    return PackedMatrix(chunks, n, width, "cols", keys)


def replicate_beta(beta: np.ndarray, width: int, keys: KeySet,
                   level: int, layout: str, rng=None):
    """Encrypt a weight vector replicated to the batch layout."""
    beta = np.asarray(beta, float)
    pad = np.zeros(width)
    pad[:len(beta)] = beta
    per = keys.params.slot_count // width
    vec = np.tile(pad, per) if layout == "rows" else np.repeat(pad, per)
    return _encrypt_vec(vec, keys, level, rng)


def _encrypt_vec(values, keys, level, rng):
    from ..ckks.encoding import encode
    pt = encode(keys.params, values, keys.params.scale_bits, level)
    return cipher.encrypt(pt, keys, rng)


def decrypt_beta(ct, keys: KeySet, width: int, layout: str,
                 count: int | None = None) -> np.ndarray:
    """Read the weight vector back out of a replicated-layout cipher."""
    slots = cipher.decrypt(ct, keys)
    per = keys.params.slot_count // width
    vec = slots[:width] if layout == "rows" else slots[::per]
    return vec[:count] if count else vec


def beta_replication_error(ct, keys: KeySet, width: int,
                           layout: str) -> float:
    """Max spread across the copies that should all hold the weights."""
    slots = cipher.decrypt(ct, keys)
    per = keys.params.slot_count // width
    grid = (slots.reshape(per, width) if layout == "rows"
            else slots.reshape(width, per).T)
    return float(np.abs(grid - grid[0]).max())


# -- shared pipeline structure ------------------------------------------------


def _pipeline_baseline(eng, target):
    h = eng.mult_beta()
    h = eng.rescale(h, "p")
    h = eng.ladder_contig(h, eng.feature_steps, +1)
    h = eng.cmult(h, eng.first_col_mask(), counted=True)
    h = eng.rescale(h, "pc")
    h = eng.ladder_contig(h, eng.feature_steps, -1)
    h = eng.sigmoid_stage(h, target)
    h = eng.rescale(h, "pc")
    h = eng.mult_z(h)
    h = eng.rescale(h, "p")
    h = eng.ladder_stride_sum(h, eng.sample_steps)
    h = eng.fold(h)
    h = eng.cmult(h, eng.rate_all_slots(), counted=True)
    h = eng.rescale(h, "pc")
    return eng.add_beta(h)


def _pipeline_improved(eng, target):
    h = eng.mult_beta()
    h = eng.rescale(h, "p")
    h = eng.ladder_stride_sum(h, eng.feature_steps)
    h = eng.sigmoid_stage(h, target)
    h = eng.rescale(h, "pc")
    h = eng.mult_z(h)
    h = eng.rescale(h, "p")
    h = eng.ladder_contig(h, eng.sample_steps, +1)
    h = eng.fold(h)
    h = eng.cmult(h, eng.rate_first_col_mask(), counted=True, bits="p")
    h = eng.rescale(h, "p")
    h = eng.ladder_contig(h, eng.sample_steps, -1)
    return eng.add_beta(h)


class _CipherEngine:
    """Executes the pipeline on real ciphertext chunks."""

    def __init__(self, z: PackedMatrix, beta, rate: float):
        self.z = z
        self.beta = beta
        self.keys = z.keys
        self.params = z.keys.params
        self.rate = rate
        self.width = z.width
        self.per = z.per_chunk
        self.feature_steps = self.width.bit_length() - 1
        self.sample_steps = self.per.bit_length() - 1
        if z.layout == "rows":
            self.contig_base = 1          # in-row moves
            self.stride_base = self.width  # down the sample axis
        else:
            self.contig_base = 1          # along the sample axis
            self.stride_base = self.per   # down the feature axis

    def mult_beta(self):
        return [cipher.mult(c, self.beta, self.keys) for c in self.z.chunks]

    def mult_z(self, h):
        out = []
        for c, s in zip(self.z.chunks, h):
            zc = cipher.drop_to_level(c, s.level)
            out.append(cipher.mult(s, zc, self.keys))
        return out

    def rescale(self, h, kind):
        bits = (self.params.scale_bits if kind == "p"
                else self.params.const_bits)
        return [cipher.rescale(c, bits) for c in h]

    def cmult(self, h, values, counted=False, bits="pc"):
        # the learning-rate constant lives on the 2^-const_bits grid; the
        # improved path encodes it at full scale precision so the later
        # fill ladder does not replicate coarse rescale noise
        nbits = (self.params.const_bits if bits == "pc"
                 else self.params.scale_bits)
        return [cipher.cmult(c, v, nbits) for c, v in zip(h, values)]

    def ladder_contig(self, h, steps, sign):
        for t in range(steps):
            amt = sign * self.contig_base * (1 << t)
            h = [cipher.add(c, cipher.rotate(c, amt, self.keys)) for c in h]
        return h

    def ladder_stride_sum(self, h, steps):
        for t in range(steps):
            amt = self.stride_base * (1 << t)
            h = [cipher.add(c, cipher.rotate(c, amt, self.keys)) for c in h]
        return h

    def fold(self, h):
        acc = h[0]
        for c in h[1:]:
            acc = cipher.add(acc, c)
        return [acc]

    def sigmoid_stage(self, h, target):
        out = []
        for i, c in enumerate(h):
            s = cipher.cmult(c, SURROGATE_SLOPE, self.params.const_bits)
            s = cipher.add_plain(s, 0.5)
            if target is None:
                s = cipher.rsub_plain(s, 1.0)
            else:
                s = cipher.sub_plain(s, target[i])
            out.append(s)
        return out

    def first_col_mask(self):
        mask = np.zeros(self.params.slot_count)
        mask[::self.width] = 1.0
        return [mask] * len(self.z.chunks)

    def rate_all_slots(self):
        return [self.rate]

    def rate_first_col_mask(self):
        mask = np.zeros(self.params.slot_count)
        mask[::self.per] = self.rate
        return [mask]

    def add_beta(self, h):
        base = cipher.drop_to_level(self.beta, h[0].level)
        return cipher.add(base, h[0])


class _CountEngine:
    """Records the operation profile of one pipeline run.

    Conventions: mul tallies the pipeline's own multiplications (the
    two data products, the garbage mask, the learning-rate constant);
    the sigmoid surrogate's constant factor belongs to polynomial
    evaluation and is excluded, though its additions and its rescale
    are counted.  rot tallies slot rotations plus the relinearization
    key switch of each ciphertext product, which uses the same
    primitive.  depth tallies rescales.
    """

    def __init__(self, n: int, f: int):
        self.feature_steps = _pow2(f + 1).bit_length() - 1
        self.sample_steps = _pow2(n).bit_length() - 1
        self.counts = {"mul": 0, "add": 0, "rot": 0, "depth": 0}

    def mult_beta(self, h=None):
        self.counts["mul"] += 1
        self.counts["rot"] += 1
        return h

    def mult_z(self, h):
        return self.mult_beta(h)

    def rescale(self, h, kind):
        self.counts["depth"] += 1
        return h

    def cmult(self, h, values, counted=False, bits="pc"):
        if counted:
            self.counts["mul"] += 1
        return h

    def ladder_contig(self, h, steps, sign):
        self.counts["rot"] += steps
        self.counts["add"] += steps
        return h

    def ladder_stride_sum(self, h, steps):
        return self.ladder_contig(h, steps, +1)

    def fold(self, h):
        return h

    def sigmoid_stage(self, h, target):
        self.cmult(h, None, counted=False)
        self.counts["add"] += 2
        return h

    def first_col_mask(self):
        return None

    def rate_all_slots(self):
        return None

    def rate_first_col_mask(self):
        return None

    def add_beta(self, h):
        self.counts["add"] += 1
        return h


def _grad_step(z, ct_beta, config, t, target, pipeline, levels):
    if z.chunks[0].level < levels:
        raise ValueError(
            f"level exhausted: need {levels}, have {z.chunks[0].level}")
    rate = quantized_rate(config.alpha(t), z.n)
    if target is not None:
        rate = -rate
        per = z.per_chunk
        padded = np.zeros(len(z.chunks) * per)
        padded[:z.n] = np.asarray(target, float)
        if z.layout == "rows":
            target = [np.repeat(padded[i * per:(i + 1) * per], z.width)
                      for i in range(len(z.chunks))]
        else:
            target = [np.tile(padded[i * per:(i + 1) * per], z.width)
                      for i in range(len(z.chunks))]
    eng = _CipherEngine(z, ct_beta, rate)
    return pipeline(eng, target)


def grad_step_baseline(ct_z: PackedMatrix, ct_beta, config: LrConfig,
                       t: int = 0, target=None):
    """One gradient update on a row-major batch; consumes five levels.

    With target=None the batch rows are label-folded and the update
    ascends; with a 0/1 target vector the rows are raw features and the
    residual step descends.
    """
    if ct_z.layout != "rows":
        raise ValueError("baseline step needs row-major packing")
    return _grad_step(ct_z, ct_beta, config, t, target,
                      _pipeline_baseline, BASELINE_LEVELS)


def grad_step_improved(ct_zT: PackedMatrix, ct_betaT, config: LrConfig,
                       t: int = 0, target=None):
    """One gradient update on a transposed batch; consumes four levels."""
    if ct_zT.layout != "cols":
        raise ValueError("improved step needs transposed packing")
    return _grad_step(ct_zT, ct_betaT, config, t, target,
                      _pipeline_improved, IMPROVED_LEVELS)


def count_ops(procedure: str, n: int, f: int) -> dict:
    """Operation profile of one gradient step, from a symbolic dry run
    of the same pipeline code the ciphertext kernels execute.

    For the improved procedure the add and rotation totals equal
    log2(n*(f+1)) + log2(n) + 3 and + 2 at power-of-two shapes.  The
    baseline's ladder structure gives log2(f+1) + log2(n*(f+1)) + 3
    and + 2: its mask refill runs along the feature axis, so the two
    totals coincide only when n = f + 1.
    """
    eng = _CountEngine(n, f)
    if procedure == "baseline":
        _pipeline_baseline(eng, None)
    elif procedure == "improved":
        _pipeline_improved(eng, None)
    else:
        raise ValueError("procedure must be 'baseline' or 'improved'")
    return dict(eng.counts)
