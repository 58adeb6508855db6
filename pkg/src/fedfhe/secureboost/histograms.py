"""Encrypted gradient-histogram aggregation on packed gh pairs.

The label holder packs (g_i, h_i) interleaved into slot pairs and ships
one low-level ciphertext per chunk of instances.  A feature holder
replicates each chunk across slot segments once, then per histogram
entry masks one segment with its bucket-and-node indicator and runs a
single stride-2 rotation ladder, which leaves every segment's (G, H)
sums in the segment's first slot pair.  Cost per node is one plaintext
mask multiply plus log2(segment)/2 rotations per ciphertext chain, all
on 2-3 limb ciphertexts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ckks import cipher
from ..ckks.keys import KeySet
from ..packed import OpCounter, rotsum_ct

GH_LEVEL = 2  # mask multiply consumes one level, decrypt happens at 1


@dataclass
class GhCipher:
    """Packed encrypted gradient pairs, replicated across slot segments."""

    cts: list                 # one ciphertext per instance chunk
    n: int                    # total instances
    per_chunk: int            # instances per chunk
    seg_size: int             # slots per segment (covers 2*per_chunk)
    n_segments: int

    @property
    def params(self):
        return self.cts[0].params


def _pow2_at_least(x: int) -> int:
    p = 1
    while p < x:
        p <<= 1
    return p


def encrypt_gh_pairs(g: np.ndarray, h: np.ndarray, keys: KeySet,
                     rng=None, level: int = GH_LEVEL) -> GhCipher:
    """Encrypt interleaved (g, h) pairs chunked to the slot budget."""
    from ..ckks.encoding import encode

    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if g.shape != h.shape or g.ndim != 1:
        raise ValueError("g/h must be equal-length vectors")
    params = keys.params
    slots = params.slot_count
    n = g.size
    per_chunk = min(n, slots // 2)
    seg = _pow2_at_least(2 * per_chunk)
    cts = []
    for start in range(0, n, per_chunk):
        stop = min(start + per_chunk, n)
        flat = np.zeros(slots)
        flat[0:2 * (stop - start):2] = g[start:stop]
        flat[1:2 * (stop - start):2] = h[start:stop]
        ct = cipher.encrypt(encode(params, flat), keys, rng)
        cts.append(cipher.drop_to_level(ct, level))
    return GhCipher(cts, n, per_chunk, seg, slots // seg)


def replicate_segments(gh: GhCipher, keys: KeySet,
                       counter: OpCounter | None = None) -> GhCipher:
    """Copy each chunk's pairs into every segment (done once, reused
    across all nodes and histogram entries)."""
    out = []
    for ct in gh.cts:
        acc = ct
        step = gh.seg_size
        while step < gh.params.slot_count:
            acc = cipher.add(acc, cipher.rotate(acc, -step, keys))
            if counter:
                counter.rot += 1
                counter.add += 1
            step <<= 1
        out.append(acc)
    return GhCipher(out, gh.n, gh.per_chunk, gh.seg_size, gh.n_segments)


@dataclass
class EncryptedHistogram:
    """d x l gradient/hessian sums held in segment-head slot pairs."""

    chain_cts: list            # ciphertexts, n_segments entries each
    pairs: list                # (feature, bucket) per entry, chain-major
    shape: tuple               # (d, l)
    seg_size: int
    n_segments: int

    def __sub__(self, other: "EncryptedHistogram") -> "EncryptedHistogram":
        if self.pairs != other.pairs or self.shape != other.shape:
            raise ValueError("histogram layout mismatch")
        cts = [cipher.sub(a, b)
               for a, b in zip(self.chain_cts, other.chain_cts)]
        return EncryptedHistogram(cts, self.pairs, self.shape,
                                  self.seg_size, self.n_segments)


def histogram_pairs(widths: list) -> list:
    """Histogram entries to aggregate: features with >= 2 buckets only."""
    out = []
    for k, w in enumerate(widths):
        if w >= 2:
            out.extend((k, v) for v in range(w))
    return out


def aggregate_encrypted_gh(node_instances: np.ndarray, features: np.ndarray,
                           gh: GhCipher, splits: list, keys: KeySet,
                           counter: OpCounter | None = None
                           ) -> EncryptedHistogram:
    """Bucket-sum encrypted gradient pairs for every (feature, bucket).

    node_instances is an index array into the gh packing order; features
    is the holder's plaintext n x d matrix; splits lists each feature's
    thresholds.  Selection is by plaintext mask multiplication, summation
    by rotations only.
    """
    from .core import bucket_index

    params = gh.params
    slots = params.slot_count
    seg, nseg = gh.seg_size, gh.n_segments
    n = features.shape[0]
    if gh.n != n:
        raise ValueError("gh packing does not match feature rows")
    in_node = np.zeros(n, dtype=bool)
    in_node[node_instances] = True
    buckets = {k: bucket_index(features[:, k], thr)
               for k, thr in enumerate(splits) if len(thr) >= 1}
    widths = [len(t) + 1 for t in splits]
    pairs = histogram_pairs(widths)
    width = max(widths, default=1)

    chain_cts = []
    for chain_start in range(0, len(pairs), nseg):
        chain = pairs[chain_start:chain_start + nseg]
        acc = None
        for ci, ct in enumerate(gh.cts):
            lo = ci * gh.per_chunk
            hi = min(lo + gh.per_chunk, n)
            mask = np.zeros(slots)
            for r, (k, v) in enumerate(chain):
                sel = in_node[lo:hi] & (buckets[k][lo:hi] == v)
                base = r * seg
                mask[base:base + 2 * (hi - lo):2] = sel
                mask[base + 1:base + 2 * (hi - lo):2] = sel
            if not mask.any():
                continue
            term = cipher.rescale(
                cipher.cmult(ct, mask, const_bits=params.scale_bits),
                params.scale_bits)
            if counter:
                counter.mul += 1
            acc = term if acc is None else cipher.add(acc, term)
            if counter and acc is not term:
                counter.add += 1
        if acc is None:
            # whole chain empty: zero times a chunk keeps level/scale aligned
            acc = cipher.rescale(
                cipher.cmult(gh.cts[0], np.zeros(slots),
                             const_bits=params.scale_bits),
                params.scale_bits)
        else:
            acc = rotsum_ct(acc, 2, seg // 2, keys, counter)
        chain_cts.append(acc)
    return EncryptedHistogram(chain_cts, pairs, (features.shape[1], width),
                              seg, nseg)


def decrypt_histogram(eh: EncryptedHistogram, keys: KeySet):
    """Active-party side: read segment-head slot pairs into (G, H)."""
    d, width = eh.shape
    G = np.zeros((d, width))
    H = np.zeros((d, width))
    for ci, ct in enumerate(eh.chain_cts):
        slots = cipher.decrypt(ct, keys)
        for r in range(eh.n_segments):
            idx = ci * eh.n_segments + r
            if idx >= len(eh.pairs):
                break
            k, v = eh.pairs[idx]
            G[k, v] = slots[r * eh.seg_size]
            H[k, v] = slots[r * eh.seg_size + 1]
    return G, H
