"""Dataset preparation for feature-split training.

Equal-width binning and weight-of-evidence scoring, where the label
holder and the feature holder are different parties: the feature owner
ships its encrypted one-hot bin matrix, the label holder multiplies in
its 0/1 labels and returns encrypted per-bin positive counts, and the
feature owner decrypts and finishes the table.  Neither side sees the
other's inputs.

Synthetic minority oversampling under the same split: the label holder
finds nearest neighbours among the positive rows using only its own
feature block, assembles encrypted interpolated rows from the joint
ciphertext, and masks them with uniform noise before the key owner
decrypts; each party keeps its own columns, one of them still masked.

Plaintext oracles (woe_plain, smote_plain) mirror both computations.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from . import simnet
from .ckks import cipher
from .ckks.serialize import deserialize_ct, serialize_ct
from .logreg.protocols import VflPartyA, VflPartyB

TAG_PP_BINS = simnet.register_tag(0x7101, "PP_BINS")
TAG_PP_GOOD = simnet.register_tag(0x7102, "PP_GOOD")
TAG_PP_XB = simnet.register_tag(0x7103, "PP_XB")
TAG_PP_NEWR = simnet.register_tag(0x7104, "PP_NEWR")
TAG_PP_ASAMPLE = simnet.register_tag(0x7105, "PP_ASAMPLE")

ACTIVE = simnet.active().label

MASK_SPAN = 2.0 ** 10   # synthetic-row masks drawn uniform in (-span, span)


def _pow2(x: int) -> int:
    return 1 << max(0, x - 1).bit_length() if x > 1 else 1


def _pack_cts(cts) -> bytes:
    out = bytearray()
    for ct in cts:
        blob = serialize_ct(ct)
        out += len(blob).to_bytes(4, "little") + blob
    return bytes(out)


def _unpack_cts(payload: bytes, params, offset: int = 0):
    cts = []
    while offset < len(payload):
        ln = int.from_bytes(payload[offset:offset + 4], "little")
        offset += 4
        cts.append(deserialize_ct(payload[offset:offset + ln], params))
        offset += ln
    return cts


def _key_fingerprint(keys) -> bytes:
    return hashlib.sha256(np.ascontiguousarray(keys.public)
                          .tobytes()).digest()


# -- binning -------------------------------------------------------------------


@dataclass(frozen=True)
class BinSpec:
    """Equal-width bin edges for one feature."""

    edges: tuple
    feature: int = 0

    @property
    def count(self) -> int:
        return len(self.edges) - 1

    def to_dict(self) -> dict:
        return {"feature": self.feature, "edges": list(self.edges)}


def equal_width_bins(values, B: int, feature: int = 0) -> BinSpec:
    """B equal-width intervals spanning the observed range."""
    values = np.asarray(values, float)
    if B < 2:
        raise ValueError("need at least two bins")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise ValueError("constant feature cannot be binned")
    return BinSpec(tuple(np.linspace(lo, hi, B + 1)), feature)


def bin_index(values, spec: BinSpec) -> np.ndarray:
    """Bin of each value; intervals are right-closed except the first.
    Out-of-range values land in the end bins."""
    edges = np.asarray(spec.edges)
    idx = np.searchsorted(edges, np.asarray(values, float), side="left") - 1
    return np.clip(idx, 0, spec.count - 1)


def one_hot(values, spec: BinSpec) -> np.ndarray:
    out = np.zeros((len(values), spec.count))
    out[np.arange(len(values)), bin_index(values, spec)] = 1.0
    return out


# -- weight of evidence --------------------------------------------------------


@dataclass(frozen=True)
class WOETable:
    """Per-bin positive/negative counts and their evidence weights."""

    good: np.ndarray
    bad: np.ndarray
    woe: np.ndarray
    total_good: int
    total_bad: int

    def to_dict(self) -> dict:
        return {"good": [int(g) for g in self.good],
                "bad": [int(b) for b in self.bad],
                "woe": [float(w) for w in self.woe],
                "total_good": self.total_good,
                "total_bad": self.total_bad}


def _finish_woe(good: np.ndarray, total_per_bin: np.ndarray) -> WOETable:
    bad = total_per_bin - good
    gt, bt = int(good.sum()), int(bad.sum())
    if gt == 0 or bt == 0:
        raise ValueError("need both positive and negative samples")
    g = np.where(good == 0, 0.5, good)      # zero-cell smoothing
    b = np.where(bad == 0, 0.5, bad)
    woe = np.log((g / gt) / (b / bt))
    return WOETable(good.astype(int), bad.astype(int), woe, gt, bt)


def woe_plain(bins: np.ndarray, y) -> WOETable:
    """Evidence weights from a one-hot bin matrix and 0/1 labels."""
    bins = np.asarray(bins, float)
    y = np.asarray(y, float)
    if len(bins) != len(y):
        raise ValueError("bin matrix and labels disagree in length")
    return _finish_woe(y @ bins, bins.sum(axis=0))


def woe_encode(values, spec: BinSpec, table: WOETable) -> np.ndarray:
    """Replace raw values by the evidence weight of their bin."""
    return table.woe[bin_index(values, spec)]


@dataclass
class BinParty:
    """Feature owner: holds the key pair and one binned column."""

    keys: object
    bins: np.ndarray


def woe_fhe(y, party_b: BinParty, transport=None, seed: int = 0) -> WOETable:
    """Two-party evidence weights; the label side never sees bin
    populations and the feature side never sees labels.

    Layout: one-hot rows are packed row-major (bin count padded to a
    power of two), so one stride ladder per feature sums every bin
    column at once; the count ciphertext is decrypted one level up so
    populations beyond the last-level value range survive.
    """
    transport = transport or simnet.run_protocol
    y = np.asarray(y, float)
    bins = np.asarray(party_b.bins, float)
    if len(bins) != len(y):
        raise ValueError("chunk misalignment: labels and bin matrix "
                         "disagree in length")
    if set(np.unique(y)) - {0.0, 1.0}:
        raise ValueError("labels must be 0/1")
    keys = party_b.keys
    eval_keys = keys.public_only()
    params = keys.params
    n, nbins = bins.shape
    width = _pow2(nbins)
    per = params.slot_count // width
    fingerprint = _key_fingerprint(keys)
    b_label = simnet.passive(0).label

    def b_program(io):
        rng = np.random.default_rng([seed, 0xB])
        chunks = []
        for base in range(0, n, per):
            block = np.zeros((per, width))
            rows = bins[base:base + per]
            block[:len(rows), :nbins] = rows
            chunks.append(_encrypt(block.ravel(), keys, 2, rng))
        io.send(ACTIVE, TAG_PP_BINS, fingerprint + _pack_cts(chunks))
        msg = yield io.recv(sender=ACTIVE, tag=TAG_PP_GOOD)
        ct = deserialize_ct(msg.payload, params)
        good = np.rint(cipher.decrypt(ct, keys)[:nbins]).astype(int)
        return _finish_woe(good, bins.sum(axis=0))

    def a_program(io):
        msg = yield io.recv(sender=b_label, tag=TAG_PP_BINS)
        if msg.payload[:32] != fingerprint:
            raise ValueError("public key fingerprint mismatch")
        chunks = _unpack_cts(msg.payload, params, 32)
        acc = None
        for c, ct in enumerate(chunks):
            block = np.zeros(per)
            rows = y[c * per:(c + 1) * per]
            block[:len(rows)] = rows
            # full-scale label mask: the ladder below sums every row
            # position, so per-slot encoding error must stay far below
            # the half-count rounding threshold
            masked = cipher.cmult(ct, np.repeat(block, width),
                                  params.scale_bits)
            acc = masked if acc is None else cipher.add(acc, masked)
        acc = cipher.rescale(acc, params.scale_bits)
        for t in range(per.bit_length() - 1):
            acc = cipher.add(acc, cipher.rotate(acc, width << t, eval_keys))
        io.send(b_label, TAG_PP_GOOD, serialize_ct(acc))

    results, _ = transport(
        {simnet.active(): a_program, simnet.passive(0): b_program}, seed)
    return results[b_label]


def _encrypt(values, keys, level, rng):
    from .ckks.encoding import encode
    pt = encode(keys.params, values, keys.params.scale_bits, level)
    return cipher.encrypt(pt, keys, rng)


# -- synthetic minority oversampling --------------------------------------------


@dataclass(frozen=True)
class SmoteConfig:
    """Oversampling plan: k nearest neighbours, `amount` synthetic rows
    per minority row.  Seeded interpolation weights land in the open
    unit interval; explicit weight/mask arrays override the draws."""

    k: int = 5
    amount: int = 1
    seed: int = 0
    lam: np.ndarray | None = None
    mask_a: np.ndarray | None = None
    mask_b: np.ndarray | None = None


def smote_plan(X_metric, y, config: SmoteConfig):
    """Shared deterministic plan: (orig_idx, neig_idx, lambda).

    Neighbours are the k nearest positive rows by Euclidean distance on
    the given feature block, ties broken by row index; each minority
    row emits `amount` rows cycling through its neighbour list.
    """
    X_metric = np.asarray(X_metric, float)
    y = np.asarray(y, float)
    pos = np.flatnonzero(y > 0)
    if len(pos) == 0:
        raise ValueError("no positive samples to oversample")
    if config.k >= len(pos):
        raise ValueError(f"k={config.k} needs more than {len(pos)} "
                         "minority rows")
    P = X_metric[pos]
    d2 = ((P[:, None, :] - P[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    nbrs = pos[np.argsort(d2, axis=1, kind="stable")[:, :config.k]]
    orig = np.repeat(pos, config.amount)
    copies = np.tile(np.arange(config.amount), len(pos))
    neig = nbrs[np.repeat(np.arange(len(pos)), config.amount),
                copies % config.k]
    m = len(orig)
    if config.lam is not None:
        lam = np.asarray(config.lam, float)
        if lam.shape != (m,):
            raise ValueError(f"lambda vector must have length {m}")
    else:
        rng = np.random.default_rng([config.seed, 0x10AD])
        lam = rng.random(m)
        while np.any(lam == 0):               # open interval (0,1)
            lam[lam == 0] = rng.random(int(np.sum(lam == 0)))
    return orig, neig, lam


def smote_plain(X, y, config: SmoteConfig, metric=None) -> np.ndarray:
    """Interpolated minority rows: orig + lambda*(neighbour - orig)."""
    X = np.asarray(X, float)
    orig, neig, lam = smote_plan(X if metric is None else metric, y, config)
    return X[orig] + lam[:, None] * (X[neig] - X[orig])


@dataclass
class SmoteResult:
    """Per-party synthetic blocks.

    rows_a is clean at the label holder; rows_b is what the key owner
    stores, still offset by mask_b, which the label holder keeps so it
    can subtract the offset inside later encrypted training batches.
    """

    rows_a: np.ndarray
    rows_b: np.ndarray
    mask_b: np.ndarray
    transcript: object = None

    @property
    def count(self) -> int:
        return len(self.rows_a)


def smote_fhe(party_a: VflPartyA, party_b: VflPartyB, config: SmoteConfig,
              transport=None, seed: int = 0) -> SmoteResult:
    """Feature-split oversampling over the joint ciphertext.

    The label holder replicates each needed positive row across its
    chunk with one mask multiply and a stride ladder, then assembles
    every output chunk as a sum of weight-fused mask multiplies (the
    interpolation weight rides in the selection mask), adds the uniform
    masking matrix, and ships the result for decryption one level up.
    """
    transport = transport or simnet.run_protocol
    if len(party_a.X) != len(party_b.X):
        raise ValueError("parties are not sample-aligned")
    keys = party_b.keys
    eval_keys = keys.public_only()
    params = keys.params
    fa, fb = party_a.X.shape[1], party_b.X.shape[1]
    d = fa + fb
    n = len(party_a.X)
    width = _pow2(d)
    per = params.slot_count // width
    if per < 1:
        raise ValueError("joint row does not fit the slot budget")
    orig, neig, lam = smote_plan(party_a.X, party_a.y, config)
    m = len(orig)
    rng_mask = np.random.default_rng([config.seed, 0xA5])
    mask_a = (config.mask_a if config.mask_a is not None
              else rng_mask.uniform(-MASK_SPAN, MASK_SPAN, (m, fa)))
    mask_b = (config.mask_b if config.mask_b is not None
              else rng_mask.uniform(-MASK_SPAN, MASK_SPAN, (m, fb)))
    if mask_a.shape != (m, fa) or mask_b.shape != (m, fb):
        raise ValueError("mask matrices must match the party blocks")
    fingerprint = _key_fingerprint(keys)
    b_label = simnet.passive(0).label

    def b_program(io):
        rng = np.random.default_rng([seed, 0x5B])
        chunks = []
        for base in range(0, n, per):
            block = np.zeros((per, width))
            rows = party_b.X[base:base + per]
            block[:len(rows), fa:d] = rows
            chunks.append(_encrypt(block.ravel(), keys, 3, rng))
        io.send(ACTIVE, TAG_PP_XB, fingerprint + _pack_cts(chunks))
        msg = yield io.recv(sender=ACTIVE, tag=TAG_PP_NEWR)
        rows = []
        for ct in _unpack_cts(msg.payload, params):
            vals = cipher.decrypt(ct, keys)
            rows.append(vals.reshape(per, width)[:, :d])
        flat = np.vstack(rows)[:m]
        io.send(ACTIVE, TAG_PP_ASAMPLE,
                np.ascontiguousarray(flat[:, :fa]).tobytes())
        return flat[:, fa:]

    def a_program(io):
        msg = yield io.recv(sender=b_label, tag=TAG_PP_XB)
        if msg.payload[:32] != fingerprint:
            raise ValueError("public key fingerprint mismatch")
        xb = _unpack_cts(msg.payload, params, 32)
        rng = np.random.default_rng([seed, 0x5A])
        joint = []
        for c, cb in enumerate(xb):
            block = np.zeros((per, width))
            rows = party_a.X[c * per:(c + 1) * per]
            block[:len(rows), :fa] = rows
            joint.append(cipher.add(
                _encrypt(block.ravel(), keys=eval_keys, level=3, rng=rng),
                cb))
        replicated = {}
        for s in np.unique(np.concatenate([orig, neig])):
            mask = np.zeros(params.slot_count)
            row = int(s) % per
            mask[row * width:(row + 1) * width] = 1.0
            # full-scale row mask: the ladder sums all row positions,
            # so the mask's per-slot encoding error lands in every copy
            ct = cipher.cmult(joint[int(s) // per], mask, params.scale_bits)
            for t in range(per.bit_length() - 1):
                ct = cipher.add(ct, cipher.rotate(ct, width << t, eval_keys))
            replicated[int(s)] = cipher.rescale(ct, params.scale_bits)
        out = []
        for base in range(0, m, per):
            take = min(per, m - base)
            acc = None
            for source, weights in ((orig, 1.0 - lam), (neig, lam)):
                sel = source[base:base + take]
                for s in np.unique(sel):
                    vec = np.zeros((per, width))
                    hit = np.flatnonzero(sel == s)
                    vec[hit, :d] = weights[base + hit, None]
                    term = cipher.cmult(replicated[int(s)], vec.ravel(),
                                        params.scale_bits)
                    acc = term if acc is None else cipher.add(acc, term)
            acc = cipher.rescale(acc, params.scale_bits)
            noise = np.zeros((per, width))
            noise[:take, :fa] = mask_a[base:base + take]
            noise[:take, fa:d] = mask_b[base:base + take]
            # mask after the last rescale: rescaling divides by the
            # actual prime rather than 2^scale_bits, and that relative
            # drift would be magnified by the mask span
            out.append(cipher.add_plain(acc, noise.ravel()))
        io.send(b_label, TAG_PP_NEWR, _pack_cts(out))
        msg = yield io.recv(sender=b_label, tag=TAG_PP_ASAMPLE)
        masked = np.frombuffer(msg.payload, float).reshape(m, fa)
        return masked - mask_a

    results, transcript = transport(
        {simnet.active(): a_program, simnet.passive(0): b_program}, seed)
    return SmoteResult(results[ACTIVE], results[b_label], mask_b, transcript)
