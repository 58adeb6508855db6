"""Ciphertext type and the leveled homomorphic operation set.

A ciphertext is a pair of RNS polynomials kept permanently in the NTT
domain; level l means limbs q_0..q_l are active.  The tracked scale is
always an exact power of two (scale_exp = p*a + p_c*b); the tiny
multiplicative drift of a drop-a-prime rescale is folded into the value
error budget rather than the bookkeeping.

Levels and alignment: add/sub/mult require operands at the same level
and scale.  drop_to_level performs the modulus switch (scale unchanged)
that callers use to align operands before combining them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import Plaintext, crt_lift_centered, coeffs_to_slots, encode
from .keys import KeySet
from .ntt import mulmod
from .params import FheParams

_U63 = np.uint64(1) << np.uint64(63)


@dataclass
class CtVector:
    """Encrypted slot vector (2 polynomials, NTT-domain RNS limbs)."""

    params: FheParams
    data: np.ndarray  # (2, level+1, N) uint64
    level: int
    scale_exp: int

    @property
    def limbs(self) -> int:
        return self.level + 1

    def copy(self) -> "CtVector":
        return CtVector(self.params, self.data.copy(), self.level, self.scale_exp)


def _primes_col(params: FheParams, limbs: int) -> np.ndarray:
    return params.plan.primes[:limbs][None, :, None]


def _addmod(a: np.ndarray, b: np.ndarray, q: np.ndarray) -> np.ndarray:
    s = a + b
    return np.where(s >= q, s - q, s)


def _submod(a: np.ndarray, b: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = a + q - b
    return np.where(d >= q, d - q, d)


def _mul_rows(a: np.ndarray, b: np.ndarray, params: FheParams,
              limb_idx: np.ndarray) -> np.ndarray:
    """Rowwise modular product where row r uses prime limb_idx[r]."""
    out = np.empty_like(a)
    for r, i in enumerate(limb_idx):
        q = params.plan.primes[i]
        out[r] = mulmod(a[r], b[r], q, 1.0 / float(q))
    return out


# -- encryption --------------------------------------------------------------


def encrypt(pt: Plaintext, keys: KeySet, rng=None) -> CtVector:
    """Public-key encryption of an encoded plaintext.

    Modulus-raised form: the message is embedded multiplied by the
    special prime P, the masking terms are sampled over chain + special
    limbs, and the result is scaled back down by P.  The v*e_pk + e
    encryption noise shrinks by a factor of P, leaving only the rounding
    noise of the scale-down (a few bits above the encoding error).
    """
    params = pt.params
    if rng is None:
        rng = np.random.default_rng()
    k = pt.limbs
    n = params.ring_degree
    t_idx = np.concatenate([np.arange(k), [params.special_idx]])
    t_primes = params.plan.primes[t_idx][:, None]
    key_sel = np.concatenate([np.arange(k), [params.max_level + 1]])
    p_sp = params.special_prime

    def small_poly(coeffs):
        rows = np.empty((k + 1, n), dtype=np.uint64)
        for r, i in enumerate(t_idx):
            rows[r] = np.mod(coeffs, np.int64(params.plan.primes[i])).astype(np.uint64)
        return params.plan.forward(rows, t_idx)

    v_ntt = small_poly(rng.integers(-1, 2, n).astype(np.int64))
    e0 = small_poly(np.round(rng.normal(0.0, params.sigma, n)).astype(np.int64))
    e1 = small_poly(np.round(rng.normal(0.0, params.sigma, n)).astype(np.int64))

    c0 = _mul_rows(v_ntt, keys.public[0][key_sel], params, t_idx)
    c0 = _addmod(c0, e0, t_primes)
    for r in range(k):
        qr = params.chain[r]
        raised = mulmod(pt.data[r], np.uint64(p_sp % qr), np.uint64(qr), 1.0 / qr)
        c0[r] = _addmod(c0[r], raised, np.uint64(qr))
    c1 = _mul_rows(v_ntt, keys.public[1][key_sel], params, t_idx)
    c1 = _addmod(c1, e1, t_primes)

    out = np.stack([_moddown(c0, params, k), _moddown(c1, params, k)])
    return CtVector(params, out, pt.level, pt.scale_exp)


def decrypt_raw(ct: CtVector, keys: KeySet, value_bits: int = 14) -> Plaintext:
    """Decrypt to an encoded plaintext, dropping to the cheapest safe level."""
    params = ct.params
    need = ct.scale_exp + value_bits + 16
    k = 1
    acc = params.chain[0].bit_length()
    while acc < need and k <= ct.level:
        acc += params.chain[k].bit_length()
        k += 1
    work = drop_to_level(ct, min(k - 1, ct.level))
    idx = np.arange(work.limbs)
    q = _primes_col(params, work.limbs)[0]
    m = _addmod(work.data[0],
                _mul_rows(work.data[1], keys.secret[:work.limbs], params, idx), q)
    return Plaintext(params, m, work.level, work.scale_exp)


def decrypt(ct: CtVector, keys: KeySet, count: int | None = None,
            value_bits: int = 14) -> np.ndarray:
    """Decrypt to slot values."""
    pt = decrypt_raw(ct, keys, value_bits)
    params = ct.params
    coeffs = params.plan.inverse(pt.data, np.arange(pt.limbs))
    vals = crt_lift_centered(params, coeffs) / float(2.0 ** pt.scale_exp)
    slots = coeffs_to_slots(params, vals).real
    return slots[:count] if count is not None else slots


# -- linear operations -------------------------------------------------------


def _check_aligned(a: CtVector, b) -> None:
    if a.level != b.level:
        raise ValueError(f"level mismatch: {a.level} != {b.level}")
    if a.scale_exp != b.scale_exp:
        raise ValueError(f"scale mismatch: 2^{a.scale_exp} != 2^{b.scale_exp}")


def add(a: CtVector, b: CtVector) -> CtVector:
    _check_aligned(a, b)
    q = _primes_col(a.params, a.limbs)
    return CtVector(a.params, _addmod(a.data, b.data, q), a.level, a.scale_exp)


def sub(a: CtVector, b: CtVector) -> CtVector:
    _check_aligned(a, b)
    q = _primes_col(a.params, a.limbs)
    return CtVector(a.params, _submod(a.data, b.data, q), a.level, a.scale_exp)


def negate(a: CtVector) -> CtVector:
    q = _primes_col(a.params, a.limbs)
    zero = np.zeros_like(a.data)
    return CtVector(a.params, _submod(zero, a.data, q), a.level, a.scale_exp)


def add_plain(a: CtVector, values) -> CtVector:
    pt = encode(a.params, values, a.scale_exp, a.level)
    out = a.copy()
    q = _primes_col(a.params, a.limbs)[0]
    out.data[0] = _addmod(out.data[0], pt.data, q)
    return out


def sub_plain(a: CtVector, values) -> CtVector:
    pt = encode(a.params, values, a.scale_exp, a.level)
    out = a.copy()
    q = _primes_col(a.params, a.limbs)[0]
    out.data[0] = _submod(out.data[0], pt.data, q)
    return out


def rsub_plain(a: CtVector, values) -> CtVector:
    """Plaintext-minus-ciphertext: encode(values) - a."""
    pt = encode(a.params, values, a.scale_exp, a.level)
    q = _primes_col(a.params, a.limbs)
    out = np.empty_like(a.data)
    out[0] = _submod(np.broadcast_to(pt.data, a.data[0].shape), a.data[0],
                     q[0])
    out[1] = _submod(np.zeros_like(a.data[1]), a.data[1], q[0])
    return CtVector(a.params, out, a.level, a.scale_exp)


def cmult(a: CtVector, values, const_bits: int | None = None) -> CtVector:
    """Multiply by a plaintext vector/scalar encoded at 2^const_bits."""
    params = a.params
    if const_bits is None:
        const_bits = params.const_bits
    pt = encode(params, values, const_bits, a.level)
    idx = np.arange(a.limbs)
    out = np.stack([_mul_rows(a.data[0], pt.data, params, idx),
                    _mul_rows(a.data[1], pt.data, params, idx)])
    return CtVector(params, out, a.level, a.scale_exp + const_bits)


def cmult_int(a: CtVector, c: int) -> CtVector:
    """Multiply by an exact integer constant (scale unchanged)."""
    out = np.empty_like(a.data)
    for r in range(a.limbs):
        q = a.params.chain[r]
        cu = np.uint64(c % q)
        out[0, r] = mulmod(a.data[0, r], cu, np.uint64(q), 1.0 / q)
        out[1, r] = mulmod(a.data[1, r], cu, np.uint64(q), 1.0 / q)
    return CtVector(a.params, out, a.level, a.scale_exp)


# -- level management --------------------------------------------------------


def drop_to_level(a: CtVector, level: int) -> CtVector:
    """Modulus switch down (no scale change).  Valid while the message
    magnitude times scale stays below half the remaining modulus."""
    if level > a.level:
        raise ValueError("cannot raise a ciphertext level")
    if level == a.level:
        return a.copy()
    return CtVector(a.params, a.data[:, :level + 1].copy(), level, a.scale_exp)


def _drop_last_limb_rounded(data: np.ndarray, params: FheParams,
                            level: int) -> np.ndarray:
    """round(data / q_last) limbwise for (2, k, N) NTT-domain data."""
    k = level + 1
    q_last = params.chain[level]
    half = q_last // 2
    out = np.empty((2, k - 1, data.shape[2]), dtype=np.uint64)
    rem_idx = np.arange(k - 1)
    last = params.plan.inverse(data[:, k - 1], np.array([level, level]))
    for j in range(k - 1):
        qj = params.chain[j]
        inv = np.uint64(pow(q_last, -1, qj))
        corr = q_last % qj
        for poly in range(2):
            r = last[poly]
            rr = r % np.uint64(qj)
            rr = np.where(r > half, (rr + qj - corr) % np.uint64(qj), rr)
            rr_ntt = params.plan.forward(rr[None, :], np.array([j]))[0]
            d = _submod(data[poly, j], rr_ntt, np.uint64(qj))
            out[poly, j] = mulmod(d, inv, np.uint64(qj), 1.0 / qj)
    return out


def rescale(a: CtVector, bits: int | None = None) -> CtVector:
    """Drop one level; divide the tracked scale by exactly 2^bits.

    bits must be the data scale p or the constant scale p_c.  For p_c the
    ciphertext is first multiplied by round(q_last / 2^p_c) so the prime
    drop nets out to a 2^p_c division (drift <= ~2^-20, absorbed into the
    approximation error).
    """
    params = a.params
    if bits is None:
        bits = params.scale_bits
    if bits not in (params.scale_bits, params.const_bits):
        raise ValueError(f"rescale step must be p={params.scale_bits} "
                         f"or p_c={params.const_bits}")
    if a.level < 1:
        raise ValueError("no levels left to rescale")
    work = a
    if bits == params.const_bits:
        d_const = round(params.chain[a.level] / float(2 ** params.const_bits))
        work = cmult_int(a, d_const)
    data = _drop_last_limb_rounded(work.data, params, a.level)
    return CtVector(params, data, a.level - 1, a.scale_exp - bits)


# -- key switching, multiplication, rotation ---------------------------------


def _moddown(acc: np.ndarray, params: FheParams, k: int) -> np.ndarray:
    """Divide a (k+1, N) NTT polynomial (special limb last) by the special
    prime with centered rounding, returning the k chain limbs."""
    n = params.ring_degree
    p_sp = params.special_prime
    half = p_sp // 2
    out = np.empty((k, n), dtype=np.uint64)
    r = params.plan.inverse(acc[k:k + 1], np.array([params.special_idx]))[0]
    for j in range(k):
        qj = params.chain[j]
        inv = np.uint64(pow(p_sp, -1, qj))
        corr = p_sp % qj
        rr = r % np.uint64(qj)
        rr = np.where(r > half, (rr + qj - corr) % np.uint64(qj), rr)
        rr_ntt = params.plan.forward(rr[None, :], np.array([j]))[0]
        d = _submod(acc[j], rr_ntt, np.uint64(qj))
        out[j] = mulmod(d, inv, np.uint64(qj), 1.0 / qj)
    return out


def _keyswitch(poly: np.ndarray, key: np.ndarray, params: FheParams,
               level: int) -> tuple[np.ndarray, np.ndarray]:
    """Switch (k, N) NTT polynomial multiplying some s' back to secret s."""
    k = level + 1
    n = params.ring_degree
    t_idx = np.concatenate([np.arange(k), [params.special_idx]])
    t_primes = params.plan.primes[t_idx][:, None]

    digits = params.plan.inverse(poly, np.arange(k))
    acc0 = np.zeros((k + 1, n), dtype=np.uint64)
    acc1 = np.zeros((k + 1, n), dtype=np.uint64)
    key_limb_sel = np.concatenate([np.arange(k), [params.max_level + 1]])
    for i in range(k):
        rows = digits[i][None, :] % t_primes
        y = params.plan.forward(rows, t_idx)
        kb = key[i, 0][key_limb_sel]
        ka = key[i, 1][key_limb_sel]
        acc0 += _mul_rows(y, kb, params, t_idx)
        acc1 += _mul_rows(y, ka, params, t_idx)
    acc0 %= t_primes
    acc1 %= t_primes
    return _moddown(acc0, params, k), _moddown(acc1, params, k)


def mult(a: CtVector, b: CtVector, keys: KeySet) -> CtVector:
    """Ciphertext-ciphertext product, relinearized, not rescaled."""
    _check_aligned(a, b)
    params = a.params
    idx = np.arange(a.limbs)
    q = _primes_col(params, a.limbs)[0]
    d0 = _mul_rows(a.data[0], b.data[0], params, idx)
    cross = _addmod(_mul_rows(a.data[0], b.data[1], params, idx),
                    _mul_rows(a.data[1], b.data[0], params, idx), q)
    d2 = _mul_rows(a.data[1], b.data[1], params, idx)
    k0, k1 = _keyswitch(d2, keys.relin, params, a.level)
    out = np.stack([_addmod(d0, k0, q), _addmod(cross, k1, q)])
    return CtVector(params, out, a.level, a.scale_exp + b.scale_exp)


def square(a: CtVector, keys: KeySet) -> CtVector:
    return mult(a, a, keys)


def _apply_rotation_step(ct: CtVector, step: int, keys: KeySet) -> CtVector:
    params = ct.params
    g = params.rotation_galois_exp(step)
    perm = params.automorphism_perm(g)
    q = _primes_col(params, ct.limbs)[0]
    c0 = ct.data[0][:, perm]
    c1 = ct.data[1][:, perm]
    k0, k1 = _keyswitch(c1, keys.rotation[step], params, ct.level)
    out = np.stack([_addmod(c0, k0, q), k1])
    return CtVector(params, out, ct.level, ct.scale_exp)


def rotate(ct: CtVector, k: int, keys: KeySet) -> CtVector:
    """Rotate slots by +k: slot i of the result held slot i+k before."""
    slots = ct.params.slot_count
    k = k % slots
    if k == 0:
        return ct.copy()
    steps_pos = [1 << j for j in range(slots.bit_length()) if k >> j & 1]
    neg = slots - k
    steps_neg = [-(1 << j) for j in range(slots.bit_length()) if neg >> j & 1]
    steps = steps_pos if len(steps_pos) <= len(steps_neg) else steps_neg
    out = ct
    for s in steps:
        out = _apply_rotation_step(out, s, keys)
    return out
