"""Slot encoding: complex canonical embedding onto real polynomials.

Slot j carries the value of the message polynomial at psi^(5^j mod 2N);
the conjugate value sits at the negated exponent, which keeps encoded
coefficients real.  Evaluation at all N odd powers reduces to one
length-N FFT of twisted coefficients, so encode/decode are O(N log N).

Encoded coefficients are round(value * 2^scale_exp).  The rounding is
performed at 39 fractional bits in float64 and the remaining power of
two is applied in modular arithmetic, so arbitrarily large scale
exponents stay exact modulo each prime.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import FheParams

_FRAC_BITS = 39


@dataclass
class Plaintext:
    """Encoded message: RNS limbs in NTT domain plus scale bookkeeping."""

    params: FheParams
    data: np.ndarray  # (limbs, N) uint64, NTT domain
    level: int
    scale_exp: int

    @property
    def limbs(self) -> int:
        return self.level + 1


def _slot_to_eval(params: FheParams, z: np.ndarray) -> np.ndarray:
    """Scatter slot values (and conjugates) into the odd-evaluation vector."""
    n = params.ring_degree
    two_n = 2 * n
    a = np.zeros(n, dtype=np.complex128)
    exps = params.slot_exponents
    t_pos = (exps - 1) // 2
    t_neg = (two_n - exps - 1) // 2
    a[t_pos] = z
    a[t_neg] = np.conj(z)
    return a


def embed_to_coeffs(params: FheParams, z: np.ndarray) -> np.ndarray:
    """Real coefficient vector whose evaluations at psi^(5^j) equal z."""
    a = _slot_to_eval(params, z)
    coeffs = np.fft.fft(a) / params.ring_degree * params._untwist
    return coeffs.real


def coeffs_to_slots(params: FheParams, coeffs: np.ndarray) -> np.ndarray:
    """Inverse of embed_to_coeffs for real (float) coefficient vectors."""
    n = params.ring_degree
    evals = np.fft.ifft(coeffs * params._twist) * n
    t_pos = (params.slot_exponents - 1) // 2
    return evals[t_pos]


def encode(params: FheParams, values, scale_exp: int | None = None,
           level: int | None = None) -> Plaintext:
    """Encode up to slot_count real (or complex) values at 2^scale_exp."""
    if scale_exp is None:
        scale_exp = params.scale_bits
    if level is None:
        level = params.max_level
    z = np.zeros(params.slot_count, dtype=np.complex128)
    arr = np.asarray(values)
    if arr.ndim == 0:
        z[:] = arr
    else:
        if arr.size > params.slot_count:
            raise ValueError("too many values for the slot count")
        z[:arr.size] = arr
    coeffs = embed_to_coeffs(params, z)

    frac = min(scale_exp, _FRAC_BITS)
    ints = np.round(coeffs * float(2 ** frac)).astype(np.int64)
    rest = scale_exp - frac
    limbs = level + 1
    data = np.empty((limbs, params.ring_degree), dtype=np.uint64)
    for i in range(limbs):
        q = params.chain[i]
        resid = np.mod(ints, q).astype(np.uint64)
        if rest:
            from .ntt import mulmod
            resid = mulmod(resid, np.uint64(pow(2, rest, q)), np.uint64(q), 1.0 / q)
        data[i] = resid
    data = params.plan.forward(data, np.arange(limbs))
    return Plaintext(params=params, data=data, level=level, scale_exp=scale_exp)


def crt_lift_centered(params: FheParams, coeffs: np.ndarray) -> np.ndarray:
    """Centered float values of RNS coefficient rows (limbs, N).

    Uses an exact mixed-radix lift for one or two limbs (error is
    relative ~2^-52 of the value itself); falls back to exact big-int
    arithmetic for deeper prefixes.
    """
    k = coeffs.shape[0]
    if k == 1:
        q0 = params.chain[0]
        x = coeffs[0].astype(np.int64)
        return np.where(x > q0 // 2, x - q0, x).astype(np.float64)
    if k == 2:
        from .ntt import mulmod
        q0, q1 = params.chain[0], params.chain[1]
        inv01 = np.uint64(pow(q0, -1, q1))
        x0 = coeffs[0]
        x1 = coeffs[1]
        d = np.where(x1 >= x0 % q1, x1 - x0 % q1, x1 + q1 - x0 % q1)
        t = mulmod(d, inv01, np.uint64(q1), 1.0 / q1).astype(np.int64)
        t = np.where(t > q1 // 2, t - q1, t)  # centered top digit
        return x0.astype(np.float64) + float(q0) * t.astype(np.float64)
    big_q, qs, tinv = params.crt_consts(k)
    half = big_q // 2
    out = np.empty(coeffs.shape[1], dtype=np.float64)
    cols = coeffs.T.tolist()
    for j, col in enumerate(cols):
        x = 0
        for i in range(k):
            x += (col[i] * tinv[i] % qs[i]) * (big_q // qs[i])
        x %= big_q
        if x > half:
            x -= big_q
        out[j] = float(x)
    return out


def decode(pt: Plaintext, count: int | None = None,
           value_bits: int = 14) -> np.ndarray:
    """Decode a plaintext back to (real) slot values.

    Only the shortest limb prefix covering scale * 2^value_bits (plus
    headroom) is lifted; residues of a centered value agree across any
    sufficient prefix, so this is exact and keeps the lift in the fast
    one/two-limb path.
    """
    params = pt.params
    need = pt.scale_exp + value_bits + 16
    k, acc = 1, params.chain[0].bit_length()
    while acc < need and k < pt.limbs:
        acc += params.chain[k].bit_length()
        k += 1
    coeffs = params.plan.inverse(pt.data[:k], np.arange(k))
    vals = crt_lift_centered(params, coeffs)
    vals = vals / float(2.0 ** pt.scale_exp)
    slots = coeffs_to_slots(params, vals).real
    return slots[:count] if count is not None else slots
