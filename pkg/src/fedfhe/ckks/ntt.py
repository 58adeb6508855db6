"""Negacyclic number-theoretic transforms over batches of word-sized primes.

Every polynomial lives in Z_q[x]/(x^N + 1) for an NTT-friendly prime
q = 1 mod 2N.  The forward transform evaluates a polynomial at the odd
powers of a primitive 2N-th root of unity, so pointwise products in the
transformed domain realise negacyclic convolution.

The hot loops run either through a numba-jitted kernel or a vectorized
numpy fallback (set FEDFHE_NO_NUMBA=1 to force the fallback).  Modular
multiplication uses float-assisted Barrett reduction, which is exact for
moduli up to 2^51: the float64 quotient estimate is off by at most one,
and the remainder is fixed up with conditional subtractions.
"""

from __future__ import annotations

import os

import numpy as np

_U63 = np.uint64(1) << np.uint64(63)


def _bit_reverse(n: int) -> np.ndarray:
    logn = n.bit_length() - 1
    out = np.zeros(n, dtype=np.int64)
    for i in range(n):
        out[i] = int(format(i, f"0{logn}b")[::-1], 2)
    return out


class NttPlan:
    """Precomputed twiddle tables for a fixed ring degree and prime set.

    Tables are laid out per prime so a batch of residue polynomials with
    mixed moduli transforms in one call; ``prime_idx`` selects the table
    row for each data row.
    """

    def __init__(self, n: int, primes: list[int]):
        if n & (n - 1):
            raise ValueError("ring degree must be a power of two")
        self.n = n
        self.primes = np.array(primes, dtype=np.uint64)
        self.pinv = np.array([1.0 / p for p in primes], dtype=np.float64)
        k = len(primes)
        brv = _bit_reverse(n)
        self.tw = np.zeros((k, n), dtype=np.uint64)
        self.itw = np.zeros((k, n), dtype=np.uint64)
        self.n_inv = np.zeros(k, dtype=np.uint64)
        self.psi = []
        for idx, p in enumerate(primes):
            psi = _find_psi(p, n)
            self.psi.append(psi)
            ipsi = pow(psi, -1, p)
            pw = np.empty(n, dtype=np.uint64)
            ipw = np.empty(n, dtype=np.uint64)
            acc = iacc = 1
            for i in range(n):
                pw[i] = acc
                ipw[i] = iacc
                acc = acc * psi % p
                iacc = iacc * ipsi % p
            self.tw[idx] = pw[brv]
            self.itw[idx] = ipw[brv]
            self.n_inv[idx] = pow(n, -1, p)

    def forward(self, a: np.ndarray, prime_idx: np.ndarray) -> np.ndarray:
        """Transform rows of ``a`` in place semantics-free (returns a copy)."""
        out = np.ascontiguousarray(a, dtype=np.uint64).copy()
        _forward(out, self.tw, self.primes, self.pinv,
                 np.ascontiguousarray(prime_idx, dtype=np.int64))
        return out

    def inverse(self, a: np.ndarray, prime_idx: np.ndarray) -> np.ndarray:
        out = np.ascontiguousarray(a, dtype=np.uint64).copy()
        _inverse(out, self.itw, self.primes, self.pinv, self.n_inv,
                 np.ascontiguousarray(prime_idx, dtype=np.int64))
        return out


def _find_psi(p: int, n: int) -> int:
    """Smallest-witness primitive 2n-th root of unity mod p."""
    from sympy import primitive_root

    g = primitive_root(p)
    psi = pow(g, (p - 1) // (2 * n), p)
    if pow(psi, n, p) != p - 1:
        raise ValueError("not a primitive 2n-th root")
    return psi


def mulmod(a: np.ndarray, b, p: np.uint64, pinv: float) -> np.ndarray:
    """Exact (a*b) mod p elementwise for p <= 2^51, via float quotient."""
    with np.errstate(over="ignore"):
        q = (a.astype(np.float64) * (b.astype(np.float64) if isinstance(b, np.ndarray) else float(b)) * pinv).astype(np.uint64)
        r = a * b - q * p
        r = np.where(r > _U63, r + p, r)
        r = np.where(r >= p, r - p, r)
        return np.where(r >= p, r - p, r)


def _forward_np(a, tw, primes, pinv, prime_idx):
    rows, n = a.shape
    for r in range(rows):
        pi = prime_idx[r]
        p = primes[pi]
        fpinv = pinv[pi]
        row = a[r]
        t = n
        m = 1
        while m < n:
            t //= 2
            v3 = row.reshape(m, 2, t)
            w = tw[pi, m:2 * m].reshape(m, 1)
            u = v3[:, 0, :].copy()
            v = mulmod(v3[:, 1, :], np.broadcast_to(w, (m, t)), p, fpinv)
            s = u + v
            v3[:, 0, :] = np.where(s >= p, s - p, s)
            d = u + p - v
            v3[:, 1, :] = np.where(d >= p, d - p, d)
            m *= 2


def _inverse_np(a, itw, primes, pinv, n_inv, prime_idx):
    rows, n = a.shape
    for r in range(rows):
        pi = prime_idx[r]
        p = primes[pi]
        fpinv = pinv[pi]
        row = a[r]
        t = 1
        m = n
        while m > 1:
            h = m // 2
            v3 = row.reshape(h, 2, t)
            w = itw[pi, h:2 * h].reshape(h, 1)
            u = v3[:, 0, :].copy()
            v = v3[:, 1, :].copy()
            s = u + v
            v3[:, 0, :] = np.where(s >= p, s - p, s)
            d = u + p - v
            d = np.where(d >= p, d - p, d)
            v3[:, 1, :] = mulmod(d, np.broadcast_to(w, (h, t)), p, fpinv)
            t *= 2
            m //= 2
        a[r] = mulmod(row, np.uint64(n_inv[pi]), p, fpinv)


_USE_NUMBA = os.environ.get("FEDFHE_NO_NUMBA", "") != "1"
if _USE_NUMBA:
    try:
        from ._ntt_numba import forward_nb, inverse_nb

        def _forward(a, tw, primes, pinv, prime_idx):
            forward_nb(a, tw, primes, pinv, prime_idx)

        def _inverse(a, itw, primes, pinv, n_inv, prime_idx):
            inverse_nb(a, itw, primes, pinv, n_inv, prime_idx)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _USE_NUMBA = False
if not _USE_NUMBA:
    _forward = _forward_np
    _inverse = _inverse_np
