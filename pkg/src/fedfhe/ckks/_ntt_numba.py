"""Jitted butterfly kernels backing ntt.NttPlan (one row per residue poly).

The float-assisted quotient can be off by one in either direction, so
every product is repaired with a wraparound test (sign bit of the u64
difference) followed by up to two conditional subtractions.  Exact for
moduli up to 2^51.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U63 = np.uint64(1) << np.uint64(63)


@njit("uint64(uint64, uint64, uint64, float64)", inline="always", cache=True)
def _mm(a, b, p, fp):
    q = np.uint64(np.float64(a) * np.float64(b) * fp)
    r = a * b - q * p
    if r >= U63:
        r += p
    if r >= p:
        r -= p
    if r >= p:
        r -= p
    return r


@njit("void(uint64[:,:], uint64[:,:], uint64[:], float64[:], int64[:])", cache=True)
def forward_nb(a, tw, primes, pinv, prime_idx):
    rows, n = a.shape
    for r in range(rows):
        pi = prime_idx[r]
        p = primes[pi]
        fp = pinv[pi]
        t = n
        m = 1
        while m < n:
            t //= 2
            for i in range(m):
                w = tw[pi, m + i]
                base = 2 * i * t
                for j in range(base, base + t):
                    u = a[r, j]
                    v = _mm(a[r, j + t], w, p, fp)
                    s = u + v
                    if s >= p:
                        s -= p
                    a[r, j] = s
                    d = u + p - v
                    if d >= p:
                        d -= p
                    a[r, j + t] = d
            m *= 2


@njit("void(uint64[:,:], uint64[:,:], uint64[:], float64[:], uint64[:], int64[:])",
      cache=True)
def inverse_nb(a, itw, primes, pinv, n_inv, prime_idx):
    rows, n = a.shape
    for r in range(rows):
        pi = prime_idx[r]
        p = primes[pi]
        fp = pinv[pi]
        t = 1
        m = n
        while m > 1:
            h = m // 2
            j1 = 0
            for i in range(h):
                w = itw[pi, h + i]
                for j in range(j1, j1 + t):
                    u = a[r, j]
                    v = a[r, j + t]
                    s = u + v
                    if s >= p:
                        s -= p
                    a[r, j] = s
                    d = u + p - v
                    if d >= p:
                        d -= p
                    a[r, j + t] = _mm(d, w, p, fp)
                j1 += 2 * t
            t *= 2
            m = h
        ninv = n_inv[pi]
        for j in range(n):
            a[r, j] = _mm(a[r, j], ninv, p, fp)


@njit("void(uint64[:,:], uint64[:,:], uint64[:], float64[:], int64[:])", cache=True)
def pointwise_mul_nb(a, b, primes, pinv, prime_idx):
    """a *= b rowwise (mod the row's prime), in place."""
    rows, n = a.shape
    for r in range(rows):
        pi = prime_idx[r]
        p = primes[pi]
        fp = pinv[pi]
        for j in range(n):
            a[r, j] = _mm(a[r, j], b[r, j], p, fp)
