"""Leveled-scheme parameter sets: modulus chains, embeddings, rotation maps.

A parameter set fixes the power-of-two ring degree N, a chain of NTT
friendly primes q_0..q_L, one special prime for hybrid key switching,
and the two scale step sizes p (data scale) and p_c (auxiliary constant
scale).  A ciphertext at level l carries limbs q_0..q_l; rescaling drops
the last limb and divides the tracked scale by exactly 2^p or 2^p_c.

Rescale primes are picked as the primes closest to 2^p with q = 1 mod 2N
so the drop-a-prime rescale differs from a true power-of-two division by
a relative drift below 2^-20 per level, absorbed into the approximation
error budget.  The first prime is ~2^49 to give decryption headroom at
level zero, and the special prime is ~2^49 so key-switching noise is
divided well below one scale unit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sympy import isprime

from .ntt import NttPlan

DESK_PROFILE = "desk"
STD128_PROFILE = "std128"


def _closest_prime(bits: int, two_n: int, taken: set[int]) -> int:
    """Prime q = 1 mod two_n minimizing |q - 2^bits|, skipping taken ones."""
    base = 1 << bits
    k = 0
    while True:
        k += 1
        for cand in (base - k * two_n + 1, base + k * two_n + 1):
            if cand > two_n and cand not in taken and isprime(cand):
                return cand


@dataclass
class FheParams:
    """Immutable parameter set shared by keys, plaintexts and ciphertexts."""

    ring_degree: int
    chain: list[int]
    special_prime: int
    scale_bits: int
    const_bits: int
    sigma: float
    profile: str

    plan: NttPlan = field(init=False, repr=False)
    digest: bytes = field(init=False, repr=False)

    def __post_init__(self):
        n = self.ring_degree
        if n & (n - 1) or n < (1 << 12):
            raise ValueError("ring degree must be a power of two >= 2^12")
        if len(self.chain) < 6:
            raise ValueError("modulus chain must have at least 6 primes")
        for q in [*self.chain, self.special_prime]:
            if q % (2 * n) != 1:
                raise ValueError(f"prime {q} is not 1 mod 2N")
        self.plan = NttPlan(n, [*self.chain, self.special_prime])
        canon = json.dumps({
            "n": n, "chain": self.chain, "special": self.special_prime,
            "p": self.scale_bits, "pc": self.const_bits, "sigma": self.sigma,
        }, sort_keys=True).encode()
        self.digest = hashlib.sha256(canon).digest()
        self._build_maps()

    # -- derived quantities ------------------------------------------------

    @property
    def slot_count(self) -> int:
        return self.ring_degree // 2

    @property
    def max_level(self) -> int:
        return len(self.chain) - 1

    @property
    def special_idx(self) -> int:
        return len(self.chain)

    def _build_maps(self):
        n = self.ring_degree
        two_n = 2 * n
        # slot j evaluates the polynomial at psi^(5^j); conjugate slots at -5^j
        orbit = np.empty(self.slot_count, dtype=np.int64)
        e = 1
        for j in range(self.slot_count):
            orbit[j] = e
            e = e * 5 % two_n
        self.slot_exponents = orbit
        # odd exponent -> row index t in the length-N odd-evaluation vector
        self.exp_to_t = {int(2 * t + 1): t for t in range(n)}
        omega = np.exp(1j * np.pi / n)
        self._twist = omega ** np.arange(n)
        self._untwist = omega ** (-np.arange(n))
        self._perm_cache: dict[int, np.ndarray] = {}
        self._crt_cache: dict[int, tuple] = {}
        self._ntt_exp: np.ndarray | None = None

    def ntt_point_exponents(self) -> np.ndarray:
        """exponent e(j) with forward-NTT output j = value at psi^e(j).

        Computed empirically from the transform of the monomial x under
        the first chain prime; the exponent layout is identical for all
        primes because the tables share one bit-reversal ordering.
        """
        if self._ntt_exp is None:
            n = self.ring_degree
            p = self.chain[0]
            psi = self.plan.psi[0]
            mono = np.zeros((1, n), dtype=np.uint64)
            mono[0, 1] = 1
            vals = self.plan.forward(mono, np.array([0]))[0]
            power_of = {}
            acc = 1
            for k in range(2 * n):
                if k % 2 == 1:
                    power_of[acc] = k
                acc = acc * psi % p
            self._ntt_exp = np.array([power_of[int(v)] for v in vals],
                                     dtype=np.int64)
        return self._ntt_exp

    def automorphism_perm(self, galois_exp: int) -> np.ndarray:
        """NTT-domain permutation realising x -> x^galois_exp.

        perm[j] = j' such that evaluating the mapped polynomial at point j
        equals evaluating the original at point j'.
        """
        two_n = 2 * self.ring_degree
        g = galois_exp % two_n
        if g in self._perm_cache:
            return self._perm_cache[g]
        exps = self.ntt_point_exponents()
        index_of = {int(e): i for i, e in enumerate(exps)}
        perm = np.array([index_of[int(e) * g % two_n] for e in exps],
                        dtype=np.int64)
        self._perm_cache[g] = perm
        return perm

    def rotation_galois_exp(self, step: int) -> int:
        """Galois exponent whose automorphism rotates slots by +step."""
        two_n = 2 * self.ring_degree
        return pow(5, step, two_n)

    # -- CRT helpers over the chain prefix ----------------------------------

    def crt_consts(self, limbs: int):
        """(Q, primes, (Q/q_i)^-1 mod q_i) for exact lifts over a prefix."""
        cached = self._crt_cache.get(limbs)
        if cached is None:
            qs = self.chain[:limbs]
            big_q = 1
            for q in qs:
                big_q *= q
            t = [pow(big_q // q, -1, q) for q in qs]
            cached = (big_q, qs, t)
            self._crt_cache[limbs] = cached
        return cached


def _build_chain(n: int, depth_primes: int, scale_bits: int) -> tuple[list[int], int]:
    taken: set[int] = set()
    q0 = _closest_prime(49, 2 * n, taken)
    taken.add(q0)
    chain = [q0]
    for _ in range(depth_primes):
        q = _closest_prime(scale_bits, 2 * n, taken)
        taken.add(q)
        chain.append(q)
    special = _closest_prime(49, 2 * n, taken)
    return chain, special


@lru_cache(maxsize=4)
def make_params(profile: str = DESK_PROFILE,
                depth_primes: int | None = None) -> FheParams:
    """Build one of the named parameter profiles.

    desk: N=2^13, 8-prime chain, for fast desk-scale experiments.
    std128: N=2^14 with a longer chain, for the standard-security shape.
    depth_primes overrides the number of rescale primes (chain length
    minus one); the minimum chain of 6 supports multiplicative depth 5.
    """
    if profile == DESK_PROFILE:
        n = 1 << 13
        chain, special = _build_chain(n, depth_primes=depth_primes or 7,
                                      scale_bits=40)
    elif profile == STD128_PROFILE:
        n = 1 << 14
        chain, special = _build_chain(n, depth_primes=depth_primes or 8,
                                      scale_bits=40)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    return FheParams(ring_degree=n, chain=chain, special_prime=special,
                     scale_bits=40, const_bits=20, sigma=3.2, profile=profile)
