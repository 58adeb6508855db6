"""Key material: ternary secret, public key, relinearization and rotation keys.

Key switching uses the hybrid RNS-digit construction: the i-th digit of a
polynomial is its i-th residue limb, the gadget factor is congruent to 1
mod q_i and 0 mod the other chain primes, and every key row is scaled by
the special prime P so the switching noise is divided by ~2^49.

Rotation keys cover steps +-2^j for every j below log2(slot_count);
arbitrary rotations compose from those power-of-two steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ntt import mulmod
from .params import FheParams


@dataclass
class KeySet:
    params: FheParams
    seed: int
    secret: np.ndarray          # (L+2, N) NTT, all chain limbs + special
    public: np.ndarray          # (2, L+2, N) NTT, chain limbs + special
    relin: np.ndarray           # (L+1, 2, L+2, N) digit keys for s^2 -> s
    rotation: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def rotation_steps(self) -> list[int]:
        return sorted(self.rotation)

    def public_only(self) -> "KeySet":
        """Evaluation-key view safe to hand to parties without decrypt rights."""
        return KeySet(self.params, self.seed, None, self.public,
                      self.relin, self.rotation)


def _gauss_poly(params: FheParams, rng, limbs_idx: np.ndarray) -> np.ndarray:
    e = np.round(rng.normal(0.0, params.sigma, params.ring_degree)).astype(np.int64)
    rows = np.empty((len(limbs_idx), params.ring_degree), dtype=np.uint64)
    for r, i in enumerate(limbs_idx):
        q = params.plan.primes[i]
        rows[r] = np.mod(e, np.int64(q)).astype(np.uint64)
    return params.plan.forward(rows, limbs_idx)


def _uniform_poly(params: FheParams, rng, limbs_idx: np.ndarray) -> np.ndarray:
    rows = np.empty((len(limbs_idx), params.ring_degree), dtype=np.uint64)
    for r, i in enumerate(limbs_idx):
        rows[r] = rng.integers(0, int(params.plan.primes[i]),
                               params.ring_degree, dtype=np.uint64)
    return rows  # already uniform in the NTT domain


def _pointwise(a: np.ndarray, b: np.ndarray, params: FheParams,
               limbs_idx: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    for r, i in enumerate(limbs_idx):
        q = params.plan.primes[i]
        out[r] = mulmod(a[r], b[r], q, 1.0 / float(q))
    return out


def _switch_key(params: FheParams, rng, secret: np.ndarray,
                target: np.ndarray) -> np.ndarray:
    """Digit keys taking a polynomial multiplying ``target`` back to ``secret``."""
    n = params.ring_degree
    n_digits = params.max_level + 1
    all_idx = np.arange(n_digits + 1)
    p_sp = params.special_prime
    key = np.empty((n_digits, 2, n_digits + 1, n), dtype=np.uint64)
    for i in range(n_digits):
        a = _uniform_poly(params, rng, all_idx)
        e = _gauss_poly(params, rng, all_idx)
        b = (e + np.array([params.plan.primes[j] for j in all_idx],
                          dtype=np.uint64)[:, None] - _pointwise(a, secret, params, all_idx))
        for r, j in enumerate(all_idx):
            q = params.plan.primes[j]
            b[r] = np.where(b[r] >= q, b[r] - q, b[r])
        qi = params.chain[i]
        w = np.uint64(p_sp % qi)
        b[i] = (b[i] + mulmod(target[i], w, np.uint64(qi), 1.0 / qi))
        b[i] = np.where(b[i] >= np.uint64(qi), b[i] - np.uint64(qi), b[i])
        key[i, 0] = b
        key[i, 1] = a
    return key


def keygen(params: FheParams, seed: int) -> KeySet:
    """Deterministic key generation: same (params, seed) -> same keys."""
    rng = np.random.default_rng(seed)
    n = params.ring_degree
    n_chain = params.max_level + 1
    all_idx = np.arange(n_chain + 1)

    s_coeff = rng.integers(-1, 2, n).astype(np.int64)
    s_rows = np.empty((n_chain + 1, n), dtype=np.uint64)
    for r, i in enumerate(all_idx):
        s_rows[r] = np.mod(s_coeff, np.int64(params.plan.primes[i])).astype(np.uint64)
    secret = params.plan.forward(s_rows, all_idx)

    a = _uniform_poly(params, rng, all_idx)
    e = _gauss_poly(params, rng, all_idx)
    pk0 = e + np.array([params.plan.primes[j] for j in all_idx],
                       dtype=np.uint64)[:, None] - _pointwise(a, secret, params, all_idx)
    for r, j in enumerate(all_idx):
        q = params.plan.primes[j]
        pk0[r] = np.where(pk0[r] >= q, pk0[r] - q, pk0[r])
    public = np.stack([pk0, a])

    s_sq = _pointwise(secret, secret, params, all_idx)
    relin = _switch_key(params, rng, secret, s_sq)

    rotation: dict[int, np.ndarray] = {}
    log_slots = params.slot_count.bit_length() - 1
    for j in range(log_slots):
        for step in (1 << j, -(1 << j)):
            g = params.rotation_galois_exp(step)
            perm = params.automorphism_perm(g)
            s_rot = secret[:, perm]
            rotation[step] = _switch_key(params, rng, secret, s_rot)

    return KeySet(params=params, seed=seed, secret=secret, public=public,
                  relin=relin, rotation=rotation)
