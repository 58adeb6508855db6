"""Federated logistic-regression protocols over the simulated network.

Horizontal setting: a server holds the key pair and the model; clients
hold disjoint sample shards with a common schema.  Each round the
server broadcasts the encrypted replicated weights, every client runs
one improved-procedure gradient step on its own seeded batch and
returns the encrypted updated weights, and the server decrypts and
averages them.

Vertical setting: party B holds the key pair, the model, and one
feature block; party A holds the labels and the other block.  Batches
are drawn from a shared seeded sequence and cross-checked by digest.
B ships encrypted weights and its zero-filled transposed feature
block; A adds its own encrypted block, runs the residual gradient
step, and returns the update for B to decrypt.  Evaluation keeps the
labels at A: it masks each encrypted margin with a fresh positive
factor so B learns only the correct/incorrect counts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .. import simnet
from ..ckks import cipher
from ..ckks.serialize import deserialize_ct, serialize_ct
from .core import LrConfig, WeightState, score_accuracy
from .kernels import (IMPROVED_LEVELS, PackedMatrix, _pow2, decrypt_beta,
                      grad_step_improved, pack_cols, replicate_beta)

TAG_LR_THETA = simnet.register_tag(0x7001, "LR_THETA")
TAG_LR_GRAD = simnet.register_tag(0x7002, "LR_GRAD")
TAG_LR_XB = simnet.register_tag(0x7003, "LR_XB")
TAG_LR_PRED = simnet.register_tag(0x7004, "LR_PRED")
TAG_LR_ACC = simnet.register_tag(0x7005, "LR_ACC")

ACTIVE = simnet.active().label

MAX_DEFAULT_BATCH = 1024
EVAL_LEVELS = 2

# boundary predictions count as incorrect; under approximate decryption
# "at the boundary" means within the engine's deep-circuit precision floor
TIE_FLOOR = 2.0 ** -14


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


def _check_fingerprint(payload: bytes, keys) -> bytes:
    if payload[:32] != _key_fingerprint(keys):
        raise ValueError("public key fingerprint mismatch")
    return payload[32:]


def batch_indices(rng, n: int, config: LrConfig) -> np.ndarray:
    """Next batch from a party's seeded sequence.

    Full set by default, capped so one batch stays a handful of
    ciphertext chunks; an explicit batch_size wins.
    """
    batch = min(config.batch_size or min(n, MAX_DEFAULT_BATCH), n)
    return rng.choice(n, batch, replace=False)


def _batch_digest(idx: np.ndarray) -> bytes:
    return hashlib.sha256(np.asarray(idx, np.uint64)
                          .tobytes()).digest()[:16]


# -- horizontal ----------------------------------------------------------------


@dataclass
class HflServer:
    """Key and model owner; aggregates client updates each round."""

    keys: object
    n_features: int
    beta0: np.ndarray | None = None


@dataclass
class HflClient:
    """One sample shard; never sees the secret key."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, float)
        self.y = np.asarray(self.y, float)
        if len(self.X) != len(self.y):
            raise ValueError("shard features and labels disagree in length")

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


def hfl_train(server: HflServer, clients: list, config: LrConfig,
              transport=None, seed: int = 0) -> WeightState:
    """Train over sample-sharded clients; returns the final weights."""
    if not clients:
        raise ValueError("no clients")
    schemas = {c.n_features for c in clients}
    if schemas != {server.n_features}:
        raise ValueError(f"schema mismatch across clients: {sorted(schemas)} "
                         f"vs server {server.n_features}")
    transport = transport or simnet.run_protocol
    d = server.n_features + 1
    width = _pow2(d)
    keys = server.keys
    eval_keys = keys.public_only()
    fingerprint = _key_fingerprint(keys)
    labels = [simnet.passive(k).label for k in range(len(clients))]
    final = {}

    def server_program(io):
        theta = (np.zeros(d) if server.beta0 is None
                 else np.asarray(server.beta0, float))
        for t in range(config.iterations):
            rng = np.random.default_rng([config.seed, t, 0x5E])
            ct = replicate_beta(theta, width, keys, IMPROVED_LEVELS,
                                "cols", rng)
            blob = fingerprint + serialize_ct(ct)
            for lbl in labels:
                io.send(lbl, TAG_LR_THETA, blob)
            updates = []
            for lbl in labels:
                msg = yield io.recv(sender=lbl, tag=TAG_LR_GRAD)
                ct_new = deserialize_ct(msg.payload, keys.params)
                updates.append(decrypt_beta(ct_new, keys, width, "cols", d))
            theta = np.mean(updates, axis=0)
            final["ct"] = ct
        return theta

    def make_client(k: int, shard: HflClient):
        def program(io):
            rng_batch = np.random.default_rng([config.seed, k])
            for t in range(config.iterations):
                msg = yield io.recv(sender=ACTIVE, tag=TAG_LR_THETA)
                body = _check_fingerprint(msg.payload, eval_keys)
                ct_theta = deserialize_ct(body, eval_keys.params)
                idx = batch_indices(rng_batch, len(shard.X), config)
                rows = (shard.y[idx, None]
                        * np.hstack([np.ones((len(idx), 1)), shard.X[idx]]))
                enc_rng = np.random.default_rng([config.seed, t, 100 + k])
                z = pack_cols(rows, eval_keys, IMPROVED_LEVELS, enc_rng)
                ct_new = grad_step_improved(z, ct_theta, config, t)
                io.send(ACTIVE, TAG_LR_GRAD, serialize_ct(ct_new))
        return program

    parties = {simnet.active(): server_program}
    for k, shard in enumerate(clients):
        parties[simnet.passive(k)] = make_client(k, shard)
    results, transcript = transport(parties, seed)
    return WeightState(results[ACTIVE], final.get("ct"), transcript)


def hfl_evaluate(server: HflServer, model, X, y) -> float:
    """Server-side plaintext scoring of a held-out shard."""
    beta = model.beta if isinstance(model, WeightState) else model
    return score_accuracy(beta, X, y)


# -- vertical ------------------------------------------------------------------


@dataclass
class VflPartyA:
    """Label holder with one feature block; computes on ciphertexts.

    b_patch, when set, is a plaintext additive correction for the
    partner's columns: rows the partner stores under an offset this
    party knows (for example masked synthetic rows) are fixed up inside
    the encrypted batch sum rather than ever being unmasked in the open.
    """

    X: np.ndarray
    y: np.ndarray
    seed: int | None = None
    b_patch: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, float)
        self.y = np.asarray(self.y, float)
        if len(self.X) != len(self.y):
            raise ValueError("features and labels disagree in length")
        if self.b_patch is not None:
            self.b_patch = np.asarray(self.b_patch, float)
            if len(self.b_patch) != len(self.X):
                raise ValueError("patch and features disagree in length")


@dataclass
class VflPartyB:
    """Key and model owner with the other feature block."""

    X: np.ndarray
    keys: object
    beta0: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, float)


def _vfl_layout(party_a: VflPartyA, party_b: VflPartyB):
    if len(party_a.X) != len(party_b.X):
        raise ValueError("parties are not sample-aligned")
    fa, fb = party_a.X.shape[1], party_b.X.shape[1]
    if party_a.b_patch is not None and party_a.b_patch.shape[1] != fb:
        raise ValueError("patch width does not match the partner block")
    d = 1 + fa + fb
    return fa, fb, d, _pow2(d)


def vfl_train(party_a: VflPartyA, party_b: VflPartyB, config: LrConfig,
              transport=None, seed: int = 0) -> WeightState:
    """Two-party feature-split training; B ends up with the weights.

    The joint row layout is [bias | A's block | B's block]; each party
    zero-fills the other's columns before encrypting, so the encrypted
    batch is the slotwise sum of the two contributions.
    """
    transport = transport or simnet.run_protocol
    fa, fb, d, width = _vfl_layout(party_a, party_b)
    n = len(party_a.X)
    keys = party_b.keys
    eval_keys = keys.public_only()
    fingerprint = _key_fingerprint(keys)
    b_label = simnet.passive(0).label
    final = {}

    def b_program(io):
        theta = (np.zeros(d) if party_b.beta0 is None
                 else np.asarray(party_b.beta0, float))
        rng_batch = np.random.default_rng(
            [config.seed if party_b.seed is None else party_b.seed])
        for t in range(config.iterations):
            idx = batch_indices(rng_batch, n, config)
            rows = np.zeros((len(idx), d))
            rows[:, 0] = 1.0
            rows[:, 1 + fa:] = party_b.X[idx]
            enc_rng = np.random.default_rng([config.seed, t, 0xB])
            ct_theta = replicate_beta(theta, width, keys, IMPROVED_LEVELS,
                                      "cols", enc_rng)
            zb = pack_cols(rows, keys, IMPROVED_LEVELS, enc_rng)
            io.send(ACTIVE, TAG_LR_THETA, fingerprint + serialize_ct(ct_theta))
            io.send(ACTIVE, TAG_LR_XB,
                    _batch_digest(idx) + _pack_cts(zb.chunks))
            msg = yield io.recv(sender=ACTIVE, tag=TAG_LR_GRAD)
            ct_new = deserialize_ct(msg.payload, keys.params)
            theta = decrypt_beta(ct_new, keys, width, "cols", d)
            final["ct"] = ct_new
        return theta

    def a_program(io):
        rng_batch = np.random.default_rng(
            [config.seed if party_a.seed is None else party_a.seed])
        for t in range(config.iterations):
            idx = batch_indices(rng_batch, n, config)
            msg = yield io.recv(sender=b_label, tag=TAG_LR_THETA)
            body = _check_fingerprint(msg.payload, eval_keys)
            ct_theta = deserialize_ct(body, eval_keys.params)
            msg = yield io.recv(sender=b_label, tag=TAG_LR_XB)
            if msg.payload[:16] != _batch_digest(idx):
                raise ValueError(
                    "misaligned batch sequences: digest mismatch "
                    f"at round {t} (seed mismatch between parties)")
            xb = _unpack_cts(msg.payload, eval_keys.params, 16)
            rows = np.zeros((len(idx), d))
            rows[:, 1:1 + fa] = party_a.X[idx]
            if party_a.b_patch is not None:
                rows[:, 1 + fa:] = party_a.b_patch[idx]
            enc_rng = np.random.default_rng([config.seed, t, 0xA])
            za = pack_cols(rows, eval_keys, IMPROVED_LEVELS, enc_rng)
            chunks = [cipher.add(a, b) for a, b in zip(za.chunks, xb)]
            z = PackedMatrix(chunks, len(idx), width, "cols", eval_keys)
            target = (party_a.y[idx] > 0).astype(float)
            ct_new = grad_step_improved(z, ct_theta, config, t, target=target)
            io.send(b_label, TAG_LR_GRAD, serialize_ct(ct_new))

    results, transcript = transport(
        {simnet.active(): a_program, simnet.passive(0): b_program}, seed)
    return WeightState(results[b_label], final.get("ct"), transcript)


def vfl_evaluate(party_a: VflPartyA, party_b: VflPartyB, model,
                 rows=None, transport=None, seed: int = 0) -> float:
    """Encrypted two-party scoring; returns correct/total.

    A forms each sample's encrypted margin, multiplies in 0.25 times
    the true label times a fresh factor drawn from (0,1), and ships the
    result; B decrypts and counts strictly positive entries.  A value
    of exactly zero counts as incorrect.
    """
    transport = transport or simnet.run_protocol
    fa, fb, d, width = _vfl_layout(party_a, party_b)
    beta = model.beta if isinstance(model, WeightState) else np.asarray(model)
    if len(beta) != d:
        raise ValueError("model width does not match the joint schema")
    idx = np.arange(len(party_a.X)) if rows is None else np.asarray(rows)
    if len(idx) == 0:
        raise ValueError("empty test set")
    n = len(idx)
    keys = party_b.keys
    eval_keys = keys.public_only()
    fingerprint = _key_fingerprint(keys)
    b_label = simnet.passive(0).label
    slots = keys.params.slot_count
    per = slots // width

    def b_program(io):
        enc_rng = np.random.default_rng([seed, 0xEB])
        ct_theta = replicate_beta(beta, width, keys, EVAL_LEVELS,
                                  "cols", enc_rng)
        rows_b = np.zeros((n, d))
        rows_b[:, 0] = 1.0
        rows_b[:, 1 + fa:] = party_b.X[idx]
        zb = pack_cols(rows_b, keys, EVAL_LEVELS, enc_rng)
        io.send(ACTIVE, TAG_LR_THETA, fingerprint + serialize_ct(ct_theta))
        io.send(ACTIVE, TAG_LR_XB, _batch_digest(idx) + _pack_cts(zb.chunks))
        msg = yield io.recv(sender=ACTIVE, tag=TAG_LR_PRED)
        correct = 0
        remaining = n
        for ct in _unpack_cts(msg.payload, keys.params):
            vals = cipher.decrypt(ct, keys)[:min(per, remaining)]
            correct += int(np.sum(vals > TIE_FLOOR))
            remaining -= len(vals)
        acc = correct / n
        io.send(ACTIVE, TAG_LR_ACC, json.dumps({"accuracy": acc}).encode())
        return acc

    def a_program(io):
        msg = yield io.recv(sender=b_label, tag=TAG_LR_THETA)
        body = _check_fingerprint(msg.payload, eval_keys)
        ct_theta = deserialize_ct(body, eval_keys.params)
        msg = yield io.recv(sender=b_label, tag=TAG_LR_XB)
        if msg.payload[:16] != _batch_digest(idx):
            raise ValueError("misaligned test rows: digest mismatch")
        xb = _unpack_cts(msg.payload, eval_keys.params, 16)
        rows_a = np.zeros((n, d))
        rows_a[:, 1:1 + fa] = party_a.X[idx]
        if party_a.b_patch is not None:
            rows_a[:, 1 + fa:] = party_a.b_patch[idx]
        enc_rng = np.random.default_rng([seed, 0xEA])
        za = pack_cols(rows_a, eval_keys, EVAL_LEVELS, enc_rng)
        params = eval_keys.params
        mask_rng = np.random.default_rng([seed, 0x10])
        y = party_a.y[idx]
        preds = []
        for c, (ca, cb) in enumerate(zip(za.chunks, xb)):
            u = cipher.rescale(cipher.mult(cipher.add(ca, cb), ct_theta,
                                           eval_keys), params.scale_bits)
            for t in range(width.bit_length() - 1):
                u = cipher.add(u, cipher.rotate(u, per << t, eval_keys))
            k = min(per, n - c * per)
            draws = mask_rng.random(k)
            while np.any(draws == 0):            # sampler rejects exact 0
                zero = draws == 0
                draws[zero] = mask_rng.random(int(np.sum(zero)))
            # keep the factor in (1/16, 1) so a genuinely positive margin
            # cannot be masked below the tie floor
            factors = (1.0 + 15.0 * draws) / 16.0
            coef = np.zeros(per)
            coef[:k] = 0.25 * y[c * per:c * per + k] * factors
            masked = cipher.cmult(u, np.tile(coef, width), params.const_bits)
            preds.append(cipher.rescale(masked, params.const_bits))
        io.send(b_label, TAG_LR_PRED, _pack_cts(preds))
        msg = yield io.recv(sender=b_label, tag=TAG_LR_ACC)
        return json.loads(msg.payload)["accuracy"]

    results, _ = transport(
        {simnet.active(): a_program, simnet.passive(0): b_program}, seed)
    return results[ACTIVE]
