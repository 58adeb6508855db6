"""Two-party private set intersection for sample alignment and inference.

Diffie-Hellman blinding in the quadratic-residue subgroup of a 256-bit
safe prime: each element is hashed into the group and raised to an
ephemeral secret exponent, so only double-blinded values are ever
compared.  One session costs exactly three messages; the receiver
learns the intersection, the sender only the receiver's set size.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import gmpy2
import numpy as np

from . import simnet

TAG_PSI_BLIND_REQ = simnet.register_tag(0x5001, "PSI_BLIND_REQ")
TAG_PSI_BLIND_RESP = simnet.register_tag(0x5002, "PSI_BLIND_RESP")
TAG_PSI_ALIGN = simnet.register_tag(0x5003, "PSI_ALIGN")

# smallest safe prime above 2^255; group = quadratic residues, order Q prime
GROUP_P = gmpy2.mpz((1 << 255) + 0x2FF7F)
GROUP_Q = (GROUP_P - 1) // 2
ELEMENT_BYTES = 32


@dataclass(frozen=True)
class PsiSet:
    elements: frozenset
    role: str

    def __post_init__(self):
        if self.role not in ("receiver", "sender"):
            raise ValueError("role must be receiver or sender")
        if not all(isinstance(e, bytes) for e in self.elements):
            raise TypeError("elements must be byte strings")


class AlignmentError(RuntimeError):
    """Raised when alignment finds no common samples."""


def hash_id(record_id) -> bytes:
    """Canonical 32-byte element for a record or node identifier."""
    return hashlib.sha256(str(record_id).encode()).digest()


def hash_to_group(element: bytes):
    u = int.from_bytes(hashlib.sha256(b"h2g|" + element).digest(), "big")
    # squaring lands in the prime-order QR subgroup
    return gmpy2.powmod(u % GROUP_P, 2, GROUP_P)


def _encode(x) -> bytes:
    return int(x).to_bytes(ELEMENT_BYTES, "big")


def _encode_list(xs) -> bytes:
    return len(xs).to_bytes(4, "little") + b"".join(_encode(x) for x in xs)


def _decode_list(payload: bytes):
    if len(payload) < 4:
        raise ValueError("truncated element list")
    count = int.from_bytes(payload[:4], "little")
    if len(payload) != 4 + count * ELEMENT_BYTES:
        raise ValueError("element list length mismatch")
    out = []
    for i in range(count):
        x = gmpy2.mpz(int.from_bytes(
            payload[4 + i * ELEMENT_BYTES:4 + (i + 1) * ELEMENT_BYTES],
            "big"))
        if not 0 < x < GROUP_P:
            raise ValueError("group element out of range")
        out.append(x)
    return out


def _secret_exponent(rng: np.random.Generator):
    raw = int.from_bytes(rng.bytes(40), "big")
    return gmpy2.mpz(1 + raw % (GROUP_Q - 1))


def run_psi_receiver(io, peer, elements, rng):
    """Sub-protocol generator; returns the intersection as a set of bytes."""
    elems = sorted(set(elements))
    a = _secret_exponent(rng)
    blinded = [gmpy2.powmod(hash_to_group(e), a, GROUP_P) for e in elems]
    io.send(peer, TAG_PSI_BLIND_REQ, _encode_list(blinded))
    resp = yield io.recv(sender=peer, tag=TAG_PSI_BLIND_RESP)
    double = _decode_list(resp.payload)
    if len(double) != len(elems):
        raise ValueError("double-blind response size mismatch")
    resp2 = yield io.recv(sender=peer, tag=TAG_PSI_BLIND_RESP)
    sender_tags = {_encode(gmpy2.powmod(s, a, GROUP_P))
                   for s in _decode_list(resp2.payload)}
    return {e for e, d in zip(elems, double) if _encode(d) in sender_tags}


def run_psi_sender(io, peer, elements, rng):
    """Sub-protocol generator for the sender side; returns None."""
    b = _secret_exponent(rng)
    req = yield io.recv(sender=peer, tag=TAG_PSI_BLIND_REQ)
    double = [gmpy2.powmod(x, b, GROUP_P) for x in _decode_list(req.payload)]
    io.send(peer, TAG_PSI_BLIND_RESP, _encode_list(double))
    # own blinded set is sorted so wire order reveals nothing about input order
    own = sorted(gmpy2.powmod(hash_to_group(e), b, GROUP_P)
                 for e in set(elements))
    io.send(peer, TAG_PSI_BLIND_RESP, _encode_list(own))
    return None


def psi_run(receiver: PsiSet, sender: PsiSet, seed: int = 0):
    """One PSI session over a fresh simulated channel.

    Returns (intersection set, transcript).
    """
    if receiver.role != "receiver" or sender.role != "sender":
        raise ValueError("pass sets with matching roles")
    if not receiver.elements or not sender.elements:
        raise ValueError("both sets must be nonempty")

    def recv_prog(io):
        rng = np.random.default_rng([seed, 0xA])
        out = yield from run_psi_receiver(io, "sender", receiver.elements,
                                          rng)
        return out

    def send_prog(io):
        rng = np.random.default_rng([seed, 0xB])
        yield from run_psi_sender(io, "receiver", sender.elements, rng)

    results, transcript = simnet.run_protocol(
        {"receiver": recv_prog, "sender": send_prog})
    return results["receiver"], transcript


def align_samples(ids_a, ids_b, seed: int = 0):
    """Align two id lists; both parties end with the same ordered list.

    Returns (common ids sorted by id hash, transcript).  The receiver
    announces the intersection afterwards since alignment is mutual.
    """
    if len(set(ids_a)) != len(ids_a) or len(set(ids_b)) != len(ids_b):
        raise ValueError("ids must be unique per party")
    map_a = {hash_id(i): i for i in ids_a}
    map_b = {hash_id(i): i for i in ids_b}

    def party_a(io):
        rng = np.random.default_rng([seed, 0xA])
        inter = yield from run_psi_receiver(io, "b", map_a.keys(), rng)
        ordered = sorted(inter)
        io.send("b", TAG_PSI_ALIGN, _encode_hashes(ordered))
        return [map_a[h] for h in ordered]

    def party_b(io):
        rng = np.random.default_rng([seed, 0xB])
        yield from run_psi_sender(io, "a", map_b.keys(), rng)
        msg = yield io.recv(sender="a", tag=TAG_PSI_ALIGN)
        return [map_b[h] for h in _decode_hashes(msg.payload)]

    results, transcript = simnet.run_protocol({"a": party_a, "b": party_b})
    if not results["a"]:
        raise AlignmentError("no common samples; cannot align")
    assert results["a"] == results["b"]
    return results["a"], transcript


def _encode_hashes(hashes) -> bytes:
    return len(hashes).to_bytes(4, "little") + b"".join(hashes)


def _decode_hashes(payload: bytes):
    count = int.from_bytes(payload[:4], "little")
    if len(payload) != 4 + count * 32:
        raise ValueError("hash list length mismatch")
    return [payload[4 + 32 * i:4 + 32 * (i + 1)] for i in range(count)]
