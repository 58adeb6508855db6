"""Deterministic in-process multi-party transport with byte accounting.

Parties are generator functions: they call ``io.send`` freely and
``yield io.recv(...)`` to block until a matching message arrives.  A
single-threaded round-robin scheduler steps them; identical party
programs and seeds produce bitwise-identical transcripts.

Wire framing is 4-byte little-endian payload length, 2-byte tag, 8-byte
sequence number, then the payload; header bytes count toward all byte
totals.  A round on a channel is one direction reversal (request plus
response); per-channel rounds sum into the transcript total.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

HEADER_BYTES = 4 + 2 + 8

# tag registry: modules add their protocol tags for readable accounting
TAG_NAMES: dict[int, str] = {}


def register_tag(value: int, name: str) -> int:
    if not 0 <= value < 1 << 16:
        raise ValueError("tag must fit in u16")
    TAG_NAMES[value] = name
    return value


def tag_name(value: int) -> str:
    return TAG_NAMES.get(value, f"tag_{value}")


@dataclass(frozen=True)
class PartyId:
    """Simulation participant: the label doubles as the wire address."""

    role: str            # "active" (server) or "passive" (client)
    index: int = 0

    @property
    def label(self) -> str:
        return self.role if self.role == "active" else f"{self.role}{self.index}"


def active() -> PartyId:
    return PartyId("active")


def passive(i: int) -> PartyId:
    return PartyId("passive", i)


@dataclass(frozen=True)
class Message:
    sender: str
    to: str
    tag: int
    payload: bytes
    seq: int

    @property
    def framed_bytes(self) -> int:
        return HEADER_BYTES + len(self.payload)

    def frame(self) -> bytes:
        return (len(self.payload).to_bytes(4, "little")
                + self.tag.to_bytes(2, "little")
                + self.seq.to_bytes(8, "little") + self.payload)


@dataclass
class Transcript:
    messages: list[Message] = field(default_factory=list)

    @property
    def total_bytes(self) -> int:
        return sum(m.framed_bytes for m in self.messages)

    @property
    def bytes_by_direction(self) -> dict[tuple[str, str], int]:
        out: dict[tuple[str, str], int] = {}
        for m in self.messages:
            key = (m.sender, m.to)
            out[key] = out.get(key, 0) + m.framed_bytes
        return out

    @property
    def rounds(self) -> int:
        """Direction reversals per channel: a request run plus a response
        run is one round; a trailing unanswered run does not count."""
        runs: dict[frozenset, list[str]] = {}
        for m in self.messages:
            chan = frozenset((m.sender, m.to))
            seq = runs.setdefault(chan, [])
            if not seq or seq[-1] != m.sender:
                seq.append(m.sender)
        return sum(len(s) // 2 for s in runs.values())

    def digest(self) -> str:
        h = hashlib.sha256()
        for m in self.messages:
            h.update(m.sender.encode())
            h.update(m.to.encode())
            h.update(m.frame())
        return h.hexdigest()

    def write_jsonl(self, path, debug: bool = False) -> None:
        with open(path, "w") as fh:
            for m in self.messages:
                row = {
                    "seq": m.seq,
                    "from": m.sender,
                    "to": m.to,
                    "tag": tag_name(m.tag),
                    "payload_bytes": len(m.payload),
                    "framed_bytes": m.framed_bytes,
                    "payload_sha256": hashlib.sha256(m.payload).hexdigest()[:16],
                }
                if debug:
                    row["payload_hex"] = m.payload.hex()
                fh.write(json.dumps(row) + "\n")


def account(transcript: Transcript, tags=None, parties=None) -> dict:
    """Byte/round summary, optionally restricted to tags and/or parties."""
    msgs = transcript.messages
    if tags is not None:
        tags = set(tags)
        msgs = [m for m in msgs if m.tag in tags]
    if parties is not None:
        parties = set(parties)
        msgs = [m for m in msgs if m.sender in parties or m.to in parties]
    sub = Transcript(list(msgs))
    by_tag: dict[str, dict] = {}
    for m in msgs:
        row = by_tag.setdefault(tag_name(m.tag), {"count": 0, "bytes": 0})
        row["count"] += 1
        row["bytes"] += m.framed_bytes
    return {
        "messages": len(msgs),
        "bytes": sub.total_bytes,
        "rounds": sub.rounds,
        "by_tag": by_tag,
    }


# -- scheduler ----------------------------------------------------------------


@dataclass
class RecvRequest:
    sender: str | None = None
    tag: int | None = None

    def matches(self, m: Message) -> bool:
        return ((self.sender is None or m.sender == self.sender)
                and (self.tag is None or m.tag == self.tag))


class SimDeadlock(RuntimeError):
    def __init__(self, states: dict[str, str]):
        lines = "; ".join(f"{k}: {v}" for k, v in sorted(states.items()))
        super().__init__(f"no party can progress ({lines})")
        self.states = states


class PartyIO:
    """Per-party handle: send immediately, recv by yielding the request."""

    def __init__(self, label: str, net: "_Net"):
        self.label = label
        self._net = net

    def send(self, to, tag: int, payload: bytes) -> None:
        if isinstance(to, PartyId):
            to = to.label
        self._net.post(self.label, to, tag, bytes(payload))

    def recv(self, sender=None, tag: int | None = None) -> RecvRequest:
        if isinstance(sender, PartyId):
            sender = sender.label
        return RecvRequest(sender, tag)


class _Net:
    def __init__(self):
        self.transcript = Transcript()
        self.inboxes: dict[str, list[Message]] = {}
        self._chan_seq: dict[tuple[str, str], int] = {}

    def post(self, sender: str, to: str, tag: int, payload: bytes) -> None:
        key = (sender, to)
        seq = self._chan_seq.get(key, 0)
        self._chan_seq[key] = seq + 1
        msg = Message(sender, to, tag, payload, seq)
        self.transcript.messages.append(msg)
        self.inboxes.setdefault(to, []).append(msg)


def run_protocol(parties: dict, seed: int = 0) -> tuple[dict, Transcript]:
    """Run generator-based party programs to completion.

    ``parties`` maps label (or PartyId) to a function taking a PartyIO
    and returning a generator.  Returns per-party results and the
    transcript.  Raises SimDeadlock when every unfinished party waits on
    a message that can never arrive.
    """
    net = _Net()
    order = [p.label if isinstance(p, PartyId) else p for p in parties]
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    gens, waiting, results = {}, {}, {}
    by_label = {(p.label if isinstance(p, PartyId) else p): fn
                for p, fn in parties.items()}
    for label in order:
        gens[label] = by_label[label](PartyIO(label, net))
        waiting[label] = None  # runnable

    def advance(label, send_value):
        try:
            req = gens[label].send(send_value)
        except StopIteration as stop:
            results[label] = stop.value
            del gens[label]
            del waiting[label]
            return
        if not isinstance(req, RecvRequest):
            raise TypeError(f"party {label!r} yielded {req!r}; "
                            "yield io.recv(...) to wait for a message")
        waiting[label] = req

    for label in list(order):
        advance(label, None)

    while gens:
        progressed = False
        for label in order:
            if label not in gens:
                continue
            req = waiting[label]
            inbox = net.inboxes.get(label, [])
            hit = next((i for i, m in enumerate(inbox) if req.matches(m)),
                       None)
            if hit is None:
                continue
            msg = inbox.pop(hit)
            progressed = True
            advance(label, msg)
        if not progressed and gens:
            states = {}
            for label, req in waiting.items():
                want = [f"from {req.sender}" if req.sender else "from anyone"]
                if req.tag is not None:
                    want.append(f"tag {tag_name(req.tag)}")
                pending = len(net.inboxes.get(label, []))
                states[label] = (f"waiting {' '.join(want)}, "
                                 f"{pending} unmatched queued")
            raise SimDeadlock(states)
    return results, net.transcript
