"""Federated boosted-tree training and the two inference protocols.

Training: the label holder (active party) computes gradients, encrypts
packed (g, h) pairs, and broadcasts them once per boosting round.
Feature holders aggregate encrypted bucket histograms per node; the
active party decrypts, picks the best split across all parties, and
announces only (owner, record id).  Thresholds live in the owner's
private lookup table.  Right-child histograms come from sibling
subtraction, so only roots and left children are aggregated.

Inference: the classic walk asks a node's owner for the branch
direction, one round per passive-owned node on the realized path;
messages carry a deployment-style signed audit envelope.  The
set-intersection variant has every party prune untaken subtrees of its
own nodes, then runs one PSI per passive party; the intersection is
exactly the realized root-to-leaf path per tree.
"""

from __future__ import annotations

import hashlib
import hmac as hmac_mod
import json
import struct
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import simnet
from ..ckks.serialize import deserialize_ct, serialize_ct
from ..psi import hash_id, run_psi_receiver, run_psi_sender
from . import histograms as hist
from .core import (
    SplitConfig,
    best_split,
    bucket_index,
    compute_gh,
    leaf_weight,
    quantile_splits,
)

TAG_SB_GH = simnet.register_tag(0x6001, "SB_GH")
TAG_SB_NODE = simnet.register_tag(0x6002, "SB_NODE")
TAG_SB_HIST = simnet.register_tag(0x6003, "SB_HIST")
TAG_SB_WIN = simnet.register_tag(0x6004, "SB_WIN")
TAG_SB_SPLIT = simnet.register_tag(0x6005, "SB_SPLIT")
TAG_SB_MODEL = simnet.register_tag(0x6006, "SB_MODEL")
TAG_SB_DONE = simnet.register_tag(0x6007, "SB_DONE")
TAG_INF_REQ = simnet.register_tag(0x6101, "INF_REQ")
TAG_INF_RESP = simnet.register_tag(0x6102, "INF_RESP")

ACTIVE = "active"


@dataclass
class FedTreeNode:
    node_id: int
    owner: str | None = None
    record_id: int = -1
    left: int = -1
    right: int = -1
    leaf_weight: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_weight is not None


@dataclass
class FedTree:
    nodes: dict

    def subtree_ids(self, root: int) -> list:
        out, stack = [], [root]
        while stack:
            nid = stack.pop()
            out.append(nid)
            node = self.nodes[nid]
            if not node.is_leaf:
                stack.extend([node.left, node.right])
        return out


@dataclass
class FedTreeModel:
    trees: list
    parties: list
    config: SplitConfig

    def node_count(self) -> int:
        return sum(len(t.nodes) for t in self.trees)


@dataclass
class ActiveParty:
    y: np.ndarray
    X: np.ndarray | None = None
    keys: object = None
    lookup: dict = field(default_factory=dict)


@dataclass
class PassiveParty:
    label: str
    X: np.ndarray
    keys: object = None
    lookup: dict = field(default_factory=dict)


def _pack_bits(sel: np.ndarray) -> bytes:
    return struct.pack("<I", sel.size) + np.packbits(sel).tobytes()


def _unpack_bits(payload: bytes, offset: int = 0):
    (n,) = struct.unpack_from("<I", payload, offset)
    nbytes = (n + 7) // 8
    bits = np.unpackbits(np.frombuffer(
        payload, np.uint8, nbytes, offset + 4))[:n]
    return bits.astype(bool), offset + 4 + nbytes


def _pack_cts(cts: list) -> bytes:
    parts = [struct.pack("<H", len(cts))]
    for ct in cts:
        blob = serialize_ct(ct)
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def _unpack_cts(payload: bytes, params, offset: int = 0):
    (count,) = struct.unpack_from("<H", payload, offset)
    offset += 2
    cts = []
    for _ in range(count):
        (ln,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        cts.append(deserialize_ct(payload[offset:offset + ln], params))
        offset += ln
    return cts, offset


# -- training -----------------------------------------------------------------


def _passive_train_program(party: PassiveParty, config: SplitConfig):
    splits = [quantile_splits(party.X[:, k], config.epsilon)
              for k in range(party.X.shape[1])]
    widths = [len(t) + 1 for t in splits]

    def program(io):
        replicated = None
        while True:
            msg = yield io.recv(sender=ACTIVE)
            if msg.tag == TAG_SB_DONE:
                return None
            if msg.tag == TAG_SB_MODEL:
                continue  # topology retained implicitly via shared model
            if msg.tag == TAG_SB_GH:
                cts, _ = _unpack_cts(msg.payload, party.keys.params)
                gh = hist.GhCipher(cts, party.X.shape[0],
                                   *_gh_geometry(party.keys.params,
                                                 party.X.shape[0]))
                replicated = hist.replicate_segments(gh, party.keys)
            elif msg.tag == TAG_SB_NODE:
                sel, _ = _unpack_bits(msg.payload)
                eh = hist.aggregate_encrypted_gh(
                    np.flatnonzero(sel), party.X, replicated, splits,
                    party.keys)
                head = struct.pack("<H", len(widths)) + bytes(widths)
                io.send(ACTIVE, TAG_SB_HIST, head + _pack_cts(eh.chain_cts))
            elif msg.tag == TAG_SB_WIN:
                k, v = struct.unpack_from("<HH", msg.payload)
                sel, _ = _unpack_bits(msg.payload, 4)
                thr = splits[k][v]
                rid = len(party.lookup)
                party.lookup[rid] = (int(k), float(thr))
                left = sel & (party.X[:, k] <= thr)
                io.send(ACTIVE, TAG_SB_SPLIT,
                        struct.pack("<I", rid) + _pack_bits(left))

    return program


def _gh_geometry(params, n: int):
    per_chunk = min(n, params.slot_count // 2)
    seg = hist._pow2_at_least(2 * per_chunk)
    return per_chunk, seg, params.slot_count // seg


def train_ensemble(active: ActiveParty, passives: list, config: SplitConfig,
                   seed: int = 0):
    """Run the full boosting protocol; returns (model, transcript).

    Lookup tables are filled in on the party objects.  The active party
    must hold the decryption keys; passives get evaluation keys only.
    """
    y = np.asarray(active.y, dtype=np.float64)
    n = len(y)
    keys = active.keys
    params = keys.params
    d_active = 0 if active.X is None else active.X.shape[1]
    splits_a = [quantile_splits(active.X[:, k], config.epsilon)
                for k in range(d_active)]
    widths_a = [len(t) + 1 for t in splits_a]
    passive_labels = [p.label for p in passives]

    def active_program(io):
        rng = np.random.default_rng([seed, 0xC0FFEE])
        y_hat = np.zeros(n)
        trees = []
        widths_by_party = {ACTIVE: widths_a}
        for t in range(config.num_trees):
            g, h = compute_gh(y, y_hat)
            gh_ct = hist.encrypt_gh_pairs(g, h, keys, rng)
            blob = _pack_cts(gh_ct.cts)
            for lbl in passive_labels:
                io.send(lbl, TAG_SB_GH, blob)
            tree = FedTree({})
            y_delta = np.zeros(n)
            hist_cache = {}

            def make_leaf(nid, idx):
                w = leaf_weight(g[idx].sum(), h[idx].sum(), config.lam)
                tree.nodes[nid] = FedTreeNode(
                    nid, leaf_weight=config.learning_rate * w)
                y_delta[idx] = tree.nodes[nid].leaf_weight

            queue = deque([(0, np.arange(n), 0, None)])
            while queue:
                nid, idx, depth, parent = queue.popleft()
                if depth >= config.max_depth or idx.size < 2 * config.min_leaf:
                    make_leaf(nid, idx)
                    continue
                left_sib = 2 * parent + 1 if parent is not None else None
                if parent is not None and parent in hist_cache \
                        and left_sib in hist_cache:
                    hists = {
                        lbl: (hist_cache[parent][lbl][0]
                              - hist_cache[left_sib][lbl][0],
                              hist_cache[parent][lbl][1]
                              - hist_cache[left_sib][lbl][1])
                        for lbl in hist_cache[parent]}
                else:
                    sel = np.zeros(n, dtype=bool)
                    sel[idx] = True
                    payload = _pack_bits(sel)
                    for lbl in passive_labels:
                        io.send(lbl, TAG_SB_NODE, payload)
                    hists = {ACTIVE: _plain_hist(active.X, splits_a,
                                                 idx, g, h)}
                    for lbl in passive_labels:
                        msg = yield io.recv(sender=lbl, tag=TAG_SB_HIST)
                        (d_p,) = struct.unpack_from("<H", msg.payload)
                        widths = list(msg.payload[2:2 + d_p])
                        widths_by_party[lbl] = widths
                        cts, _ = _unpack_cts(msg.payload, params, 2 + d_p)
                        eh = hist.EncryptedHistogram(
                            cts, hist.histogram_pairs(widths),
                            (d_p, max(widths, default=1)),
                            *_gh_geometry(params, n)[1:])
                        hists[lbl] = hist.decrypt_histogram(eh, keys)
                hist_cache[nid] = hists
                owner, k, v, gain = _global_best(hists, widths_by_party,
                                                 config)
                if gain <= 0.0:
                    make_leaf(nid, idx)
                    continue
                if owner == ACTIVE:
                    thr = splits_a[k][v]
                    rid = len(active.lookup)
                    active.lookup[rid] = (int(k), float(thr))
                    left_global = np.zeros(n, dtype=bool)
                    left_global[idx] = active.X[idx, k] <= thr
                else:
                    sel = np.zeros(n, dtype=bool)
                    sel[idx] = True
                    io.send(owner, TAG_SB_WIN,
                            struct.pack("<HH", k, v) + _pack_bits(sel))
                    msg = yield io.recv(sender=owner, tag=TAG_SB_SPLIT)
                    (rid,) = struct.unpack_from("<I", msg.payload)
                    left_global, _ = _unpack_bits(msg.payload, 4)
                left_idx = idx[left_global[idx]]
                right_idx = idx[~left_global[idx]]
                if min(left_idx.size, right_idx.size) < config.min_leaf:
                    make_leaf(nid, idx)
                    continue
                tree.nodes[nid] = FedTreeNode(nid, owner=owner,
                                              record_id=rid,
                                              left=2 * nid + 1,
                                              right=2 * nid + 2)
                queue.append((2 * nid + 1, left_idx, depth + 1, None))
                queue.append((2 * nid + 2, right_idx, depth + 1, nid))
            trees.append(tree)
            y_hat += y_delta
        model = FedTreeModel(trees, [ACTIVE, *passive_labels], config)
        topo = json.dumps(model_to_dict(model)).encode()
        for lbl in passive_labels:
            io.send(lbl, TAG_SB_MODEL, topo)
            io.send(lbl, TAG_SB_DONE, b"")
        return model

    programs = {ACTIVE: active_program}
    for p in passives:
        programs[p.label] = _passive_train_program(p, config)
    results, transcript = simnet.run_protocol(programs, seed=seed)
    return results[ACTIVE], transcript


def _plain_hist(X, splits, idx, g, h):
    if X is None or X.shape[1] == 0:
        return np.zeros((0, 1)), np.zeros((0, 1))
    d = X.shape[1]
    width = max((len(t) + 1 for t in splits), default=1)
    G = np.zeros((d, width))
    H = np.zeros((d, width))
    for k in range(d):
        if len(splits[k]) == 0:
            continue
        b = bucket_index(X[idx, k], splits[k])
        np.add.at(G[k], b, g[idx])
        np.add.at(H[k], b, h[idx])
    return G, H


def _global_best(hists, widths_by_party, config):
    best = (None, -1, -1, 0.0)
    for owner in hists:
        G, H = hists[owner]
        if G.shape[0] == 0:
            continue
        counts = widths_by_party.get(owner)
        k, v, gain = best_split(G, H, config, counts)
        if gain > best[3]:
            best = (owner, k, v, gain)
    return best


# -- model io -----------------------------------------------------------------


def model_to_dict(model: FedTreeModel) -> dict:
    return {
        "version": 1,
        "parties": model.parties,
        "config": {
            "lam": model.config.lam, "gamma": model.config.gamma,
            "epsilon": model.config.epsilon,
            "max_depth": model.config.max_depth,
            "num_trees": model.config.num_trees,
            "learning_rate": model.config.learning_rate,
            "min_leaf": model.config.min_leaf,
        },
        "trees": [
            [{"id": nd.node_id, "owner": nd.owner, "record": nd.record_id,
              "left": nd.left, "right": nd.right, "w": nd.leaf_weight}
             for nd in sorted(tree.nodes.values(), key=lambda x: x.node_id)]
            for tree in model.trees],
    }


def model_from_dict(doc: dict) -> FedTreeModel:
    if doc.get("version") != 1:
        raise ValueError("unsupported model version")
    trees = []
    for rows in doc["trees"]:
        nodes = {r["id"]: FedTreeNode(r["id"], r["owner"], r["record"],
                                      r["left"], r["right"], r["w"])
                 for r in rows}
        trees.append(FedTree(nodes))
    return FedTreeModel(trees, doc["parties"], SplitConfig(**doc["config"]))


def save_model(model: FedTreeModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)


def load_model(path) -> FedTreeModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def save_lookup(lookup: dict, path) -> None:
    """Private per-party file; never merged into the shared model."""
    with open(path, "w") as fh:
        json.dump({"version": 1,
                   "records": {str(r): [k, t] for r, (k, t) in
                               lookup.items()}}, fh, indent=1)


def load_lookup(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    return {int(r): (int(k), float(t))
            for r, (k, t) in doc["records"].items()}


# -- inference ----------------------------------------------------------------


def _audit_envelope(kind: str, session: bytes, counter: int,
                    fields: dict) -> bytes:
    """Deployment-style signed request/response body.

    Cross-organization inference calls carry caller identity, session
    and correlation ids, a nonce, and an HMAC over the body, mirroring
    what audited production gateways attach to every exchange.
    """
    body = {
        "v": 1,
        "kind": kind,
        "session": session.hex(),
        "correlation": hashlib.sha256(
            session + counter.to_bytes(8, "little")).hexdigest(),
        "caller": fields.pop("caller"),
        "subject": fields.pop("subject"),
        "issued": f"2026-01-01T00:00:{counter % 60:02d}.{counter:06d}Z",
        "nonce": hashlib.sha256(b"n" + session
                                + counter.to_bytes(8, "little")).hexdigest(),
        **fields,
    }
    mac_key = hashlib.sha256(b"audit-mac" + session).digest()
    canon = json.dumps(body, sort_keys=True).encode()
    body["hmac"] = hmac_mod.new(mac_key, canon, hashlib.sha256).hexdigest()
    return json.dumps(body).encode()


_CALLER_DN = "CN=inference-coordinator,OU=federation,O=party-active,C=ZZ"
_RESPONDER_DN = "CN=lookup-responder,OU=federation,O=party-{label},C=ZZ"


def _passive_infer_program(party: PassiveParty, shard: np.ndarray,
                           session: bytes):
    def program(io):
        counter = 0
        while True:
            msg = yield io.recv(sender=ACTIVE)
            if msg.tag == TAG_SB_DONE:
                return None
            req = json.loads(msg.payload)
            k, thr = party.lookup[int(req["record"])]
            direction = "L" if shard[k] <= thr else "R"
            counter += 1
            io.send(ACTIVE, TAG_INF_RESP, _audit_envelope(
                "lookup-response", session, counter,
                {"caller": _RESPONDER_DN.format(label=party.label),
                 "subject": req["subject"], "tree": req["tree"],
                 "node": req["node"], "record": req["record"],
                 "direction": direction}))

    return program


def classic_infer(model: FedTreeModel, active: ActiveParty, passives: list,
                  shards: dict, sample_id=0, seed: int = 0):
    """Node-by-node federated walk; one round per passive-owned node.

    shards maps party label to that party's feature vector for the
    sample.  Returns (score, leaf ids per tree, transcript).
    """
    session = hashlib.sha256(
        b"session" + str((sample_id, seed)).encode()).digest()[:16]
    subject = hashlib.sha256(b"sample" + str(sample_id).encode()).hexdigest()

    def active_program(io):
        counter = 0
        score = 0.0
        leaves = []
        for t, tree in enumerate(model.trees):
            node = tree.nodes[0]
            while not node.is_leaf:
                if node.owner == ACTIVE:
                    k, thr = active.lookup[node.record_id]
                    go_left = shards[ACTIVE][k] <= thr
                else:
                    counter += 1
                    io.send(node.owner, TAG_INF_REQ, _audit_envelope(
                        "lookup-request", session, counter,
                        {"caller": _CALLER_DN, "subject": subject,
                         "tree": t, "node": node.node_id,
                         "record": node.record_id}))
                    msg = yield io.recv(sender=node.owner,
                                        tag=TAG_INF_RESP)
                    go_left = json.loads(msg.payload)["direction"] == "L"
                node = tree.nodes[node.left if go_left else node.right]
            leaves.append(node.node_id)
            score += node.leaf_weight
        for p in passives:
            io.send(p.label, TAG_SB_DONE, b"")
        return score, leaves

    programs = {ACTIVE: active_program}
    for p in passives:
        programs[p.label] = _passive_infer_program(p, shards[p.label],
                                                   session)
    results, transcript = simnet.run_protocol(programs, seed=seed)
    score, leaves = results[ACTIVE]
    return score, leaves, transcript


def _retained_nodes(model: FedTreeModel, owner_label: str, lookup: dict,
                    shard) -> list:
    """Per-tree node lists after deleting untaken subtrees of owned nodes."""
    retained = []
    for tree in model.trees:
        keep = set(tree.nodes)
        for node in tree.nodes.values():
            if node.is_leaf or node.owner != owner_label:
                continue
            k, thr = lookup[node.record_id]
            untaken = node.right if shard[k] <= thr else node.left
            keep.difference_update(tree.subtree_ids(untaken))
        retained.append(sorted(keep))
    return retained


def _psi_elements(retained: list) -> set:
    return {hash_id(f"{t}:{nid}")
            for t, nodes in enumerate(retained) for nid in nodes}


def psi_infer(model: FedTreeModel, active: ActiveParty, passives: list,
              shards: dict, sample_id=0, seed: int = 0):
    """Subtree-deletion inference: one PSI per passive party.

    Each party prunes its own nodes' untaken subtrees across all trees,
    then the active party (PSI receiver) intersects the retained node
    sets.  The per-tree intersection must be a root-to-leaf chain.
    Returns (score, leaf ids per tree, transcript).
    """
    retained_a = _retained_nodes(model, ACTIVE, active.lookup,
                                 shards.get(ACTIVE))

    def active_program(io):
        common = _psi_elements(retained_a)
        for i, p in enumerate(passives):
            rng = np.random.default_rng([seed, sample_id, 0xA, i])
            inter = yield from run_psi_receiver(
                io, p.label, _psi_elements(retained_a), rng)
            common &= inter
        score = 0.0
        leaves = []
        for t, tree in enumerate(model.trees):
            path = [nid for nid in retained_a[t]
                    if hash_id(f"{t}:{nid}") in common]
            leaf = _verify_chain(tree, path)
            leaves.append(leaf.node_id)
            score += leaf.leaf_weight
        return score, leaves

    def passive_program_for(p: PassiveParty, i: int):
        retained = _retained_nodes(model, p.label, p.lookup,
                                   shards[p.label])

        def program(io):
            rng = np.random.default_rng([seed, sample_id, 0xB, i])
            yield from run_psi_sender(io, ACTIVE, _psi_elements(retained),
                                      rng)

        return program

    programs = {ACTIVE: active_program}
    for i, p in enumerate(passives):
        programs[p.label] = passive_program_for(p, i)
    results, transcript = simnet.run_protocol(programs, seed=seed)
    score, leaves = results[ACTIVE]
    return score, leaves, transcript


def _verify_chain(tree: FedTree, path: list) -> FedTreeNode:
    """The intersection must walk root to one leaf; returns the leaf."""
    ids = set(path)
    if 0 not in ids:
        raise RuntimeError("intersection does not contain the root")
    chain = []
    nid = 0
    while True:
        chain.append(nid)
        node = tree.nodes[nid]
        if node.is_leaf:
            break
        in_left = node.left in ids
        in_right = node.right in ids
        if in_left == in_right:
            raise RuntimeError("intersection is not a root-to-leaf chain")
        nid = node.left if in_left else node.right
    if ids != set(chain):
        raise RuntimeError("intersection has nodes off the realized path")
    return tree.nodes[chain[-1]]


def centralized_score(model: FedTreeModel, lookups: dict,
                      shards: dict) -> tuple:
    """Single-machine walk over all lookup tables (oracle for inference)."""
    score = 0.0
    leaves = []
    for tree in model.trees:
        node = tree.nodes[0]
        while not node.is_leaf:
            k, thr = lookups[node.owner][node.record_id]
            node = tree.nodes[node.left if shards[node.owner][k] <= thr
                              else node.right]
        leaves.append(node.node_id)
        score += node.leaf_weight
    return score, leaves
