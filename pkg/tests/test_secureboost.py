"""Boosting core oracles, encrypted aggregation, and protocol checks."""

import hashlib
import hmac
import json

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from fedfhe import secureboost as sb
from fedfhe.ckks.keys import keygen
from fedfhe.ckks.params import make_params
from fedfhe.secureboost import histograms as hist
from fedfhe.secureboost.core import bucket_index, gain_for
from fedfhe.secureboost.federated import (
    ACTIVE,
    FedTree,
    FedTreeModel,
    FedTreeNode,
    _retained_nodes,
    centralized_score,
    model_from_dict,
    model_to_dict,
)

EPS_HIST = 1e-4


@pytest.fixture(scope="module")
def keys():
    return keygen(make_params("desk"), 42)


def toy_vfl(n=80, seed=5):
    rng = np.random.default_rng(seed)
    Xa = rng.normal(size=(n, 3))
    Xp = rng.normal(size=(n, 3))
    logits = Xa[:, 0] - 0.8 * Xp[:, 1] + 0.5 * Xp[:, 2]
    y = (logits + 0.3 * rng.normal(size=n) > 0).astype(float)
    return Xa, Xp, y


def train_toy(keys, config=None, seed=0, n=80):
    Xa, Xp, y = toy_vfl(n=n)
    config = config or sb.SplitConfig(epsilon=0.25, max_depth=2,
                                      num_trees=2)
    active = sb.ActiveParty(y=y, X=Xa, keys=keys)
    passive = sb.PassiveParty("passive0", Xp, keys.public_only())
    model, tr = sb.train_ensemble(active, [passive], config, seed=seed)
    return model, active, passive, tr, (Xa, Xp, y)


class TestComputeGh:
    def test_positive_label_at_zero_score(self):
        g, h = sb.compute_gh(np.array([1.0]), np.array([0.0]))
        assert g[0] == pytest.approx(-0.5)
        assert h[0] == pytest.approx(0.25)

    def test_negative_label_at_zero_score(self):
        g, h = sb.compute_gh(np.array([0.0]), np.array([0.0]))
        assert g[0] == pytest.approx(0.5)
        assert h[0] == pytest.approx(0.25)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        y = rng.integers(0, 2, 64).astype(float)
        z = rng.uniform(-4, 4, 64)
        g, h = sb.compute_gh(y, z)

        def loss(yv, zv):
            return np.log1p(np.exp(zv)) - yv * zv

        d = 1e-5
        g_num = (loss(y, z + d) - loss(y, z - d)) / (2 * d)
        h_num = (loss(y, z + d) - 2 * loss(y, z) + loss(y, z - d)) / d ** 2
        assert np.abs(g - g_num).max() <= 1e-6
        assert np.abs(h - h_num).max() <= 1e-4

    def test_h_range_for_logistic_loss(self):
        rng = np.random.default_rng(4)
        _, h = sb.compute_gh(rng.integers(0, 2, 100).astype(float),
                             rng.uniform(-8, 8, 100))
        assert np.all(h > 0) and np.all(h <= 0.25)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            sb.compute_gh(np.zeros(3), np.zeros(4))


class TestQuantileSplits:
    def test_quartiles_of_one_to_eight(self):
        thr = sb.quantile_splits(np.arange(1.0, 9.0), 0.25)
        assert thr.tolist() == [2.5, 4.5, 6.5]

    def test_constant_feature_has_no_candidates(self):
        assert sb.quantile_splits(np.full(20, 3.3), 0.25).size == 0

    def test_bucket_counts_differ_by_at_most_one(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=100)
        thr = sb.quantile_splits(values, 0.125)
        counts = np.bincount(bucket_index(values, thr), minlength=8)
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == 100

    def test_at_most_inverse_epsilon_buckets(self):
        rng = np.random.default_rng(12)
        thr = sb.quantile_splits(rng.normal(size=500), 0.125)
        assert thr.size <= 7

    def test_ties_deduplicated(self):
        values = np.array([1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0])
        thr = sb.quantile_splits(values, 0.25)
        assert thr.tolist() == [1.5]

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            sb.quantile_splits(np.array([]), 0.25)


class TestBestSplit:
    def test_separable_toy_matches_exhaustive_oracle(self):
        X = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        y = (X > 0).astype(float)
        g, h = sb.compute_gh(y, np.zeros(6))
        thr = sb.quantile_splits(X, 0.25)
        b = bucket_index(X, thr)
        G = np.zeros((1, 4))
        H = np.zeros((1, 4))
        np.add.at(G[0], b, g)
        np.add.at(H[0], b, h)
        cfg = sb.SplitConfig(epsilon=0.25)
        k, v, gain = sb.best_split(G, H, cfg)
        brute = max(
            (gain_for(G[0, :u + 1].sum(), H[0, :u + 1].sum(),
                      G.sum(), H.sum(), cfg.lam, cfg.gamma), u)
            for u in range(3))
        assert (k, v) == (0, brute[1])
        assert gain == pytest.approx(brute[0])
        assert X[b <= v].max() < 0 < X[b > v].min()

    def test_random_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(21)
        cfg = sb.SplitConfig(lam=1.3, gamma=0.05)
        for _ in range(20):
            G = rng.normal(size=(5, 8))
            H = np.abs(rng.normal(size=(5, 8))) + 0.01
            k, v, gain = sb.best_split(G, H, cfg)
            want = 0.0
            arg = (-1, -1)
            for kk in range(5):
                for vv in range(7):
                    gg = gain_for(G[kk, :vv + 1].sum(), H[kk, :vv + 1].sum(),
                                  G[kk].sum(), H[kk].sum(),
                                  cfg.lam, cfg.gamma)
                    if gg > want:
                        want, arg = gg, (kk, vv)
            assert (k, v) == arg
            assert gain == pytest.approx(want)

    def test_zero_gradients_make_node_a_leaf(self):
        cfg = sb.SplitConfig(gamma=0.1)
        k, v, gain = sb.best_split(np.zeros((3, 4)),
                                   np.full((3, 4), 0.1), cfg)
        assert gain <= 0.0
        assert (k, v) == (-1, -1)

    def test_huge_lambda_suppresses_all_splits(self):
        rng = np.random.default_rng(22)
        G = rng.normal(size=(4, 4))
        H = np.abs(rng.normal(size=(4, 4)))
        cfg = sb.SplitConfig(lam=1e12, gamma=0.01)
        _, _, gain = sb.best_split(G, H, cfg)
        assert gain <= 0.0


class TestLeafWeight:
    def test_zero_gradient_sum(self):
        assert sb.leaf_weight(0.0, 5.0, 1.0) == 0.0

    def test_direct_formula(self):
        assert sb.leaf_weight(1.0, 1.0, 1.0) == pytest.approx(-0.5)

    def test_matches_scalar_minimizer(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            gs = rng.normal() * 5
            hs = abs(rng.normal()) * 3 + 0.1
            lam = abs(rng.normal()) + 0.1
            res = minimize_scalar(
                lambda w: gs * w + 0.5 * (hs + lam) * w * w)
            assert sb.leaf_weight(gs, hs, lam) == pytest.approx(
                res.x, abs=1e-6)


class TestSiblingSubtract:
    def test_left_equals_parent_gives_zero(self):
        G = np.ones((2, 3))
        H = np.full((2, 3), 0.5)
        rg, rh = sb.sibling_subtract((G, H), (G.copy(), H.copy()))
        assert not rg.any() and not rh.any()

    def test_empty_left_gives_parent(self):
        G = np.arange(6.0).reshape(2, 3)
        H = G / 10
        rg, rh = sb.sibling_subtract((G, H), (np.zeros((2, 3)),
                                              np.zeros((2, 3))))
        assert np.array_equal(rg, G) and np.array_equal(rh, H)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            sb.sibling_subtract((np.zeros((2, 3)), np.zeros((2, 3))),
                                (np.zeros((2, 2)), np.zeros((2, 2))))

    def test_encrypted_subtract_matches_direct_aggregation(self, keys):
        rng = np.random.default_rng(33)
        n = 16
        X = rng.normal(size=(n, 2))
        g = rng.uniform(-1, 1, n)
        h = rng.uniform(0.05, 0.25, n)
        splits = [sb.quantile_splits(X[:, k], 0.25) for k in range(2)]
        gh = hist.encrypt_gh_pairs(g, h, keys, rng)
        rep = hist.replicate_segments(gh, keys)
        parent_idx = np.arange(n)
        left_idx = np.arange(n // 2)
        right_idx = np.arange(n // 2, n)
        eh_parent = hist.aggregate_encrypted_gh(parent_idx, X, rep, splits,
                                                keys)
        eh_left = hist.aggregate_encrypted_gh(left_idx, X, rep, splits,
                                              keys)
        eh_right = hist.aggregate_encrypted_gh(right_idx, X, rep, splits,
                                               keys)
        diff = sb.sibling_subtract(eh_parent, eh_left)
        Gd, Hd = hist.decrypt_histogram(diff, keys)
        Gr, Hr = hist.decrypt_histogram(eh_right, keys)
        assert np.abs(Gd - Gr).max() <= 2 * EPS_HIST
        assert np.abs(Hd - Hr).max() <= 2 * EPS_HIST


class TestEncryptedAggregation:
    def test_two_bucket_example(self, keys):
        g = np.array([1.0, 2.0, 3.0, 4.0])
        h = np.array([0.1, 0.2, 0.3, 0.4])
        X = np.array([[0.1], [0.2], [0.9], [0.8]])
        splits = [np.array([0.5])]
        gh = hist.encrypt_gh_pairs(g, h, keys)
        rep = hist.replicate_segments(gh, keys)
        eh = hist.aggregate_encrypted_gh(np.arange(4), X, rep, splits, keys)
        G, H = hist.decrypt_histogram(eh, keys)
        assert np.abs(G - [[3.0, 7.0]]).max() <= EPS_HIST
        assert np.abs(H - [[0.3, 0.7]]).max() <= EPS_HIST

    def test_empty_bucket_is_zero(self, keys):
        g = np.ones(4)
        h = np.full(4, 0.1)
        X = np.zeros((4, 1))
        X[:, 0] = [0.1, 0.2, 0.1, 0.2]  # nothing above 0.5
        splits = [np.array([0.5])]
        gh = hist.encrypt_gh_pairs(g, h, keys)
        rep = hist.replicate_segments(gh, keys)
        eh = hist.aggregate_encrypted_gh(np.arange(4), X, rep, splits, keys)
        G, H = hist.decrypt_histogram(eh, keys)
        assert abs(G[0, 0] - 4.0) <= EPS_HIST
        assert abs(G[0, 1]) <= EPS_HIST
        assert abs(H[0, 1]) <= EPS_HIST

    def test_conservation_and_oracle(self, keys):
        rng = np.random.default_rng(41)
        n, d = 120, 4
        X = rng.normal(size=(n, d))
        g = rng.uniform(-1, 1, n)
        h = rng.uniform(0.01, 0.25, n)
        splits = [sb.quantile_splits(X[:, k], 0.125) for k in range(d)]
        node = rng.choice(n, 70, replace=False)
        gh = hist.encrypt_gh_pairs(g, h, keys, rng)
        rep = hist.replicate_segments(gh, keys)
        eh = hist.aggregate_encrypted_gh(node, X, rep, splits, keys)
        G, H = hist.decrypt_histogram(eh, keys)
        in_node = np.zeros(n, bool)
        in_node[node] = True
        for k in range(d):
            b = bucket_index(X[:, k], splits[k])
            Gw = np.zeros(8)
            Hw = np.zeros(8)
            np.add.at(Gw, b[in_node], g[in_node])
            np.add.at(Hw, b[in_node], h[in_node])
            w = len(splits[k]) + 1
            assert np.abs(G[k, :w] - Gw[:w]).max() <= EPS_HIST
            assert np.abs(H[k, :w] - Hw[:w]).max() <= EPS_HIST
            assert G[k].sum() == pytest.approx(g[node].sum(), abs=EPS_HIST)
            assert H[k].sum() == pytest.approx(h[node].sum(), abs=EPS_HIST)


class TestTrainEnsemble:
    def test_depth_one_stump_matches_plaintext_oracle(self, keys):
        Xa, Xp, y = toy_vfl()
        cfg = sb.SplitConfig(epsilon=0.25, max_depth=1, num_trees=1,
                             learning_rate=1.0)
        plain = sb.train_plain(np.hstack([Xa, Xp]), y, cfg)[0]
        active = sb.ActiveParty(y=y, X=Xa, keys=keys)
        passive = sb.PassiveParty("passive0", Xp, keys.public_only())
        model, _ = sb.train_ensemble(active, [passive], cfg, seed=0)
        root = model.trees[0].nodes[0]
        lookup = active.lookup if root.owner == ACTIVE else passive.lookup
        k_local, thr = lookup[root.record_id]
        k_global = k_local + (0 if root.owner == ACTIVE else Xa.shape[1])
        assert k_global == plain.nodes[0].feature
        assert thr == pytest.approx(plain.nodes[0].threshold)
        assert model.trees[0].nodes[1].leaf_weight == pytest.approx(
            plain.nodes[1].weight, abs=1e-6)
        assert model.trees[0].nodes[2].leaf_weight == pytest.approx(
            plain.nodes[2].weight, abs=1e-6)

    def test_zero_trees_predicts_base_score(self, keys):
        Xa, Xp, y = toy_vfl()
        cfg = sb.SplitConfig(epsilon=0.25, num_trees=0)
        active = sb.ActiveParty(y=y, X=Xa, keys=keys)
        passive = sb.PassiveParty("passive0", Xp, keys.public_only())
        model, _ = sb.train_ensemble(active, [passive], cfg, seed=0)
        assert model.trees == []
        score, leaves = centralized_score(model, {}, {})
        assert score == 0.0 and leaves == []

    def test_same_seed_gives_identical_transcript(self, keys):
        _, _, _, tr1, _ = train_toy(keys, seed=9)
        _, _, _, tr2, _ = train_toy(keys, seed=9)
        assert tr1.digest() == tr2.digest()

    def test_thresholds_never_leave_owner(self, keys):
        model, active, passive, _, _ = train_toy(keys)
        doc = model_to_dict(model)
        for rows in doc["trees"]:
            for row in rows:
                assert set(row) == {"id", "owner", "record", "left",
                                    "right", "w"}
        blob = json.dumps(doc)
        for _, thr in passive.lookup.values():
            assert f"{thr:.10g}" not in blob

    def test_federated_accuracy_on_breast_cancer(self, keys):
        from sklearn.datasets import load_breast_cancer
        from sklearn.model_selection import train_test_split

        data = load_breast_cancer()
        Xtr, Xte, ytr, yte = train_test_split(
            data.data, data.target, test_size=0.2, random_state=0,
            stratify=data.target)
        cfg = sb.SplitConfig(epsilon=0.25, max_depth=3, num_trees=3)
        active = sb.ActiveParty(y=ytr.astype(float), X=Xtr[:, 0::2],
                                keys=keys)
        passive = sb.PassiveParty("passive0", Xtr[:, 1::2],
                                  keys.public_only())
        model, _ = sb.train_ensemble(active, [passive], cfg, seed=0)
        lookups = {ACTIVE: active.lookup, "passive0": passive.lookup}
        scores = [centralized_score(model, lookups,
                                    {ACTIVE: Xte[i, 0::2],
                                     "passive0": Xte[i, 1::2]})[0]
                  for i in range(len(Xte))]
        acc = ((np.array(scores) > 0).astype(int) == yte).mean()
        assert acc >= 0.90


def fig10_model():
    """Depth-3 full tree with the worked-example ownership pattern."""
    nodes = {}
    owners = {0: "passive0", 2: "passive0", 4: "passive0", 5: "passive0",
              1: ACTIVE, 3: ACTIVE, 6: ACTIVE}
    records = {0: 0, 1: 0, 2: 1, 3: 1, 4: 2, 5: 3, 6: 2}
    for nid in range(7):
        nodes[nid] = FedTreeNode(nid, owner=owners[nid],
                                 record_id=records[nid],
                                 left=2 * nid + 1, right=2 * nid + 2)
    for i, leaf in enumerate(range(7, 15)):
        nodes[leaf] = FedTreeNode(leaf, leaf_weight=0.1 * (i + 1))
    model = FedTreeModel([FedTree(nodes)], [ACTIVE, "passive0"],
                         sb.SplitConfig())
    # thresholds: all 1.0; shard values steer the walk
    active_lookup = {0: (0, 1.0), 1: (1, 1.0), 2: (2, 1.0)}
    passive_lookup = {0: (0, 1.0), 1: (1, 1.0), 2: (2, 1.0), 3: (3, 1.0)}
    # passive: node0 left, node4 right; active: node1 right, node6 right
    shards = {ACTIVE: np.array([5.0, 0.0, 5.0]),
              "passive0": np.array([0.0, 0.0, 5.0, 0.0])}
    return model, active_lookup, passive_lookup, shards


class TestPsiInfer:
    def test_worked_example_node_lists_and_intersection(self, keys):
        model, lk_a, lk_p, shards = fig10_model()
        retained_p = _retained_nodes(model, "passive0", lk_p,
                                     shards["passive0"])
        retained_a = _retained_nodes(model, ACTIVE, lk_a, shards[ACTIVE])
        assert retained_p[0] == [0, 1, 3, 4, 7, 8, 10]
        assert retained_a[0] == [0, 1, 2, 4, 5, 6, 9, 10, 11, 12, 14]
        active = sb.ActiveParty(y=np.zeros(1), keys=keys, lookup=lk_a)
        active.X = shards[ACTIVE].reshape(1, -1)
        passive = sb.PassiveParty("passive0",
                                  shards["passive0"].reshape(1, -1),
                                  keys.public_only(), lookup=lk_p)
        score, leaves, tr = sb.psi_infer(model, active, [passive], shards)
        path = sorted(set(retained_p[0]) & set(retained_a[0]))
        assert path == [0, 1, 4, 10]
        assert leaves == [10]
        assert score == pytest.approx(0.4)  # fourth leaf weight

    def test_single_leaf_tree(self, keys):
        nodes = {0: FedTreeNode(0, leaf_weight=0.7)}
        model = FedTreeModel([FedTree(nodes)], [ACTIVE, "passive0"],
                             sb.SplitConfig())
        active = sb.ActiveParty(y=np.zeros(1), keys=keys)
        passive = sb.PassiveParty("passive0", np.zeros((1, 1)),
                                  keys.public_only())
        shards = {ACTIVE: np.zeros(1), "passive0": np.zeros(1)}
        score, leaves, _ = sb.psi_infer(model, active, [passive], shards)
        assert leaves == [0]
        assert score == pytest.approx(0.7)

    def test_one_passive_party_means_one_psi_session(self, keys):
        model, lk_a, lk_p, shards = fig10_model()
        active = sb.ActiveParty(y=np.zeros(1), keys=keys, lookup=lk_a)
        passive = sb.PassiveParty("passive0",
                                  shards["passive0"].reshape(1, -1),
                                  keys.public_only(), lookup=lk_p)
        _, _, tr = sb.psi_infer(model, active, [passive], shards)
        tags = [m.tag for m in tr.messages]
        from fedfhe.psi import TAG_PSI_BLIND_REQ, TAG_PSI_BLIND_RESP
        assert tags.count(TAG_PSI_BLIND_REQ) == 1
        assert tags.count(TAG_PSI_BLIND_RESP) == 2
        assert len(tags) == 3

    def test_matches_classic_infer_on_trained_model(self, keys):
        model, active, passive, _, (Xa, Xp, y) = train_toy(
            keys, sb.SplitConfig(epsilon=0.25, max_depth=3, num_trees=2))
        rng = np.random.default_rng(55)
        for i in range(12):
            shards = {ACTIVE: Xa[i] + 0.1 * rng.normal(size=3),
                      "passive0": Xp[i] + 0.1 * rng.normal(size=3)}
            sc, lc, _ = sb.classic_infer(model, active, [passive], shards,
                                         sample_id=i)
            sp, lp, _ = sb.psi_infer(model, active, [passive], shards,
                                     sample_id=i)
            assert lp == lc
            assert sp == sc


class TestClassicInfer:
    def test_threshold_walk_routes_right(self, keys):
        nodes = {0: FedTreeNode(0, owner="passive0", record_id=0,
                                left=1, right=2),
                 1: FedTreeNode(1, leaf_weight=-1.0),
                 2: FedTreeNode(2, leaf_weight=2.0)}
        model = FedTreeModel([FedTree(nodes)], [ACTIVE, "passive0"],
                             sb.SplitConfig())
        active = sb.ActiveParty(y=np.zeros(1), keys=keys)
        passive = sb.PassiveParty("passive0", np.zeros((1, 1)),
                                  keys.public_only(), lookup={0: (0, 14.0)})
        shards = {ACTIVE: np.zeros(1), "passive0": np.array([29.0])}
        score, leaves, tr = sb.classic_infer(model, active, [passive],
                                             shards)
        assert leaves == [2]
        assert score == 2.0
        assert tr.rounds == 1

    def test_zero_passive_nodes_means_zero_rounds(self, keys):
        nodes = {0: FedTreeNode(0, owner=ACTIVE, record_id=0,
                                left=1, right=2),
                 1: FedTreeNode(1, leaf_weight=0.5),
                 2: FedTreeNode(2, leaf_weight=-0.5)}
        model = FedTreeModel([FedTree(nodes)], [ACTIVE, "passive0"],
                             sb.SplitConfig())
        active = sb.ActiveParty(y=np.zeros(1), keys=keys,
                                lookup={0: (0, 0.0)})
        passive = sb.PassiveParty("passive0", np.zeros((1, 1)),
                                  keys.public_only())
        shards = {ACTIVE: np.array([-1.0]), "passive0": np.zeros(1)}
        _, leaves, tr = sb.classic_infer(model, active, [passive], shards)
        assert leaves == [1]
        assert tr.rounds == 0

    def test_rounds_equal_passive_nodes_on_path(self, keys):
        model, active, passive, _, (Xa, Xp, y) = train_toy(
            keys, sb.SplitConfig(epsilon=0.25, max_depth=3, num_trees=2))
        lookups = {ACTIVE: active.lookup, "passive0": passive.lookup}
        for i in range(10):
            shards = {ACTIVE: Xa[i], "passive0": Xp[i]}
            sc, lc, tr = sb.classic_infer(model, active, [passive], shards,
                                          sample_id=i)
            want = 0
            for tree in model.trees:
                node = tree.nodes[0]
                while not node.is_leaf:
                    if node.owner != ACTIVE:
                        want += 1
                    k, thr = lookups[node.owner][node.record_id]
                    node = tree.nodes[node.left
                                      if shards[node.owner][k] <= thr
                                      else node.right]
            assert tr.rounds == want
            so, lo = centralized_score(model, lookups, shards)
            assert sc == so and lc == lo

    def test_audit_envelope_is_verifiable(self, keys):
        model, active, passive, _, (Xa, Xp, y) = train_toy(keys)
        shards = {ACTIVE: Xa[0], "passive0": Xp[0]}
        _, _, tr = sb.classic_infer(model, active, [passive], shards)
        reqs = [m for m in tr.messages if m.tag == 0x6101]
        assert reqs, "expected at least one lookup request"
        body = json.loads(reqs[0].payload)
        mac = body.pop("hmac")
        session = bytes.fromhex(body["session"])
        mac_key = hashlib.sha256(b"audit-mac" + session).digest()
        canon = json.dumps(body, sort_keys=True).encode()
        assert hmac.new(mac_key, canon, hashlib.sha256).hexdigest() == mac
        assert 300 <= len(reqs[0].payload) <= 800


class TestModelIO:
    def test_roundtrip(self, keys, tmp_path):
        model, active, passive, _, _ = train_toy(keys)
        sb.save_model(model, tmp_path / "model.json")
        sb.save_lookup(active.lookup, tmp_path / "lookup_active.json")
        sb.save_lookup(passive.lookup, tmp_path / "lookup_passive0.json")
        loaded = sb.load_model(tmp_path / "model.json")
        assert model_to_dict(loaded) == model_to_dict(model)
        assert sb.load_lookup(tmp_path / "lookup_active.json") == \
            active.lookup
        assert sb.load_lookup(tmp_path / "lookup_passive0.json") == \
            passive.lookup

    def test_version_check(self):
        with pytest.raises(ValueError):
            model_from_dict({"version": 99, "trees": [], "parties": []})
