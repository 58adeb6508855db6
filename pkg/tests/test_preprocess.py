"""Binning, weight-of-evidence, and oversampling: plaintext oracles and
the two-party encrypted protocols."""

import json

import numpy as np
import pytest

from fedfhe import preprocess as pp
from fedfhe import simnet
from fedfhe.ckks.keys import keygen
from fedfhe.ckks.params import make_params
from fedfhe.logreg.protocols import VflPartyA, VflPartyB

KEYS = keygen(make_params("desk"), 42)


def capture_transport(store):
    def transport(programs, seed):
        results, transcript = simnet.run_protocol(programs, seed)
        store.append(transcript)
        return results, transcript
    return transport


class TestBinning:
    def test_three_bin_one_hot(self):
        # frozen hand case: values 1..3 split into three equal bins
        x = np.array([1.0, 2.0, 2.0, 3.0, 1.0])
        spec = pp.equal_width_bins(x, 3)
        want = np.array([[1, 0, 0],
                         [0, 1, 0],
                         [0, 1, 0],
                         [0, 0, 1],
                         [1, 0, 0]], float)
        assert np.array_equal(pp.one_hot(x, spec), want)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=500)
        oh = pp.one_hot(x, pp.equal_width_bins(x, 7))
        assert np.array_equal(oh.sum(axis=1), np.ones(500))
        assert set(np.unique(oh)) <= {0.0, 1.0}

    def test_right_closed_except_first(self):
        spec = pp.BinSpec((0.0, 1.0, 2.0))
        idx = pp.bin_index(np.array([0.0, 1.0, 1.0 + 1e-9, 2.0]), spec)
        assert idx.tolist() == [0, 0, 1, 1]

    def test_out_of_range_clips_to_end_bins(self):
        # test-split values outside the train range still get a bin
        spec = pp.BinSpec((0.0, 1.0, 2.0))
        idx = pp.bin_index(np.array([-5.0, 7.0]), spec)
        assert idx.tolist() == [0, 1]

    def test_constant_feature_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            pp.equal_width_bins(np.ones(10), 4)

    def test_too_few_bins_rejected(self):
        with pytest.raises(ValueError, match="two bins"):
            pp.equal_width_bins(np.arange(5.0), 1)

    def test_spec_exports_as_json(self):
        spec = pp.equal_width_bins(np.arange(9.0), 4, feature=3)
        out = json.loads(json.dumps(spec.to_dict()))
        assert out["feature"] == 3
        assert len(out["edges"]) == 5


class TestWoePlain:
    def test_hand_counts_and_weights(self):
        x = np.array([1.0, 2.0, 2.0, 3.0, 1.0])
        y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        table = pp.woe_plain(pp.one_hot(x, pp.equal_width_bins(x, 3)), y)
        assert table.good.tolist() == [1, 1, 1]
        assert table.bad.tolist() == [1, 1, 0]
        # last bin has a smoothed zero bad cell: ln((1/3)/(0.5/2))
        want = [np.log(2 / 3), np.log(2 / 3), np.log(4 / 3)]
        assert np.allclose(table.woe, want, atol=1e-12)
        assert (table.total_good, table.total_bad) == (3, 2)

    def test_label_swap_negates_weights(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=300)
        y = (rng.random(300) < 0.4).astype(float)
        bins = pp.one_hot(x, pp.equal_width_bins(x, 6))
        a = pp.woe_plain(bins, y)
        b = pp.woe_plain(bins, 1.0 - y)
        assert np.allclose(a.woe, -b.woe, atol=1e-12)

    def test_single_class_rejected(self):
        bins = np.ones((4, 1))
        with pytest.raises(ValueError, match="positive and negative"):
            pp.woe_plain(bins, np.ones(4))
        with pytest.raises(ValueError, match="positive and negative"):
            pp.woe_plain(bins, np.zeros(4))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError, match="length"):
            pp.woe_plain(np.ones((4, 2)), np.ones(3))

    def test_encode_maps_values_to_bin_weights(self):
        x = np.array([1.0, 2.0, 2.0, 3.0, 1.0])
        y = np.array([1.0, 0.0, 1.0, 1.0, 0.0])
        spec = pp.equal_width_bins(x, 3)
        table = pp.woe_plain(pp.one_hot(x, spec), y)
        enc = pp.woe_encode(x, spec, table)
        assert np.allclose(enc, table.woe[[0, 1, 1, 2, 0]])

    def test_table_exports_as_json(self):
        x = np.arange(10.0)
        y = np.array([0, 1] * 5, float)
        table = pp.woe_plain(pp.one_hot(x, pp.equal_width_bins(x, 3)), y)
        out = json.loads(json.dumps(table.to_dict()))
        assert out["total_good"] == 5
        assert len(out["woe"]) == 3


class TestWoeFhe:
    def test_matches_plain_counts_exactly(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=700)
        y = (rng.random(700) < 0.3).astype(float)
        bins = pp.one_hot(x, pp.equal_width_bins(x, 10))
        plain = pp.woe_plain(bins, y)
        table = pp.woe_fhe(y, pp.BinParty(KEYS, bins))
        assert np.array_equal(table.good, plain.good)
        assert np.array_equal(table.bad, plain.bad)
        assert np.allclose(table.woe, plain.woe, atol=1e-3)

    def test_multi_chunk_population(self):
        # bin count padded to 16 leaves 256 rows per ciphertext, so
        # 1200 rows exercise the multi-chunk fold
        rng = np.random.default_rng(3)
        x = rng.normal(size=1200)
        y = (rng.random(1200) < 0.25).astype(float)
        bins = pp.one_hot(x, pp.equal_width_bins(x, 9))
        plain = pp.woe_plain(bins, y)
        table = pp.woe_fhe(y, pp.BinParty(KEYS, bins))
        assert np.array_equal(table.good, plain.good)

    def test_single_bin_weight_is_zero(self):
        y = np.array([1.0, 0.0, 1.0, 0.0])
        table = pp.woe_fhe(y, pp.BinParty(KEYS, np.ones((4, 1))))
        assert table.good.tolist() == [2]
        assert abs(table.woe[0]) < 1e-12

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="positive and negative"):
            pp.woe_fhe(np.ones(4), pp.BinParty(KEYS, np.ones((4, 1))))

    def test_misaligned_inputs_rejected(self):
        with pytest.raises(ValueError, match="misalignment"):
            pp.woe_fhe(np.ones(3), pp.BinParty(KEYS, np.ones((4, 2))))

    def test_non_binary_labels_rejected(self):
        with pytest.raises(ValueError, match="0/1"):
            pp.woe_fhe(np.array([1.0, -1.0, 1.0, 0.0]),
                       pp.BinParty(KEYS, np.ones((4, 1))))

    def test_wire_carries_only_ciphertext_tags(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=64)
        y = (rng.random(64) < 0.5).astype(float)
        bins = pp.one_hot(x, pp.equal_width_bins(x, 4))
        store = []
        pp.woe_fhe(y, pp.BinParty(KEYS, bins),
                   transport=capture_transport(store))
        tags = {m.tag for m in store[0].messages}
        assert tags == {pp.TAG_PP_BINS, pp.TAG_PP_GOOD}
        b_label = simnet.passive(0).label
        for m in store[0].messages:
            if m.tag == pp.TAG_PP_BINS:
                assert (m.sender, m.to) == (b_label, pp.ACTIVE)
            else:
                assert (m.sender, m.to) == (pp.ACTIVE, b_label)


def toy_split(n=48, fa=3, fb=4, seed=7, positives=8):
    rng = np.random.default_rng(seed)
    Xa = rng.normal(size=(n, fa))
    Xb = rng.normal(size=(n, fb))
    y = np.zeros(n)
    y[rng.choice(n, positives, replace=False)] = 1.0
    return Xa, Xb, y


class TestSmotePlan:
    def test_row_counts(self):
        Xa, _, y = toy_split()
        orig, neig, lam = pp.smote_plan(Xa, y, pp.SmoteConfig(k=3, amount=5))
        pos = np.flatnonzero(y > 0)
        assert len(orig) == len(neig) == len(lam) == 5 * len(pos)
        assert np.array_equal(orig, np.repeat(pos, 5))
        assert np.all((lam > 0) & (lam < 1))

    def test_nearest_neighbour_hand_case(self):
        # positives sit at 0, 1, and 2 on a line: the middle one is
        # equidistant from both ends and must pick the lower row index
        X = np.array([[9.0], [0.0], [9.0], [1.0], [2.0]])
        y = np.array([0.0, 1.0, 0.0, 1.0, 1.0])
        orig, neig, _ = pp.smote_plan(X, y, pp.SmoteConfig(k=1, amount=1))
        assert orig.tolist() == [1, 3, 4]
        assert neig.tolist() == [3, 1, 3]

    def test_neighbour_cycling(self):
        Xa, _, y = toy_split(positives=5)
        cfg = pp.SmoteConfig(k=2, amount=4)
        orig, neig, _ = pp.smote_plan(Xa, y, cfg)
        # copies cycle through the neighbour list in order
        assert neig[0] == neig[2] and neig[1] == neig[3]
        assert neig[0] != neig[1]

    def test_k_at_least_minority_rejected(self):
        Xa, _, y = toy_split(positives=3)
        with pytest.raises(ValueError, match="minority"):
            pp.smote_plan(Xa, y, pp.SmoteConfig(k=3))

    def test_no_positives_rejected(self):
        Xa, _, y = toy_split()
        with pytest.raises(ValueError, match="no positive"):
            pp.smote_plan(Xa, np.zeros(len(y)), pp.SmoteConfig())

    def test_explicit_lambda_length_checked(self):
        Xa, _, y = toy_split(positives=4)
        with pytest.raises(ValueError, match="length"):
            pp.smote_plan(Xa, y, pp.SmoteConfig(k=2, amount=2,
                                                lam=np.zeros(3)))

    def test_seed_determinism(self):
        Xa, _, y = toy_split()
        a = pp.smote_plan(Xa, y, pp.SmoteConfig(k=2, amount=3, seed=9))
        b = pp.smote_plan(Xa, y, pp.SmoteConfig(k=2, amount=3, seed=9))
        c = pp.smote_plan(Xa, y, pp.SmoteConfig(k=2, amount=3, seed=10))
        assert np.array_equal(a[2], b[2])
        assert not np.array_equal(a[2], c[2])


class TestSmotePlain:
    def test_interpolation_identity(self):
        Xa, Xb, y = toy_split()
        X = np.hstack([Xa, Xb])
        cfg = pp.SmoteConfig(k=3, amount=2, seed=1)
        orig, neig, lam = pp.smote_plan(X, y, cfg)
        out = pp.smote_plain(X, y, cfg)
        want = X[orig] + lam[:, None] * (X[neig] - X[orig])
        assert np.allclose(out, want, atol=1e-12)

    def test_zero_lambda_copies_originals(self):
        Xa, _, y = toy_split(positives=6)
        m = 6 * 3
        cfg = pp.SmoteConfig(k=2, amount=3, lam=np.zeros(m))
        out = pp.smote_plain(Xa, y, cfg)
        assert np.allclose(out, Xa[np.repeat(np.flatnonzero(y > 0), 3)])

    def test_unit_lambda_copies_neighbours(self):
        Xa, _, y = toy_split(positives=6)
        m = 6 * 3
        cfg = pp.SmoteConfig(k=2, amount=3, lam=np.ones(m))
        _, neig, _ = pp.smote_plan(Xa, y, cfg)
        assert np.allclose(pp.smote_plain(Xa, y, cfg), Xa[neig])

    def test_metric_block_changes_neighbours(self):
        # a misleading second block flips who is nearest
        X = np.array([[0.0, 50.0], [0.1, 0.0], [5.0, 50.1]])
        y = np.ones(3)
        cfg = pp.SmoteConfig(k=1, amount=1)
        _, by_joint, _ = pp.smote_plan(X, y, cfg)
        _, by_first, _ = pp.smote_plan(X[:, :1], y, cfg)
        assert by_joint.tolist() == [2, 0, 0]
        assert by_first.tolist() == [1, 0, 1]
        out = pp.smote_plain(X, y, cfg, metric=X[:, :1])
        orig, neig, lam = pp.smote_plan(X[:, :1], y, cfg)
        assert np.allclose(out, X[orig] + lam[:, None] * (X[neig] - X[orig]))

    def test_minority_expansion_arithmetic(self):
        # 216 minority rows at amount 32 lift 6819 rows to 13731
        rng = np.random.default_rng(11)
        X = rng.normal(size=(6819, 4))
        y = np.zeros(6819)
        y[rng.choice(6819, 216, replace=False)] = 1.0
        out = pp.smote_plain(X, y, pp.SmoteConfig(k=5, amount=32))
        assert len(out) == 6912
        assert 6819 + len(out) == 13731


class TestSmoteFhe:
    def test_matches_plain_under_shared_randomness(self):
        Xa, Xb, y = toy_split()
        cfg = pp.SmoteConfig(k=3, amount=4, seed=5)
        want = pp.smote_plain(np.hstack([Xa, Xb]), y, cfg, metric=Xa)
        res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg)
        got = np.hstack([res.rows_a, res.rows_b - res.mask_b])
        assert res.count == len(want)
        assert np.abs(got - want).max() <= 1e-3

    def test_zero_lambda_returns_original_rows(self):
        Xa, Xb, y = toy_split(positives=6)
        m = 6 * 2
        cfg = pp.SmoteConfig(k=2, amount=2, lam=np.zeros(m))
        res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg)
        orig = np.repeat(np.flatnonzero(y > 0), 2)
        assert np.abs(res.rows_a - Xa[orig]).max() <= 1e-3
        assert np.abs(res.rows_b - res.mask_b - Xb[orig]).max() <= 1e-3

    def test_convex_combination_bounds(self):
        Xa, Xb, y = toy_split(seed=9)
        cfg = pp.SmoteConfig(k=3, amount=3, seed=2)
        res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg)
        got = np.hstack([res.rows_a, res.rows_b - res.mask_b])
        J = np.hstack([Xa, Xb])
        orig, neig, _ = pp.smote_plan(Xa, y, cfg)
        lo = np.minimum(J[orig], J[neig]) - 1e-3
        hi = np.maximum(J[orig], J[neig]) + 1e-3
        assert np.all((got >= lo) & (got <= hi))

    def test_key_owner_block_stays_masked(self):
        Xa, Xb, y = toy_split()
        cfg = pp.SmoteConfig(k=2, amount=2, seed=3)
        res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg)
        true_b = res.rows_b - res.mask_b
        # stored rows are offset by a wide uniform mask
        assert np.abs(res.rows_b - true_b).max() > 1.0
        assert np.abs(res.mask_b).max() < pp.MASK_SPAN

    def test_wire_shape_and_tags(self):
        Xa, Xb, y = toy_split()
        cfg = pp.SmoteConfig(k=2, amount=2, seed=3)
        store = []
        res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg,
                           transport=capture_transport(store))
        msgs = store[0].messages
        tags = [m.tag for m in msgs]
        assert set(tags) == {pp.TAG_PP_XB, pp.TAG_PP_NEWR, pp.TAG_PP_ASAMPLE}
        plain = [m for m in msgs if m.tag == pp.TAG_PP_ASAMPLE]
        # the only plaintext payload is the masked label-holder block
        assert len(plain) == 1
        assert len(plain[0].payload) == res.count * Xa.shape[1] * 8

    def test_transcript_determinism(self):
        Xa, Xb, y = toy_split()
        cfg = pp.SmoteConfig(k=2, amount=2, seed=3)
        digests = []
        for _ in range(2):
            store = []
            pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg,
                         transport=capture_transport(store), seed=4)
            digests.append(store[0].digest())
        assert digests[0] == digests[1]

    def test_misaligned_parties_rejected(self):
        Xa, Xb, y = toy_split()
        with pytest.raises(ValueError, match="sample-aligned"):
            pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb[:-1], KEYS),
                         pp.SmoteConfig(k=2))

    def test_oversized_row_rejected(self):
        rng = np.random.default_rng(0)
        Xa = rng.normal(size=(8, 3000))
        Xb = rng.normal(size=(8, 2000))
        y = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="slot budget"):
            pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS),
                         pp.SmoteConfig(k=2))

    def test_masked_rows_train_like_clean_rows(self):
        # the key owner keeps its synthetic block masked; the label
        # holder cancels the offset inside the encrypted batch sum
        from fedfhe.logreg import LrConfig, vfl_train
        Xa, Xb, y = toy_split(n=40, fa=2, fb=3, positives=6)
        cfg = pp.SmoteConfig(k=2, amount=2, seed=1)
        res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, KEYS), cfg)
        Xa_full = np.vstack([Xa, res.rows_a])
        y_full = np.concatenate([y, np.ones(res.count)])
        patch = np.vstack([np.zeros_like(Xb), -res.mask_b])
        lr = LrConfig(iterations=4, seed=3)
        masked = vfl_train(
            VflPartyA(Xa_full, y_full, b_patch=patch),
            VflPartyB(np.vstack([Xb, res.rows_b]), KEYS), lr)
        clean = vfl_train(
            VflPartyA(Xa_full, y_full),
            VflPartyB(np.vstack([Xb, res.rows_b - res.mask_b]), KEYS), lr)
        assert np.abs(masked.beta - clean.beta).max() <= 1e-4

    def test_patch_width_checked(self):
        from fedfhe.logreg import LrConfig, vfl_train
        Xa, Xb, y = toy_split(n=16, positives=4)
        bad = VflPartyA(Xa, y, b_patch=np.zeros((16, 2)))
        with pytest.raises(ValueError, match="patch width"):
            vfl_train(bad, VflPartyB(Xb, KEYS), LrConfig(iterations=1))
