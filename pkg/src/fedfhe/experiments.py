"""End-to-end experiment drivers.

Each driver aligns parties, runs any encrypted preprocessing once,
then trains and scores over seeded repeats, emitting a metrics report
with per-phase timings and wire accounting.  Timings cover computation
only; the in-process transport has no latency model.
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import data as datamod
from . import preprocess as pp
from . import secureboost as sb
from . import simnet
from .ckks.keys import keygen
from .ckks.params import make_params
from .logreg import (HflClient, HflServer, LrConfig, VflPartyA, VflPartyB,
                     hfl_train, plain_train, score_accuracy, vfl_evaluate,
                     vfl_train)
from .psi import align_samples
from .secureboost.federated import ACTIVE as SB_ACTIVE
from .secureboost.federated import (centralized_score, classic_infer,
                                    psi_infer, train_ensemble)

MODELS = ("secureboost", "lr")
MODES = ("vertical", "horizontal")


@dataclass
class ExperimentConfig:
    """One reproducible experiment: dataset, split, model, seeds."""

    dataset: str = "breast-cancer"
    data_dir: str | None = None
    out_dir: str | None = None
    model: str = "secureboost"
    mode: str = "vertical"
    k_clients: int = 4                 # horizontal shard count
    a_features: int | None = None      # vertical: label holder's columns
    woe: bool = False
    woe_bins: int = 8
    smote_amount: int = 0              # 0 disables oversampling
    smote_k: int = 5
    psi_pad: int | None = None         # id-universe size per side
    profile: str = "desk"
    repeats: int = 20
    test_frac: float = 0.2
    seed: int = 0
    # tree hyperparameters
    trees: int = 5
    depth: int = 3
    epsilon: float = 0.25
    tree_lr: float = 0.5
    # logistic-regression hyperparameters
    iterations: int = 12
    alpha: float = 0.5
    batch_size: int | None = None
    standardize: bool = True

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "horizontal" and self.k_clients < 1:
            raise ValueError("horizontal mode needs at least one client")
        if self.model == "secureboost" and self.mode != "vertical":
            raise ValueError("boosted trees train feature-split only")
        if self.repeats < 1:
            raise ValueError("repeats must be positive")
        if self.smote_amount and self.model == "lr" and self.standardize:
            # masked partner rows cannot be standardized without
            # breaking the additive patch bookkeeping
            raise ValueError("oversampled runs train on raw features; "
                             "set standardize=False")

    def digest(self) -> str:
        # location fields don't change what the experiment computes
        doc = {k: v for k, v in asdict(self).items()
               if k not in ("data_dir", "out_dir")}
        text = json.dumps(doc, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class MetricsReport:
    """Aggregated repeat metrics; reproducible apart from wall times."""

    config_digest: str
    dataset: str
    model: str
    mode: str
    repeats: int
    accuracy: float
    accuracy_std: float
    per_repeat: list
    train_time_s: float
    phases: dict = field(default_factory=dict)
    transcript: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _phase(phases, name, t0):
    phases[name] = phases.get(name, 0.0) + (time.time() - t0)


@contextlib.contextmanager
def _attributed(phase: str):
    """Failures surface with the phase that produced them."""
    try:
        yield
    except Exception as exc:
        raise RuntimeError(f"{phase} phase failed: {exc}") from exc


def _aligned_dataset(ds, config, phases, extra):
    """Vertical runs align on ids through the intersection protocol."""
    pad = config.psi_pad
    if pad is None and ds.name in datamod.REGISTRY:
        pad = datamod.REGISTRY[ds.name].psi_pad or None
    if config.mode != "vertical" or not pad:
        return ds
    t0 = time.time()
    n = len(ds.y)
    ids_a, ids_b = datamod.padded_id_sets(n, pad, seed=config.seed)
    common, transcript = align_samples(ids_a, ids_b, seed=config.seed)
    order = np.array([int(s[1:]) for s in common])
    _phase(phases, "align", t0)
    extra["psi_universe_per_side"] = pad
    extra["psi_intersection"] = len(common)
    extra["psi_bytes"] = transcript.total_bytes
    return datamod.Dataset(ds.name, ds.X[order], ds.y[order],
                           ds.feature_names, ds.source)


def _woe_blocks(Xa, Xb, y, keys, config, phases, extra, sink=None):
    """Evidence-weight encoding: the label holder's block in the clear,
    the key owner's block through the encrypted counting protocol."""
    t0 = time.time()
    tables = []
    woe_a = np.zeros_like(Xa)
    for j in range(Xa.shape[1]):
        spec = pp.equal_width_bins(Xa[:, j], config.woe_bins)
        table = pp.woe_plain(pp.one_hot(Xa[:, j], spec), y)
        woe_a[:, j] = pp.woe_encode(Xa[:, j], spec, table)
        tables.append(("a", j, spec, table))
    fhe_bytes = 0
    woe_b = np.zeros_like(Xb)
    for j in range(Xb.shape[1]):
        spec = pp.equal_width_bins(Xb[:, j], config.woe_bins)
        bins = pp.one_hot(Xb[:, j], spec)
        store = []

        def transport(programs, seed):
            results, tr = simnet.run_protocol(programs, seed)
            store.append(tr)
            return results, tr

        table = pp.woe_fhe(y, pp.BinParty(keys, bins), transport=transport,
                           seed=config.seed + j)
        fhe_bytes += store[0].total_bytes
        woe_b[:, j] = pp.woe_encode(Xb[:, j], spec, table)
        tables.append(("b", j, spec, table))
    _phase(phases, "preprocess", t0)
    extra["woe_features"] = Xa.shape[1] + Xb.shape[1]
    extra["woe_fhe_bytes"] = fhe_bytes
    if sink is not None:
        sink["woe_tables"] = tables
    return woe_a, woe_b


def _smote_blocks(Xa, Xb, y, keys, config, phases, extra, sink=None):
    """Encrypted oversampling; returns full blocks, labels, and the
    label holder's additive patch for the partner's masked rows."""
    t0 = time.time()
    cfg = pp.SmoteConfig(k=config.smote_k, amount=config.smote_amount,
                         seed=config.seed)
    res = pp.smote_fhe(VflPartyA(Xa, y), VflPartyB(Xb, keys), cfg)
    Xa_full = np.vstack([Xa, res.rows_a])
    Xb_full = np.vstack([Xb, res.rows_b])
    patch = np.vstack([np.zeros_like(Xb), -res.mask_b])
    y_full = np.concatenate([y, np.ones(res.count)])
    _phase(phases, "preprocess", t0)
    extra["smote_rows_added"] = res.count
    extra["rows_after_smote"] = len(y_full)
    extra["smote_fhe_bytes"] = res.transcript.total_bytes
    if sink is not None:
        sink["smote_result"] = res
    return Xa_full, Xb_full, patch, y_full


def _setup(config, phases):
    with _attributed("setup"):
        t0 = time.time()
        ds = datamod.load_named(config.dataset, config.data_dir)
        keys = keygen(make_params(config.profile), config.seed + 7)
        _phase(phases, "setup", t0)
    return ds, keys


def _prepare_vertical(config, ds, keys, phases, extra, sink=None):
    with _attributed("align"):
        ds = _aligned_dataset(ds, config, phases, extra)
    y = ds.y
    patch = None
    with _attributed("preprocess"):
        Xa, Xb = datamod.vertical_blocks(ds, config.a_features)
        if config.woe:
            Xa, Xb = _woe_blocks(Xa, Xb, y, keys, config, phases, extra,
                                 sink)
        if config.smote_amount:
            Xa, Xb, patch, y = _smote_blocks(Xa, Xb, y, keys, config,
                                             phases, extra, sink)
    return Xa, Xb, patch, y


def preprocess_tables(config: ExperimentConfig, sink: dict | None = None):
    """Alignment plus encrypted preprocessing, no training.

    Returns (Xa, Xb, patch, y, phases, extra); patch is the label
    holder's additive correction for the partner's masked synthetic
    rows (None when oversampling is off).
    """
    if config.mode != "vertical":
        raise ValueError("preprocessing applies to feature-split runs")
    phases: dict = {}
    extra: dict = {}
    ds, keys = _setup(config, phases)
    Xa, Xb, patch, y = _prepare_vertical(config, ds, keys, phases, extra,
                                         sink)
    if sink is not None:
        sink["keys"] = keys
    return Xa, Xb, patch, y, phases, extra


def _train_lr_vertical(Xa, Xb, patch, y, train_idx, test_idx, keys, config,
                       repeat, phases, report_extra, sink=None):
    lr = LrConfig(learning_rate_schedule=lambda t: config.alpha,
                  iterations=config.iterations,
                  batch_size=config.batch_size,
                  seed=int(config.seed * 1009 + repeat))
    if config.standardize:
        st_a = datamod.fit_standardizer(Xa[train_idx])
        st_b = datamod.fit_standardizer(Xb[train_idx])
        tr_a, tr_b = st_a.transform(Xa[train_idx]), st_b.transform(Xb[train_idx])
        te_a, te_b = st_a.transform(Xa[test_idx]), st_b.transform(Xb[test_idx])
        tr_patch = te_patch = None
    else:
        tr_a, tr_b = Xa[train_idx], Xb[train_idx]
        te_a, te_b = Xa[test_idx], Xb[test_idx]
        tr_patch = patch[train_idx] if patch is not None else None
        te_patch = patch[test_idx] if patch is not None else None
    t0 = time.time()
    party_a = VflPartyA(tr_a, y[train_idx], b_patch=tr_patch)
    party_b = VflPartyB(tr_b, keys)
    state = vfl_train(party_a, party_b, lr)
    train_s = time.time() - t0
    _phase(phases, "train", t0)

    if sink is not None and repeat == 0:
        d = Xa.shape[1] + Xb.shape[1]
        sink.update(kind="lr", beta=state.beta,
                    scaler_mean=(np.concatenate([st_a.mean, st_b.mean])
                                 if config.standardize else np.zeros(d)),
                    scaler_std=(np.concatenate([st_a.scale, st_b.scale])
                                if config.standardize else np.ones(d)))
    t0 = time.time()
    joint_test = np.hstack([te_a, te_b])
    if te_patch is not None:
        joint_test = joint_test + np.hstack(
            [np.zeros_like(te_a), te_patch])
    acc = score_accuracy(state.beta, joint_test,
                         datamod.to_signed(y[test_idx]))
    if repeat == 0:
        report_extra["encrypted_eval_accuracy"] = vfl_evaluate(
            VflPartyA(te_a, datamod.to_signed(y[test_idx]),
                      b_patch=te_patch),
            VflPartyB(te_b, keys), state.beta, seed=config.seed)
    _phase(phases, "evaluate", t0)
    return acc, train_s, state.transcript


def _train_lr_horizontal(X, y, train_idx, test_idx, keys, config, repeat,
                         phases, sink=None):
    lr = LrConfig(learning_rate_schedule=lambda t: config.alpha,
                  iterations=config.iterations,
                  batch_size=config.batch_size,
                  seed=int(config.seed * 1009 + repeat))
    st = datamod.fit_standardizer(X[train_idx])
    Xtr = st.transform(X[train_idx])
    ytr = datamod.to_signed(y[train_idx])
    shards = [(Xtr[i::config.k_clients], ytr[i::config.k_clients])
              for i in range(config.k_clients)]
    t0 = time.time()
    server = HflServer(keys, X.shape[1])
    clients = [HflClient(sx, sy) for sx, sy in shards]
    state = hfl_train(server, clients, lr)
    train_s = time.time() - t0
    _phase(phases, "train", t0)
    if sink is not None and repeat == 0:
        sink.update(kind="lr", beta=state.beta, scaler_mean=st.mean,
                    scaler_std=st.scale)
    t0 = time.time()
    acc = score_accuracy(state.beta, st.transform(X[test_idx]),
                         datamod.to_signed(y[test_idx]))
    _phase(phases, "evaluate", t0)
    return acc, train_s, state.transcript


def _train_trees(Xa, Xb, y, train_idx, test_idx, keys, config, repeat,
                 phases, sink=None):
    cfg = sb.SplitConfig(epsilon=config.epsilon, max_depth=config.depth,
                         num_trees=config.trees,
                         learning_rate=config.tree_lr)
    t0 = time.time()
    active = sb.ActiveParty(y=y[train_idx], X=Xa[train_idx], keys=keys)
    passive = sb.PassiveParty("passive0", Xb[train_idx],
                              keys.public_only())
    model, transcript = train_ensemble(
        active, [passive], cfg, seed=int(config.seed * 1009 + repeat))
    train_s = time.time() - t0
    _phase(phases, "train", t0)
    if sink is not None and repeat == 0:
        sink.update(kind="secureboost", model=model,
                    lookups={SB_ACTIVE: active.lookup,
                             "passive0": passive.lookup})
    t0 = time.time()
    lookups = {SB_ACTIVE: active.lookup, "passive0": passive.lookup}
    scores = np.array([
        centralized_score(model, lookups,
                          {SB_ACTIVE: Xa[test_idx][i],
                           "passive0": Xb[test_idx][i]})[0]
        for i in range(len(test_idx))])
    acc = float(((scores > 0).astype(float) == y[test_idx]).mean())
    _phase(phases, "evaluate", t0)
    return acc, train_s, transcript


def run_experiment(config: ExperimentConfig,
                   sink: dict | None = None) -> MetricsReport:
    """Align, preprocess (once), then train/score over seeded repeats.

    When a sink dict is supplied, the first repeat's trained artifacts
    (model, lookup tables or weights with scaler) are stored in it so
    callers can persist them.
    """
    phases: dict = {}
    extra: dict = {}
    ds, keys = _setup(config, phases)
    y = ds.y
    patch = None
    if config.mode == "vertical":
        Xa, Xb, patch, y = _prepare_vertical(config, ds, keys, phases,
                                             extra, sink)

    accs, times = [], []
    wire = {"bytes": 0, "rounds": 0, "messages": 0}
    for r in range(config.repeats):
        with _attributed(f"train (repeat {r})"):
            train_idx, test_idx = datamod.stratified_split(
                y, config.test_frac, seed=[config.seed, r])
            if config.model == "secureboost":
                acc, train_s, transcript = _train_trees(
                    Xa, Xb, y, train_idx, test_idx, keys, config, r,
                    phases, sink)
            elif config.mode == "vertical":
                acc, train_s, transcript = _train_lr_vertical(
                    Xa, Xb, patch, y, train_idx, test_idx, keys, config, r,
                    phases, extra, sink)
            else:
                acc, train_s, transcript = _train_lr_horizontal(
                    ds.X, y, train_idx, test_idx, keys, config, r, phases,
                    sink)
        accs.append(float(acc))
        times.append(train_s)
        wire["bytes"] += transcript.total_bytes
        wire["rounds"] += transcript.rounds
        wire["messages"] += len(transcript.messages)
        if sink is not None and r == 0:
            sink["transcript"] = transcript

    reps = config.repeats
    return MetricsReport(
        config_digest=config.digest(),
        dataset=ds.name,
        model=config.model,
        mode=config.mode,
        repeats=reps,
        accuracy=float(np.mean(accs)),
        accuracy_std=float(np.std(accs)),
        per_repeat=[round(a, 6) for a in accs],
        train_time_s=float(np.mean(times)),
        phases={k: round(v, 3) for k, v in phases.items()},
        transcript={k: v // reps for k, v in wire.items()},
        extra=extra,
    )


def application_configs(repeats: int = 20, seed: int = 0) -> dict:
    """The four benchmark runs with their tuned hyperparameters."""
    return {
        "breast-cancer": ExperimentConfig(
            dataset="breast-cancer", model="secureboost", a_features=15,
            trees=5, depth=3, epsilon=0.25, repeats=repeats, seed=seed),
        "wholesale": ExperimentConfig(
            dataset="wholesale", model="secureboost", a_features=4,
            trees=5, depth=3, epsilon=0.25, repeats=repeats, seed=seed),
        "voice": ExperimentConfig(
            dataset="voice", model="lr", a_features=13, iterations=12,
            alpha=0.5, repeats=repeats, seed=seed),
        "bankruptcy": ExperimentConfig(
            dataset="bankruptcy", model="lr", a_features=60, woe=True,
            smote_amount=32, iterations=10, alpha=0.2, batch_size=512,
            standardize=False, repeats=repeats, seed=seed),
    }


def bench_inference(trees=(1, 2, 3), depths=(1, 2, 3, 4, 5), samples: int = 8,
                    seed: int = 0, data_dir=None) -> list:
    """Wire-cost comparison of the two inference protocols.

    Trains one ensemble per depth (a boosted prefix is itself a valid
    smaller ensemble), then accounts bytes over the same test rows for
    the node-by-node walk versus the intersection-based protocol.
    """
    ds = datamod.load_named("breast-cancer", data_dir)
    keys = keygen(make_params("desk"), seed + 7)
    train_idx, test_idx = datamod.stratified_split(ds.y, 0.2, seed=seed)
    # same feature split as the accuracy experiment
    Xa, Xb = datamod.vertical_blocks(ds, 15)
    max_trees = max(trees)
    rows = []
    for depth in depths:
        cfg = sb.SplitConfig(epsilon=0.25, max_depth=depth,
                             num_trees=max_trees)
        active = sb.ActiveParty(y=ds.y[train_idx], X=Xa[train_idx],
                                keys=keys)
        passive = sb.PassiveParty("passive0", Xb[train_idx],
                                  keys.public_only())
        model, _ = train_ensemble(active, [passive], cfg, seed=seed)
        sample_rows = test_idx[:samples]
        for count in trees:
            sliced = sb.FedTreeModel(model.trees[:count], model.parties,
                                     cfg)
            classic_bytes = classic_rounds = psi_bytes = psi_rounds = 0
            for i, row in enumerate(sample_rows):
                shards = {SB_ACTIVE: Xa[row], "passive0": Xb[row]}
                _, _, tr_c = classic_infer(sliced, active, [passive],
                                           shards, sample_id=i, seed=seed)
                _, _, tr_p = psi_infer(sliced, active, [passive], shards,
                                       sample_id=i, seed=seed)
                classic_bytes += tr_c.total_bytes
                classic_rounds += tr_c.rounds
                psi_bytes += tr_p.total_bytes
                psi_rounds += tr_p.rounds
            rows.append({
                "trees": count,
                "depth": depth,
                "samples": len(sample_rows),
                "classic_bytes": classic_bytes,
                "classic_rounds": classic_rounds,
                "psi_bytes": psi_bytes,
                "psi_rounds": psi_rounds,
                "reduction_pct": round(
                    100.0 * (1.0 - psi_bytes / classic_bytes), 1),
            })
    return rows
