"""Benchmark dataset access and split utilities.

Named datasets load from CSV when a data directory provides them and
otherwise fall back to deterministic synthetic stand-ins with the same
row count, feature count, and label balance as the published benchmarks
(breast cancer always comes from scikit-learn).  Loaders return raw
feature matrices; standardization is a separate, recorded step so test
rows can be transformed with train-split statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    """Feature matrix with 0/1 labels and provenance."""

    name: str
    X: np.ndarray
    y: np.ndarray
    feature_names: list
    source: str = "surrogate"

    def __post_init__(self):
        self.X = np.asarray(self.X, float)
        self.y = np.asarray(self.y, float)

    @property
    def shape(self):
        return self.X.shape


@dataclass
class Standardizer:
    """Recorded column statistics: zero mean, unit variance, clipped."""

    mean: np.ndarray
    scale: np.ndarray
    clip: float = 8.0

    def transform(self, X) -> np.ndarray:
        z = (np.asarray(X, float) - self.mean) / self.scale
        return np.clip(z, -self.clip, self.clip)


def fit_standardizer(X, clip: float = 8.0) -> Standardizer:
    X = np.asarray(X, float)
    scale = X.std(axis=0)
    return Standardizer(X.mean(axis=0), np.where(scale == 0, 1.0, scale),
                        clip)


def to_signed(y) -> np.ndarray:
    """Map 0/1 labels to -1/+1."""
    return 2.0 * np.asarray(y, float) - 1.0


def stratified_split(y, test_frac: float = 0.2, seed: int = 0):
    """Seeded per-class split; returns (train_idx, test_idx)."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(y):
        rows = np.flatnonzero(y == cls)
        rng.shuffle(rows)
        cut = max(1, int(round(len(rows) * test_frac)))
        test.append(rows[:cut])
        train.append(rows[cut:])
    train = np.sort(np.concatenate(train))
    test = np.sort(np.concatenate(test))
    return train, test


def load_dataset(path, label_column: str) -> Dataset:
    """Generic CSV loader: header row, numeric features, binary labels."""
    import pandas as pd

    frame = pd.read_csv(path)
    if label_column not in frame.columns:
        raise ValueError(f"label column {label_column!r} missing from "
                         f"{path}")
    features = frame.drop(columns=[label_column])
    bad = [c for c in features.columns
           if not np.issubdtype(features[c].dtype, np.number)]
    if bad or features.isna().any().any():
        raise ValueError(f"non-numeric cells in columns {bad or 'NA'}")
    labels = frame[label_column]
    classes = sorted(labels.unique().tolist())
    if len(classes) != 2:
        raise ValueError("label column must be binary")
    y = (labels == classes[1]).to_numpy(float)
    return Dataset(Path(path).stem, features.to_numpy(float), y,
                   list(features.columns), source="csv")


# -- deterministic stand-ins ----------------------------------------------------

VOICE_FEATURES = [
    "meanfreq", "sd", "median", "Q25", "Q75", "IQR", "skew", "kurt",
    "sp_ent", "sfm", "mode", "centroid", "meanfun", "minfun", "maxfun",
    "meandom", "mindom", "maxdom", "dfrange", "modindx",
]

WHOLESALE_FEATURES = [
    "region", "fresh", "milk", "grocery", "frozen", "detergents_paper",
    "delicassen",
]


def _surrogate_wholesale() -> Dataset:
    """440 buyers, two channels (298/142) with channel-typed spending."""
    rng = np.random.default_rng(4401)
    n_horeca, n_retail = 298, 142
    y = np.concatenate([np.zeros(n_horeca), np.ones(n_retail)])
    region = rng.choice([1.0, 2.0, 3.0], size=440, p=[0.72, 0.1, 0.18])
    base = rng.lognormal(mean=8.0, sigma=1.0, size=(440, 6))
    # retail buyers skew toward grocery/milk/detergents, horeca toward
    # fresh/frozen; overlap keeps the task non-trivial
    tilt = np.where(y[:, None] > 0,
                    np.array([[0.5, 1.8, 2.2, 0.45, 3.0, 1.0]]),
                    np.array([[1.6, 0.7, 0.8, 1.5, 0.25, 1.0]]))
    spend = base * tilt * rng.lognormal(0.0, 0.35, size=(440, 6))
    X = np.column_stack([region, spend])
    perm = rng.permutation(440)
    return Dataset("wholesale", X[perm], y[perm], list(WHOLESALE_FEATURES))


def _surrogate_voice() -> Dataset:
    """3168 recordings, balanced classes, ten informative acoustics."""
    rng = np.random.default_rng(3168)
    n = 3168
    y = np.concatenate([np.zeros(n // 2), np.ones(n // 2)])
    means = np.zeros(20)
    shift = np.zeros(20)
    shift[[0, 3, 5, 8, 9, 12, 13, 15, 17, 18]] = [
        1.3, 1.5, -1.8, 1.0, -1.1, 2.2, 1.3, -0.9, 1.1, -1.4]
    cov = rng.normal(size=(20, 20)) * 0.18
    cov = cov @ cov.T + np.eye(20)
    chol = np.linalg.cholesky(cov)
    X = means + rng.normal(size=(n, 20)) @ chol.T
    X += y[:, None] * shift
    perm = rng.permutation(n)
    return Dataset("voice", X[perm], y[perm], list(VOICE_FEATURES))


def _surrogate_bankruptcy() -> Dataset:
    """6819 firms, 95 ratios, exactly 216 failures (top latent risk)."""
    rng = np.random.default_rng(6819)
    n, f = 6819, 95
    X = rng.normal(size=(n, f))
    heavy = rng.choice(f, 20, replace=False)
    X[:, heavy] = rng.lognormal(0.0, 0.8, size=(n, 20)) - 1.0
    w = np.zeros(f)
    informative = rng.choice(f, 24, replace=False)
    w[informative] = rng.normal(0.0, 1.0, 24)
    risk = X @ w + rng.normal(0.0, 2.2, n)
    y = np.zeros(n)
    y[np.argsort(risk)[-216:]] = 1.0
    names = [f"ratio_{i + 1:02d}" for i in range(f)]
    return Dataset("bankruptcy", X, y, names)


def _load_breast_cancer() -> Dataset:
    from sklearn.datasets import load_breast_cancer

    data = load_breast_cancer()
    return Dataset("breast-cancer", data.data, data.target.astype(float),
                   list(data.feature_names), source="sklearn")


@dataclass(frozen=True)
class DatasetInfo:
    rows: int
    features: int
    label_column: str
    surrogate: object
    a_features: int          # label-holder block width in vertical splits
    psi_pad: int = 0         # per-side id-universe size before alignment


REGISTRY = {
    "breast-cancer": DatasetInfo(569, 30, "target", _load_breast_cancer, 15),
    "wholesale": DatasetInfo(440, 7, "channel", _surrogate_wholesale, 4),
    "voice": DatasetInfo(3168, 20, "label", _surrogate_voice, 13,
                         psi_pad=4800),
    "bankruptcy": DatasetInfo(6819, 95, "bankrupt", _surrogate_bankruptcy,
                              60, psi_pad=17000),
}


def load_named(name: str, data_dir=None) -> Dataset:
    """Load a benchmark by name; CSV under data_dir wins when present."""
    if name not in REGISTRY:
        raise ValueError(f"unknown dataset {name!r}; "
                         f"choose from {sorted(REGISTRY)}")
    info = REGISTRY[name]
    if data_dir is not None:
        csv = Path(data_dir) / f"{name}.csv"
        if csv.exists():
            ds = load_dataset(csv, info.label_column)
            ds.name = name
            if ds.shape != (info.rows, info.features):
                raise ValueError(
                    f"{csv} has shape {ds.shape}, expected "
                    f"{(info.rows, info.features)}")
            return ds
    return info.surrogate()


def vertical_blocks(dataset: Dataset, a_features: int | None = None):
    """Split columns for two-party training: (A block, B block)."""
    fa = (REGISTRY[dataset.name].a_features
          if a_features is None and dataset.name in REGISTRY
          else a_features)
    if fa is None or not 0 < fa < dataset.X.shape[1]:
        raise ValueError("vertical split must leave both parties columns")
    return dataset.X[:, :fa], dataset.X[:, fa:]


def padded_id_sets(n_common: int, pad_to: int, seed: int = 0):
    """Two id lists sharing exactly n_common ids, each padded to pad_to.

    Shared ids map to sample rows 0..n_common-1; fillers are disjoint
    between the parties.
    """
    if pad_to < n_common:
        raise ValueError("cannot pad below the shared population")
    rng = np.random.default_rng(seed)
    common = [f"s{i:06d}" for i in range(n_common)]
    only_a = [f"a{i:06d}" for i in range(pad_to - n_common)]
    only_b = [f"b{i:06d}" for i in range(pad_to - n_common)]
    ids_a = common + only_a
    ids_b = common + only_b
    rng.shuffle(ids_a)
    rng.shuffle(ids_b)
    return ids_a, ids_b
