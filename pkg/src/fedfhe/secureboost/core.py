"""Gradient-boosted tree core: gradients, quantile splits, gain, leaves.

Binary logistic loss throughout.  The same split/gain/leaf code drives
both the single-machine trainer (the reference oracle) and the
federated protocol, so tie-breaking is identical in both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SplitConfig:
    lam: float = 1.0          # leaf L2 penalty
    gamma: float = 0.0        # per-split penalty
    epsilon: float = 0.125    # quantile granularity, 1/epsilon buckets
    max_depth: int = 3
    num_trees: int = 5
    learning_rate: float = 0.5
    min_leaf: int = 2

    def __post_init__(self):
        buckets = 1.0 / self.epsilon
        if abs(buckets - round(buckets)) > 1e-9 or round(buckets) < 2:
            raise ValueError("1/epsilon must be an integer >= 2")


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def compute_gh(y: np.ndarray, y_hat: np.ndarray):
    """First/second-order logistic-loss gradients; y in {0,1}."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ValueError("labels and scores must have the same length")
    p = sigmoid(y_hat)
    return p - y, p * (1.0 - p)


def quantile_splits(values: np.ndarray, epsilon: float = 0.125) -> np.ndarray:
    """Candidate thresholds at equal-count boundaries.

    Midpoints between distinct adjacent sorted values; boundaries that
    fall inside a run of ties are skipped, so a constant feature yields
    no candidates.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty feature values")
    buckets = round(1.0 / epsilon)
    s = np.sort(values)
    n = s.size
    out = []
    for i in range(1, buckets):
        r = (i * n) // buckets
        if 0 < r < n and s[r - 1] != s[r]:
            out.append(0.5 * (s[r - 1] + s[r]))
    return np.unique(np.asarray(out, dtype=np.float64))


def bucket_index(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Bucket v holds x with t_{v-1} < x <= t_v (left-open, right-closed)."""
    return np.searchsorted(thresholds, np.asarray(values), side="left")


def gain_for(gl, hl, g_total, h_total, lam: float, gamma: float) -> float:
    gr = g_total - gl
    hr = h_total - hl
    before = g_total * g_total / (h_total + lam)
    return 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - before) - gamma


def best_split(G: np.ndarray, H: np.ndarray, config: SplitConfig,
               bucket_counts=None):
    """Best (feature, bucket, gain) over prefix splits of each histogram row.

    G, H are d x l matrices; rows may be zero-padded past a feature's
    bucket count (pass bucket_counts to stop the prefix scan early).
    Ties break toward the lowest feature, then lowest bucket.
    """
    G = np.atleast_2d(np.asarray(G, dtype=np.float64))
    H = np.atleast_2d(np.asarray(H, dtype=np.float64))
    if G.shape != H.shape:
        raise ValueError("G/H shape mismatch")
    d, width = G.shape
    best = (-1, -1, 0.0)
    for k in range(d):
        nb = width if bucket_counts is None else int(bucket_counts[k])
        if nb < 2:
            continue
        g_total = G[k, :nb].sum()
        h_total = H[k, :nb].sum()
        gl = hl = 0.0
        for v in range(nb - 1):
            gl += G[k, v]
            hl += H[k, v]
            gain = gain_for(gl, hl, g_total, h_total,
                            config.lam, config.gamma)
            if gain > best[2]:
                best = (k, v, gain)
    return best


def leaf_weight(g_sum: float, h_sum: float, lam: float) -> float:
    return -g_sum / (h_sum + lam)


def sibling_subtract(parent, left):
    """Right-child histograms as parent minus left, entrywise.

    Accepts plain (G, H) array pairs or any objects implementing
    __sub__ (the encrypted histogram container does).
    """
    if isinstance(parent, tuple):
        pg, ph = parent
        lg, lh = left
        if np.shape(pg) != np.shape(lg) or np.shape(ph) != np.shape(lh):
            raise ValueError("histogram shape mismatch")
        return (np.asarray(pg) - np.asarray(lg),
                np.asarray(ph) - np.asarray(lh))
    return parent - left


# -- single-machine reference trainer ----------------------------------------


@dataclass
class PlainNode:
    node_id: int
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left < 0


@dataclass
class PlainTree:
    nodes: dict

    def leaf_for(self, x: np.ndarray) -> PlainNode:
        node = self.nodes[0]
        while not node.is_leaf:
            nxt = node.left if x[node.feature] <= node.threshold \
                else node.right
            node = self.nodes[nxt]
        return node


def _grow_plain(X, g, h, instances, config, splits_per_feature):
    nodes = {}

    def make_leaf(node_id, idx):
        w = leaf_weight(g[idx].sum(), h[idx].sum(), config.lam)
        nodes[node_id] = PlainNode(node_id,
                                   weight=config.learning_rate * w)

    def grow(node_id, idx, depth):
        if depth >= config.max_depth or idx.size < 2 * config.min_leaf:
            make_leaf(node_id, idx)
            return
        d = X.shape[1]
        width = max((len(t) + 1 for t in splits_per_feature), default=1)
        G = np.zeros((d, width))
        H = np.zeros((d, width))
        counts = np.zeros(d, dtype=np.int64)
        for k in range(d):
            t = splits_per_feature[k]
            counts[k] = len(t) + 1
            if len(t) == 0:
                continue
            b = bucket_index(X[idx, k], t)
            np.add.at(G[k], b, g[idx])
            np.add.at(H[k], b, h[idx])
        k, v, gain = best_split(G, H, config, counts)
        if gain <= 0.0:
            make_leaf(node_id, idx)
            return
        thr = splits_per_feature[k][v]
        go_left = X[idx, k] <= thr
        left_idx = idx[go_left]
        right_idx = idx[~go_left]
        if left_idx.size < config.min_leaf or right_idx.size < config.min_leaf:
            make_leaf(node_id, idx)
            return
        node = PlainNode(node_id, feature=k, threshold=thr,
                         left=2 * node_id + 1, right=2 * node_id + 2)
        nodes[node_id] = node
        grow(node.left, left_idx, depth + 1)
        grow(node.right, right_idx, depth + 1)

    grow(0, instances, 0)
    return PlainTree(nodes)


def train_plain(X, y, config: SplitConfig):
    """Reference single-machine booster used as the federated oracle."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    splits = [quantile_splits(X[:, k], config.epsilon)
              for k in range(X.shape[1])]
    y_hat = np.zeros(len(y))
    trees = []
    for _ in range(config.num_trees):
        g, h = compute_gh(y, y_hat)
        tree = _grow_plain(X, g, h, np.arange(len(y)), config, splits)
        trees.append(tree)
        y_hat += np.array([tree.leaf_for(x).weight for x in X])
    return trees


def predict_plain(trees, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    scores = np.zeros(len(X))
    for tree in trees:
        scores += np.array([tree.leaf_for(x).weight for x in X])
    return scores
