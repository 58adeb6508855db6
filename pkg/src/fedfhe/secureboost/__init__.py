"""Federated gradient-boosted trees over encrypted gradient statistics."""

from .core import (
    SplitConfig,
    best_split,
    compute_gh,
    leaf_weight,
    predict_plain,
    quantile_splits,
    sibling_subtract,
    train_plain,
)
from .federated import (
    ActiveParty,
    FedTreeModel,
    PassiveParty,
    classic_infer,
    load_lookup,
    load_model,
    psi_infer,
    save_lookup,
    save_model,
    train_ensemble,
)
from .histograms import aggregate_encrypted_gh, encrypt_gh_pairs

__all__ = [
    "ActiveParty", "FedTreeModel", "PassiveParty", "SplitConfig",
    "aggregate_encrypted_gh", "best_split", "classic_infer", "compute_gh",
    "encrypt_gh_pairs", "leaf_weight", "load_lookup", "load_model",
    "predict_plain", "psi_infer", "quantile_splits", "save_lookup",
    "save_model", "sibling_subtract", "train_ensemble", "train_plain",
]
