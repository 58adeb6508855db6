"""Encrypted logistic regression: packed gradient kernels, the
operation counter, and the horizontal/vertical training protocols."""

from .core import (LrConfig, SigmoidPoly, WeightState, fit_sigmoid_poly,
                   load_lr_model, margin_rows, plain_grad_step, plain_train,
                   quantized_rate, save_lr_model, score_accuracy, sigmoid,
                   surrogate_loss)
from .kernels import (PackedMatrix, beta_replication_error, count_ops,
                      decrypt_beta, grad_step_baseline, grad_step_improved,
                      pack_cols, pack_rows, replicate_beta)
from .protocols import (HflClient, HflServer, VflPartyA, VflPartyB,
                        hfl_evaluate, hfl_train, vfl_evaluate, vfl_train)

__all__ = [
    "LrConfig", "SigmoidPoly", "WeightState", "fit_sigmoid_poly",
    "load_lr_model", "margin_rows", "plain_grad_step", "plain_train",
    "quantized_rate", "save_lr_model", "score_accuracy", "sigmoid",
    "surrogate_loss", "PackedMatrix", "beta_replication_error", "count_ops",
    "decrypt_beta", "grad_step_baseline", "grad_step_improved", "pack_cols",
    "pack_rows", "replicate_beta", "HflClient", "HflServer", "VflPartyA",
    "VflPartyB", "hfl_evaluate", "hfl_train", "vfl_evaluate", "vfl_train",
]
