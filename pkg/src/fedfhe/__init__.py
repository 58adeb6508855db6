"""Federated learning toolkit over leveled approximate homomorphic encryption.

Subpackages: ckks (FHE engine), packed (matrix-in-slots kernels), psi
(private set intersection), simnet (deterministic multi-party network
simulator), secureboost (federated gradient boosting), logreg (encrypted
logistic-regression training), preprocess (WOE and SMOTE, plain and
encrypted), data (dataset loading), experiments (paper-style runs), cli.
"""

__version__ = "0.1.0"
