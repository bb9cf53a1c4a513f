"""Shared l2-regularized logistic regression.

Backs both the learned tactic detectors and the outcome classifier. The
loss/gradient pair is written out explicitly so it can be checked against
finite differences; minimization is delegated to scipy's L-BFGS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

L2_GRID = (0.01, 0.1, 1.0, 10.0)


def logistic_loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray,
                           l2: float) -> tuple[float, np.ndarray]:
    """Mean negative log likelihood + (l2/2)||w||^2; bias unregularized.

    ``params`` = weights followed by the bias term.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    # log(1 + exp(z)) - y z, computed stably
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w @ w)
    p = 1.0 / (1.0 + np.exp(-z))
    resid = (p - y) / len(y)
    grad = np.concatenate([X.T @ resid + l2 * w, [resid.sum()]])
    return loss, grad


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float
    # per-feature standardization fitted on training data
    mean: np.ndarray = field(default=None)
    std: np.ndarray = field(default=None)

    def scale(self, X: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return X
        return (X - self.mean) / self.std

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        z = self.scale(np.atleast_2d(X)) @ self.weights + self.bias
        return 1.0 / (1.0 + np.exp(-z))

    def predict(self, X: np.ndarray, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) > threshold).astype(int)


def fit_logistic(X: np.ndarray, y: np.ndarray, l2: float,
                 standardize: bool = True, tol: float = 1e-6,
                 x0: np.ndarray | None = None) -> LogisticModel:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(set(y.tolist())) < 2:
        raise ValueError("training labels contain a single class")
    mean = std = None
    if standardize:
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        std = np.where(std == 0, 1.0, std)
        X = (X - mean) / std
    if x0 is None:
        x0 = np.zeros(X.shape[1] + 1)
    res = minimize(
        logistic_loss_and_grad, x0, args=(X, y, l2), jac=True, method="L-BFGS-B",
        options={"gtol": tol, "ftol": 0.0, "maxiter": 2000},
    )
    return LogisticModel(weights=res.x[:-1], bias=float(res.x[-1]), l2=l2,
                         mean=mean, std=std)


def cross_val_accuracy(X: np.ndarray, y: np.ndarray, l2: float,
                       folds: int = 5, seed: int = 0) -> float:
    """k-fold CV accuracy; folds with one training class predict majority."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(y))
    splits = np.array_split(idx, folds)
    correct = 0
    for k in range(folds):
        test_idx = splits[k]
        train_idx = np.concatenate([splits[j] for j in range(folds) if j != k])
        y_tr = y[train_idx]
        if len(set(y_tr.tolist())) < 2:
            pred = np.full(len(test_idx), round(float(y_tr.mean())))
        else:
            model = fit_logistic(X[train_idx], y_tr, l2)
            pred = model.predict(X[test_idx])
        correct += int((pred == y[test_idx]).sum())
    return correct / len(y)


def select_l2(X: np.ndarray, y: np.ndarray, grid=L2_GRID, folds: int = 5,
              seed: int = 0) -> float:
    """Pick the grid l2 with the best CV accuracy (smallest wins ties)."""
    best_l2, best_acc = grid[0], -1.0
    for l2 in grid:
        acc = cross_val_accuracy(X, y, l2, folds=folds, seed=seed)
        if acc > best_acc:
            best_l2, best_acc = l2, acc
    return best_l2
