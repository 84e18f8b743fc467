"""Linear one-vs-rest SVM trained by stochastic subgradient descent."""
from __future__ import annotations

import numpy as np

from .base import ProbabilisticClassifier, softmax
from .mlp import Standardizer


class LinearSVM(ProbabilisticClassifier):
    """One-vs-rest hinge loss with L2 penalty ``lam``, Pegasos updates.

    Features are standardized on the training data; the bias is an extra
    constant feature.  The returned weights are the average of the iterates
    over the last epoch.  Probabilities are the softmax of the class margins
    (not calibrated).
    """

    algorithm_id = "LinearSVM"
    defaults = {"lam": 1e-3, "epochs": 30, "batch_size": 64}

    def _fit(self, X, codes, rng):
        p = self.params
        self.scaler_ = Standardizer.fit(X)
        Z = self._augment(self.scaler_(X))
        n, d = Z.shape
        C = len(self.classes_)
        Y = -np.ones((n, C))
        Y[np.arange(n), codes] = 1.0
        lam = p["lam"]
        radius = 1.0 / np.sqrt(lam)
        W = np.zeros((C, d))
        avg = np.zeros_like(W)
        t = 0
        for epoch in range(p["epochs"]):
            perm = rng.permutation(n)
            last = epoch == p["epochs"] - 1
            n_avg = 0
            for a in range(0, n, p["batch_size"]):
                batch = perm[a:a + p["batch_size"]]
                t += 1
                eta = 1.0 / (lam * t)
                margin = Y[batch] * (Z[batch] @ W.T)
                active = (margin < 1.0) * Y[batch]
                grad = lam * W - (active.T @ Z[batch]) / len(batch)
                W = W - eta * grad
                norms = np.linalg.norm(W, axis=1, keepdims=True)
                W = W * np.minimum(1.0, radius / np.maximum(norms, 1e-300))
                if last:
                    avg += W
                    n_avg += 1
        self.W_ = avg / max(n_avg, 1)

    @staticmethod
    def _augment(Z):
        return np.hstack([Z, np.ones((len(Z), 1))])

    def margins(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self._augment(self.scaler_(X)) @ self.W_.T

    def _proba(self, X):
        return softmax(self.margins(X))

    def get_state(self):
        return {"W": self.W_, "mean": self.scaler_.mean, "scale": self.scaler_.scale}

    def set_state(self, s):
        self.W_ = s["W"]
        self.scaler_ = Standardizer(s["mean"], s["scale"])
