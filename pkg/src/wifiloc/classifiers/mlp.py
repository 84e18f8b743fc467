"""One-hidden-layer perceptron with softmax output."""
from __future__ import annotations

import numpy as np

from .base import ProbabilisticClassifier, softmax


class Standardizer:
    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = mean
        self.scale = scale

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        scale = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(scale > 0, scale, 1.0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale


class MLP(ProbabilisticClassifier):
    """ReLU hidden layer, softmax output, cross-entropy loss.

    Trained with mini-batch Adam.  A random ``validation_fraction`` of the
    training rows is held out; training stops once its loss has not improved
    by ``tol`` for ``patience`` epochs and the best weights are restored.
    """

    algorithm_id = "MLP"
    defaults = {"hidden": 64, "batch_size": 32, "learning_rate": 1e-3, "epochs": 200,
                "validation_fraction": 0.1, "patience": 10, "tol": 1e-4}

    def _fit(self, X, codes, rng):
        p = self.params
        self.scaler_ = Standardizer.fit(X)
        Z = self.scaler_(X)
        n, d = Z.shape
        C = len(self.classes_)
        order = rng.permutation(n)
        n_hold = int(round(p["validation_fraction"] * n)) if n >= 20 else 0
        hold, train = order[:n_hold], order[n_hold:]

        H = p["hidden"]
        params = [rng.normal(0.0, np.sqrt(2.0 / d), (d, H)), np.zeros(H),
                  rng.normal(0.0, np.sqrt(2.0 / H), (H, C)), np.zeros(C)]
        m = [np.zeros_like(a) for a in params]
        v = [np.zeros_like(a) for a in params]
        b1, b2, eps, lr = 0.9, 0.999, 1e-8, p["learning_rate"]
        step = 0
        best_loss, best, stale = np.inf, [a.copy() for a in params], 0
        Y = np.eye(C)[codes]

        for _ in range(p["epochs"]):
            perm = rng.permutation(train)
            for a in range(0, len(perm), p["batch_size"]):
                batch = perm[a:a + p["batch_size"]]
                Xb, Yb = Z[batch], Y[batch]
                h = np.maximum(Xb @ params[0] + params[1], 0.0)
                P = softmax(h @ params[2] + params[3])
                g_out = (P - Yb) / len(batch)
                g_h = (g_out @ params[2].T) * (h > 0)
                grads = [Xb.T @ g_h, g_h.sum(axis=0), h.T @ g_out, g_out.sum(axis=0)]
                step += 1
                for i, g in enumerate(grads):
                    m[i] = b1 * m[i] + (1 - b1) * g
                    v[i] = b2 * v[i] + (1 - b2) * g * g
                    mh = m[i] / (1 - b1 ** step)
                    vh = v[i] / (1 - b2 ** step)
                    params[i] -= lr * mh / (np.sqrt(vh) + eps)
            watch = hold if n_hold else train
            loss = self._loss(params, Z[watch], codes[watch])
            if loss < best_loss - p["tol"]:
                best_loss, best, stale = loss, [a.copy() for a in params], 0
            else:
                stale += 1
                if stale >= p["patience"]:
                    break
        self.weights_ = best

    @staticmethod
    def _forward(params, Z):
        h = np.maximum(Z @ params[0] + params[1], 0.0)
        return softmax(h @ params[2] + params[3])

    def _loss(self, params, Z, codes):
        P = self._forward(params, Z)
        return float(-np.log(np.clip(P[np.arange(len(codes)), codes], 1e-12, None)).mean())

    def _proba(self, X):
        return self._forward(self.weights_, self.scaler_(X))

    def get_state(self):
        W1, b1, W2, b2 = self.weights_
        return {"W1": W1, "b1": b1, "W2": W2, "b2": b2,
                "mean": self.scaler_.mean, "scale": self.scaler_.scale}

    def set_state(self, s):
        self.weights_ = [s["W1"], s["b1"], s["W2"], s["b2"]]
        self.scaler_ = Standardizer(s["mean"], s["scale"])
