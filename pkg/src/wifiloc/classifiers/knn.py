"""k-nearest-neighbours vote classifier."""
from __future__ import annotations

import numpy as np

from .base import ProbabilisticClassifier


class KNN(ProbabilisticClassifier):
    """Probability of a class = fraction of the k nearest training vectors
    (Euclidean distance on raw dBm) carrying it.  Equidistant neighbours are
    taken in training order, so results are deterministic."""

    algorithm_id = "KNN"
    defaults = {"k": 5, "chunk": 512}

    def _fit(self, X, codes, rng):
        self.X_ = X.copy()
        self.codes_ = codes.copy()

    def neighbors(self, X) -> np.ndarray:
        """Indices of the k nearest training rows, nearest first."""
        k = min(self.params["k"], len(self.X_))
        sq = (self.X_ ** 2).sum(axis=1)
        out = np.empty((len(X), k), dtype=np.int64)
        step = self.params["chunk"]
        for a in range(0, len(X), step):
            Q = X[a:a + step]
            d = sq[None, :] - 2.0 * Q @ self.X_.T + (Q ** 2).sum(axis=1)[:, None]
            kth = np.partition(d, k - 1, axis=1)[:, k - 1]
            for r in range(len(Q)):
                # every row at or inside the k-th distance, ordered by (distance, index)
                cand = np.flatnonzero(d[r] <= kth[r])
                out[a + r] = cand[np.argsort(d[r, cand], kind="stable")[:k]]
        return out

    def _proba(self, X):
        nn = self.neighbors(X)
        labels = self.codes_[nn]
        C = len(self.classes_)
        P = np.zeros((len(X), C))
        for j in range(labels.shape[1]):
            P[np.arange(len(X)), labels[:, j]] += 1.0
        return P / labels.shape[1]

    def get_state(self):
        return {"X": self.X_, "codes": self.codes_}

    def set_state(self, s):
        self.X_ = s["X"].astype(np.float64)
        self.codes_ = s["codes"].astype(np.int64)
