"""Multiclass AdaBoost (SAMME) over shallow CART trees."""
from __future__ import annotations

import numpy as np

from .base import ProbabilisticClassifier, softmax
from .tree import Binner, TreeArrays, build_tree


class AdaBoost(ProbabilisticClassifier):
    """SAMME boosting.

    Each round fits a depth-limited tree on the current sample weights and
    gets weight ``lr * (log((1 - err) / err) + log(K - 1))``.  Class scores
    are the summed weights of the rounds voting for each class and the
    probability is their softmax.
    """

    algorithm_id = "AdaBoost"
    defaults = {"n_rounds": 50, "max_depth": 2, "learning_rate": 1.0, "max_bins": 255}

    def _fit(self, X, codes, rng):
        p = self.params
        K = len(self.classes_)
        binner = Binner.fit(X, p["max_bins"])
        Xb = binner.transform(X)
        n = len(codes)
        w = np.full(n, 1.0 / n)
        self.trees_: list[TreeArrays] = []
        alphas = []
        for _ in range(p["n_rounds"]):
            rows = np.flatnonzero(w > 0)
            tree = build_tree(Xb[rows], codes[rows], w[rows], K, binner,
                              max_depth=p["max_depth"], min_leaf=1)
            pred = np.argmax(tree.value[tree.apply(X)], axis=1)
            miss = pred != codes
            err = float(w[miss].sum() / w.sum())
            if err <= 0.0:
                # perfect learner: keep it alone (if first) and stop
                if not self.trees_:
                    self.trees_.append(tree)
                    alphas.append(1.0)
                break
            if err >= 1.0 - 1.0 / K:
                if not self.trees_:
                    self.trees_.append(tree)
                    alphas.append(1.0)
                break
            alpha = p["learning_rate"] * (np.log((1.0 - err) / err) + np.log(K - 1.0))
            self.trees_.append(tree)
            alphas.append(float(alpha))
            w = w * np.exp(alpha * miss)
            w /= w.sum()
        self.alphas_ = np.array(alphas)

    def decision_scores(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        scores = np.zeros((len(X), len(self.classes_)))
        rows = np.arange(len(X))
        for tree, alpha in zip(self.trees_, self.alphas_):
            vote = np.argmax(tree.value[tree.apply(X)], axis=1)
            scores[rows, vote] += alpha
        return scores

    def _proba(self, X):
        return softmax(self.decision_scores(X))

    def get_state(self):
        sizes = np.array([len(t.feature) for t in self.trees_])
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees_])
        return {"alphas": self.alphas_, "sizes": sizes,
                "depths": np.array([t.depth for t in self.trees_]),
                "feature": cat("feature"), "threshold": cat("threshold"), "left": cat("left"),
                "right": cat("right"), "value": np.concatenate([t.value for t in self.trees_])}

    def set_state(self, s):
        self.alphas_ = s["alphas"].astype(np.float64)
        bounds = np.concatenate([[0], np.cumsum(s["sizes"])])
        self.trees_ = []
        for i, depth in enumerate(s["depths"]):
            a, b = bounds[i], bounds[i + 1]
            self.trees_.append(TreeArrays.from_state(
                {"feature": s["feature"][a:b], "threshold": s["threshold"][a:b],
                 "left": s["left"][a:b], "right": s["right"][a:b], "value": s["value"][a:b],
                 "depth": depth}))
