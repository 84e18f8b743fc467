"""Random forest: bootstrap-aggregated CART trees with random feature subsets."""
from __future__ import annotations

import math

import numpy as np

from .base import ProbabilisticClassifier
from .tree import Binner, TreeArrays, build_tree


def _n_features(spec, d: int) -> int:
    if spec is None:
        return d
    if spec == "sqrt":
        return max(1, int(math.sqrt(d)))
    if spec == "log2":
        return max(1, int(math.log2(d)))
    if isinstance(spec, float):
        return max(1, int(spec * d))
    return max(1, min(d, int(spec)))


class RandomForest(ProbabilisticClassifier):
    """Probability is the arithmetic mean of the trees' leaf class frequencies."""

    algorithm_id = "RandomForest"
    defaults = {"n_trees": 100, "max_features": "sqrt", "bootstrap": True,
                "max_depth": 20, "min_leaf": 1, "max_bins": 255}

    def _fit(self, X, codes, rng):
        p = self.params
        binner = Binner.fit(X, p["max_bins"])
        Xb = binner.transform(X)
        n = len(codes)
        k = _n_features(p["max_features"], X.shape[1])
        self.trees_ = []
        for child in rng.spawn(p["n_trees"]):
            if p["bootstrap"]:
                w = np.bincount(child.integers(0, n, n), minlength=n).astype(np.float64)
            else:
                w = np.ones(n)
            rows = np.flatnonzero(w > 0)
            self.trees_.append(build_tree(Xb[rows], codes[rows], w[rows], len(self.classes_), binner,
                                          max_depth=p["max_depth"], min_leaf=p["min_leaf"],
                                          max_features=k, rng=child))
        self._cache()

    def _cache(self):
        self._dists = [t.leaf_distribution() for t in self.trees_]

    def tree_proba(self, X) -> np.ndarray:
        """Per-tree leaf distributions, shape (n_trees, n_samples, n_classes)."""
        X, _ = self._check(X)
        return np.stack([d[t.apply(X)] for t, d in zip(self.trees_, self._dists)])

    def _proba(self, X):
        total = np.zeros((len(X), len(self.classes_)))
        for t, d in zip(self.trees_, self._dists):
            total += d[t.apply(X)]
        return total / len(self.trees_)

    def get_state(self):
        sizes = np.array([len(t.feature) for t in self.trees_])
        cat = lambda name: np.concatenate([getattr(t, name) for t in self.trees_])
        return {"sizes": sizes, "depths": np.array([t.depth for t in self.trees_]),
                "feature": cat("feature"), "threshold": cat("threshold"), "left": cat("left"),
                "right": cat("right"), "value": np.concatenate([t.value for t in self.trees_])}

    def set_state(self, s):
        bounds = np.concatenate([[0], np.cumsum(s["sizes"])])
        self.trees_ = []
        for i, depth in enumerate(s["depths"]):
            a, b = bounds[i], bounds[i + 1]
            self.trees_.append(TreeArrays.from_state(
                {"feature": s["feature"][a:b], "threshold": s["threshold"][a:b],
                 "left": s["left"][a:b], "right": s["right"][a:b], "value": s["value"][a:b],
                 "depth": depth}))
        self._cache()
