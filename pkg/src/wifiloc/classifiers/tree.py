"""
CART decision trees (Gini impurity) on pre-binned features.

Split search works on class histograms (numba-compiled): each feature is discretized once into at
most ``max_bins`` ordered bins whose edges are midpoints between consecutive
distinct training values, so every candidate threshold of a classic sorted
CART search is available whenever a feature has few distinct values (RSSI
readings are integer dBm, so this is exact for them).  The same builder
serves the standalone tree, the random forest and the boosted trees.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .base import ProbabilisticClassifier


class Binner:
    """Per-feature ordered bin edges."""

    def __init__(self, edges: list[np.ndarray]):
        self.edges = edges
        self.n_bins = max((len(e) for e in edges), default=0) + 1

    @classmethod
    def fit(cls, X: np.ndarray, max_bins: int = 255) -> "Binner":
        edges = []
        for col in X.T:
            values = np.unique(col)
            if len(values) > max_bins:
                qs = np.quantile(col, np.linspace(0, 1, max_bins), method="nearest")
                values = np.unique(qs)
            edges.append((values[:-1] + values[1:]) / 2.0)
        return cls(edges)

    def padded_edges(self) -> np.ndarray:
        out = np.full((len(self.edges), max(self.n_bins - 1, 1)), np.inf)
        for j, e in enumerate(self.edges):
            out[j, :len(e)] = e
        return out

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.int64)
        for j, e in enumerate(self.edges):
            out[:, j] = np.searchsorted(e, X[:, j], side="left")
        return out


@dataclass
class TreeArrays:
    """Flat tree.  Leaves have ``feature == -1``; ``value`` holds weighted
    class counts of the training samples reaching each node."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    depth: int

    def apply(self, X: np.ndarray) -> np.ndarray:
        n = len(X)
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        for _ in range(self.depth):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def leaf_distribution(self, laplace: float = 0.0) -> np.ndarray:
        counts = self.value + laplace
        total = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            dist = np.where(total > 0, counts / np.where(total > 0, total, 1.0), 1.0 / counts.shape[1])
        return dist

    def to_state(self) -> dict[str, np.ndarray]:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value, "depth": np.array(self.depth)}

    @classmethod
    def from_state(cls, s: dict[str, np.ndarray]) -> "TreeArrays":
        return cls(s["feature"].astype(np.int64), s["threshold"].astype(np.float64),
                   s["left"].astype(np.int64), s["right"].astype(np.int64),
                   s["value"].astype(np.float64), int(s["depth"]))


@numba.njit(cache=True, nogil=True)
def _grow(Xb, y, w, n_classes, n_bins, edges, max_depth, min_leaf, max_features, seed):
    """Depth-first CART growth over binned features.

    Each node owns a contiguous slice of ``order``; split candidates are scored
    with sum_c L_c^2/|L| + sum_c R_c^2/|R| on weighted class histograms, and
    maximizing it minimizes the weighted Gini impurity of the children.
    """
    np.random.seed(seed)
    n, d = Xb.shape
    C = n_classes
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, C), np.float64)
    order = np.arange(n)
    s_node = np.empty(cap, np.int64)
    s_start = np.empty(cap, np.int64)
    s_end = np.empty(cap, np.int64)
    s_depth = np.empty(cap, np.int64)
    hist = np.zeros((n_bins, C), np.float64)
    cnt = np.zeros(n_bins, np.int64)
    feats = np.arange(d)
    lvec = np.empty(C, np.float64)
    rvec = np.empty(C, np.float64)

    for i in range(n):
        value[0, y[i]] += w[i]
    n_nodes = 1
    top = 0
    s_node[0] = 0
    s_start[0] = 0
    s_end[0] = n
    s_depth[0] = 0
    max_seen = 0
    k = d if max_features <= 0 or max_features > d else max_features

    while top >= 0:
        node = s_node[top]
        start = s_start[top]
        end = s_end[top]
        depth = s_depth[top]
        top -= 1
        if depth > max_seen:
            max_seen = depth
        m = end - start
        total_w = 0.0
        nz = 0
        parent = 0.0
        for c in range(C):
            v = value[node, c]
            total_w += v
            parent += v * v
            if v > 0:
                nz += 1
        if depth >= max_depth or m < 2 * min_leaf or nz <= 1 or n_bins < 2 or total_w <= 0:
            continue
        parent /= total_w

        if k < d:
            for j in range(k):
                r = j + np.random.randint(d - j)
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp
            chosen = np.sort(feats[:k].copy())
        else:
            chosen = feats

        best_score = parent + 1e-12
        best_f = -1
        best_b = -1
        for fi in range(k):
            f = chosen[fi]
            lo = n_bins
            hi = -1
            for i in range(start, end):
                r = order[i]
                b = Xb[r, f]
                if b < lo:
                    lo = b
                if b > hi:
                    hi = b
            if hi <= lo:
                continue
            for b in range(lo, hi + 1):
                cnt[b] = 0
                for c in range(C):
                    hist[b, c] = 0.0
            for i in range(start, end):
                r = order[i]
                b = Xb[r, f]
                hist[b, y[r]] += w[r]
                cnt[b] += 1
            for c in range(C):
                lvec[c] = 0.0
                rvec[c] = value[node, c]
            wl = 0.0
            nl = 0
            for b in range(lo, hi):
                for c in range(C):
                    h = hist[b, c]
                    lvec[c] += h
                    rvec[c] -= h
                    wl += h
                nl += cnt[b]
                if nl < min_leaf:
                    continue
                if m - nl < min_leaf:
                    break
                wr = total_w - wl
                if wl <= 0 or wr <= 0:
                    continue
                sl = 0.0
                sr = 0.0
                for c in range(C):
                    sl += lvec[c] * lvec[c]
                    rv = rvec[c] if rvec[c] > 0 else 0.0
                    sr += rv * rv
                score = sl / wl + sr / wr
                if score > best_score:
                    best_score = score
                    best_f = f
                    best_b = b

        if best_f < 0:
            continue
        # partition order[start:end] so that the left child comes first
        i = start
        j = end - 1
        while i <= j:
            if Xb[order[i], best_f] <= best_b:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
                j -= 1
        mid = i
        li = n_nodes
        ri = n_nodes + 1
        n_nodes += 2
        feature[node] = best_f
        threshold[node] = edges[best_f, best_b]
        left[node] = li
        right[node] = ri
        for t in range(start, mid):
            r = order[t]
            value[li, y[r]] += w[r]
        for t in range(mid, end):
            r = order[t]
            value[ri, y[r]] += w[r]
        top += 1
        s_node[top] = ri
        s_start[top] = mid
        s_end[top] = end
        s_depth[top] = depth + 1
        top += 1
        s_node[top] = li
        s_start[top] = start
        s_end[top] = mid
        s_depth[top] = depth + 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], max_seen + 1)


def build_tree(Xb: np.ndarray, y: np.ndarray, w: np.ndarray, n_classes: int, binner: Binner,
               max_depth: int = 20, min_leaf: int = 1, max_features: int | None = None,
               rng: np.random.Generator | None = None) -> TreeArrays:
    """Grow a CART tree.

    ``Xb`` are binned features, ``y`` integer class codes and ``w``
    non-negative sample weights.  When ``max_features`` is set, each split
    considers that many features drawn at random (seeded from ``rng``).
    """
    seed = int(rng.integers(2 ** 31 - 1)) if rng is not None else 0
    out = _grow(np.ascontiguousarray(Xb), np.ascontiguousarray(y, dtype=np.int64),
                np.ascontiguousarray(w, dtype=np.float64), int(n_classes), int(binner.n_bins),
                binner.padded_edges(), int(max_depth), int(min_leaf), int(max_features or 0), seed)
    return TreeArrays(*out[:5], depth=int(out[5]))


class DecisionTree(ProbabilisticClassifier):
    """CART tree; leaf probabilities are Laplace-smoothed class frequencies.

    With the default ``laplace=1`` a pure leaf holding ``n`` samples gives its
    class ``(n + 1) / (n + C)``; set ``laplace=0`` for raw frequencies.
    """

    algorithm_id = "DecisionTree"
    defaults = {"max_depth": 20, "min_leaf": 2, "laplace": 1.0, "max_bins": 255}

    def _fit(self, X, codes, rng):
        binner = Binner.fit(X, self.params["max_bins"])
        w = np.ones(len(codes))
        self.tree_ = build_tree(binner.transform(X), codes, w, len(self.classes_), binner,
                                max_depth=self.params["max_depth"],
                                min_leaf=self.params["min_leaf"])
        self._dist = self.tree_.leaf_distribution(self.params["laplace"])

    def _proba(self, X):
        return self._dist[self.tree_.apply(X)]

    def get_state(self):
        return self.tree_.to_state()

    def set_state(self, state):
        self.tree_ = TreeArrays.from_state(state)
        self._dist = self.tree_.leaf_distribution(self.params["laplace"])
