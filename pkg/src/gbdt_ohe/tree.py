"""Regression trees grown by exact greedy search on gradient/hessian statistics.

Routing convention: a row goes left iff ``x[feature] < threshold`` (ties go right).
Candidate thresholds are midpoints between consecutive distinct sorted values
within a node. Nodes are stored in breadth-first order; leaves are numbered
0..J-1 in that same order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

# relative floor below which a gain is treated as rounding noise
_GAIN_RTOL = 1e-12


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_samples_leaf: int = 1
    gamma: float = 0.0
    reg_lambda: float = 0.0
    reg_alpha: float = 0.0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        for name in ("gamma", "reg_lambda", "reg_alpha"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf weight; 0 for internal nodes
    leaf_id: np.ndarray  # -1 for internal nodes

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    @property
    def leaf_nodes(self) -> np.ndarray:
        """Node index of every leaf, ordered by leaf id."""
        nodes = np.flatnonzero(self.feature < 0)
        return nodes[np.argsort(self.leaf_id[nodes])]

    @property
    def leaf_values(self) -> np.ndarray:
        return self.value[self.leaf_nodes]

    def apply(self, X) -> np.ndarray:
        X = _as_matrix(X)
        return self.leaf_id[_route(self.feature, self.threshold, self.left, self.right, X)]

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        return self.value[_route(self.feature, self.threshold, self.left, self.right, X)]

    def leaf_boxes(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-leaf half-open box [lo, hi) implied by the path constraints, shape (J, q)."""
        lo = np.full((self.n_nodes, q), -np.inf)
        hi = np.full((self.n_nodes, q), np.inf)
        for node in range(self.n_nodes):
            f = self.feature[node]
            if f < 0:
                continue
            t = self.threshold[node]
            for child in (self.left[node], self.right[node]):
                lo[child] = lo[node]
                hi[child] = hi[node]
            hi[self.left[node], f] = min(hi[node, f], t)
            lo[self.right[node], f] = max(lo[node, f], t)
        nodes = self.leaf_nodes
        return lo[nodes], hi[nodes]

    def to_dict(self) -> dict:
        def node(k):
            if self.feature[k] < 0:
                return {"value": float(self.value[k]), "leaf_id": int(self.leaf_id[k])}
            return {
                "feature": int(self.feature[k]),
                "threshold": float(self.threshold[k]),
                "left": node(self.left[k]),
                "right": node(self.right[k]),
            }
        return node(0)

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        feature, threshold, left, right, value, leaf_id = [], [], [], [], [], []
        queue = [d]
        while queue:
            nd = queue.pop(0)
            if "value" in nd:
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(float(nd["value"]))
                leaf_id.append(int(nd["leaf_id"]))
            else:
                base = len(feature) + len(queue)
                feature.append(int(nd["feature"]))
                threshold.append(float(nd["threshold"]))
                left.append(base + 1)
                right.append(base + 2)
                value.append(0.0)
                leaf_id.append(-1)
                queue.extend([nd["left"], nd["right"]])
        return cls(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                   np.array(right, dtype=np.int64), np.array(value), np.array(leaf_id, dtype=np.int64))


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return X[None, :] if X.ndim == 1 else X


@njit(cache=True)
def _route(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        k = 0
        while feature[k] >= 0:
            k = left[k] if X[i, feature[k]] < threshold[k] else right[k]
        out[i] = k
    return out


def soft_threshold(g: float | np.ndarray, alpha: float):
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def leaf_weight(G: float, H: float, params: TreeParams) -> float:
    return float(-soft_threshold(G, params.reg_alpha) / (H + params.reg_lambda))


@njit(cache=True)
def _score(G, H, lam, alpha):
    a = abs(G) - alpha
    if a <= 0.0:
        return 0.0
    return a * a / (H + lam)


@njit(cache=True)
def _best_splits(X, order, slot, g, h, G, H, C, lam, alpha, gamma, min_leaf, rtol):
    n_slots = G.shape[0]
    n, q = X.shape
    best_gain = np.zeros(n_slots)
    best_feat = np.full(n_slots, -1, dtype=np.int64)
    best_thr = np.zeros(n_slots)
    parent = np.empty(n_slots)
    for s in range(n_slots):
        parent[s] = _score(G[s], H[s], lam, alpha)
    GL = np.empty(n_slots)
    HL = np.empty(n_slots)
    CL = np.empty(n_slots, dtype=np.int64)
    last = np.empty(n_slots)
    for f in range(q):
        GL[:] = 0.0
        HL[:] = 0.0
        CL[:] = 0
        for k in range(n):
            i = order[f, k]
            s = slot[i]
            if s < 0:
                continue
            x = X[i, f]
            cl = CL[s]
            if cl > 0 and x > last[s]:
                cr = C[s] - cl
                if cl >= min_leaf and cr >= min_leaf:
                    sl = _score(GL[s], HL[s], lam, alpha)
                    sr = _score(G[s] - GL[s], H[s] - HL[s], lam, alpha)
                    raw = sl + sr - parent[s]
                    gain = 0.5 * raw - gamma
                    if gain > best_gain[s] and raw > rtol * (sl + sr + parent[s]):
                        best_gain[s] = gain
                        best_feat[s] = f
                        thr = 0.5 * (last[s] + x)
                        if thr <= last[s]:
                            thr = x
                        best_thr[s] = thr
            GL[s] += g[i]
            HL[s] += h[i]
            CL[s] = cl + 1
            last[s] = x
    return best_gain, best_feat, best_thr


def presort(X: np.ndarray) -> np.ndarray:
    """Row order of each column, shape (q, n); reusable across trees on the same rows."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


def fit_tree(features, gradients, hessians, params: TreeParams, order: np.ndarray | None = None) -> Tree:
    X = np.ascontiguousarray(features, dtype=np.float64)
    g = np.ascontiguousarray(gradients, dtype=np.float64).reshape(-1)
    h = np.ascontiguousarray(hessians, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_tree needs a non-empty 2-D feature matrix")
    n = X.shape[0]
    if g.shape[0] != n or h.shape[0] != n:
        raise ValueError("gradients and hessians must have one entry per row")
    if not (h > 0).all():
        raise ValueError("hessians must be strictly positive")
    if order is None:
        order = presort(X)

    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    slot = np.zeros(n, dtype=np.int64)
    level = [0]  # node index of each slot at the current depth
    depth = 0
    while level:
        k = len(level)
        G = np.bincount(slot[slot >= 0], weights=g[slot >= 0], minlength=k)
        H = np.bincount(slot[slot >= 0], weights=h[slot >= 0], minlength=k)
        C = np.bincount(slot[slot >= 0], minlength=k).astype(np.int64)
        if depth < params.max_depth:
            _, bf, bt = _best_splits(X, order, slot, g, h, G, H, C, params.reg_lambda, params.reg_alpha,
                                     params.gamma, params.min_samples_leaf, _GAIN_RTOL)
        else:
            bf = np.full(k, -1)
            bt = np.zeros(k)
        new_slot = np.full(k, -1, dtype=np.int64)
        next_level = []
        for s, node in enumerate(level):
            if bf[s] < 0:
                value[node] = leaf_weight(G[s], H[s], params)
                continue
            feature[node] = int(bf[s])
            threshold[node] = float(bt[s])
            for side in (left, right):
                side[node] = len(feature)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
                next_level.append(side[node])
            new_slot[s] = len(next_level) - 2
        active = slot >= 0
        rows = np.flatnonzero(active)
        s_old = slot[rows]
        base = new_slot[s_old]
        go_right = X[rows, bf[s_old].clip(0)] >= bt[s_old]
        slot = np.full(n, -1, dtype=np.int64)
        slot[rows] = np.where(base < 0, -1, base + go_right)
        level = next_level
        depth += 1

    feature = np.array(feature, dtype=np.int64)
    leaf_id = np.full(feature.shape[0], -1, dtype=np.int64)
    leaves = np.flatnonzero(feature < 0)
    leaf_id[leaves] = np.arange(leaves.shape[0])
    return Tree(feature, np.array(threshold), np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                np.array(value), leaf_id)


def predict_tree(tree: Tree, x) -> float:
    return float(tree.predict(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


def assign_leaf(tree: Tree, x) -> int:
    return int(tree.apply(np.asarray(x, dtype=np.float64).reshape(1, -1))[0])


@dataclass(frozen=True, eq=False)
class StackedTrees:
    """Padded node arrays of several trees, for batch routing."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    leaf_id: np.ndarray

    @classmethod
    def from_trees(cls, trees) -> "StackedTrees":
        M = len(trees)
        width = max((t.n_nodes for t in trees), default=1)
        feature = np.full((M, width), -1, dtype=np.int64)
        threshold = np.zeros((M, width))
        left = np.full((M, width), -1, dtype=np.int64)
        right = np.full((M, width), -1, dtype=np.int64)
        value = np.zeros((M, width))
        leaf_id = np.full((M, width), -1, dtype=np.int64)
        for m, t in enumerate(trees):
            k = t.n_nodes
            feature[m, :k] = t.feature
            threshold[m, :k] = t.threshold
            left[m, :k] = t.left
            right[m, :k] = t.right
            value[m, :k] = t.value
            leaf_id[m, :k] = t.leaf_id
        return cls(feature, threshold, left, right, value, leaf_id)

    def apply(self, X) -> np.ndarray:
        """Leaf id reached in every tree, shape (n, M)."""
        return _apply_stacked(self.feature, self.threshold, self.left, self.right, self.leaf_id, _as_matrix(X))

    def outputs(self, X) -> np.ndarray:
        """Raw output of every tree (before shrinkage), shape (n, M)."""
        return _values_stacked(self.feature, self.threshold, self.left, self.right, self.value, _as_matrix(X))


@njit(cache=True)
def _apply_stacked(feature, threshold, left, right, leaf_id, X):
    n = X.shape[0]
    M = feature.shape[0]
    out = np.empty((n, M), dtype=np.int64)
    for i in range(n):
        for m in range(M):
            k = 0
            while feature[m, k] >= 0:
                k = left[m, k] if X[i, feature[m, k]] < threshold[m, k] else right[m, k]
            out[i, m] = leaf_id[m, k]
    return out


@njit(cache=True)
def _values_stacked(feature, threshold, left, right, value, X):
    n = X.shape[0]
    M = feature.shape[0]
    out = np.empty((n, M))
    for i in range(n):
        for m in range(M):
            k = 0
            while feature[m, k] >= 0:
                k = left[m, k] if X[i, feature[m, k]] < threshold[m, k] else right[m, k]
            out[i, m] = value[m, k]
    return out
