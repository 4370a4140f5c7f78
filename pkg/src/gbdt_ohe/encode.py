"""Leaf one-hot encoding of a boosted ensemble into a sparse linear design.

Column 0 is the constant. Every other column stands for one or more leaves.
Leaves are merged into one column when they have the same indicator pattern
on the encoding (training) rows and, in addition, either describe the same
region of feature space or carry the same leaf value. Either extra condition
keeps ``design(X) @ beta_orig == model.predict(X)`` exact on unseen rows. A
merged column counts how many of its leaves fire, so its entries are
non-negative integers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .boosting import GbdtModel
from .data import Dataset
from .tree import StackedTrees, Tree


@dataclass(frozen=True, eq=False)
class LeafEncoder:
    trees: tuple[Tree, ...]
    # column_of[m][leaf_id] -> design column (>= 1)
    column_of: tuple[np.ndarray, ...]
    p: int
    # leaves sharing a training pattern that could not be merged without breaking equivalence
    residual_duplicates: int = 0

    @property
    def n_columns(self) -> int:
        return self.p + 1

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @cached_property
    def stacked(self) -> StackedTrees:
        return StackedTrees.from_trees(self.trees)

    def leaf_matrix(self, X) -> np.ndarray:
        if not self.trees:
            return np.empty((np.asarray(X).shape[0], 0), dtype=np.int64)
        return self.stacked.apply(X)

    def members(self) -> list[list[tuple[int, int]]]:
        """(tree, leaf_id) pairs of each column 1..p."""
        out = [[] for _ in range(self.p + 1)]
        for m, cols in enumerate(self.column_of):
            for leaf, k in enumerate(cols):
                out[k].append((m, leaf))
        return out

    def encode(self, X) -> sp.csc_matrix:
        return encode_rows(self, X)

    def to_json(self) -> str:
        entries = [{"tree": m, "leaf_id": leaf, "column": int(k)}
                   for m, cols in enumerate(self.column_of) for leaf, k in enumerate(cols)]
        return json.dumps({"p": self.p, "columns": entries}, indent=1)

    @classmethod
    def constant_only(cls) -> "LeafEncoder":
        return cls((), (), 0)


def build_encoder(model: GbdtModel | tuple, train: Dataset | np.ndarray) -> LeafEncoder:
    trees = tuple(model.trees if isinstance(model, GbdtModel) else model)
    X = train.features if isinstance(train, Dataset) else np.asarray(train, dtype=np.float64)
    if not trees:
        return LeafEncoder.constant_only()
    n, q = X.shape
    for t in trees:
        if t.n_nodes > 1 and int(t.feature.max()) >= q:
            raise ValueError("model uses a feature index beyond the dataset's columns")
    leaves = StackedTrees.from_trees(trees).apply(X)

    # group leaves by the set of training rows they contain
    groups: dict[bytes, list[tuple[int, int]]] = {}
    for m, t in enumerate(trees):
        col = leaves[:, m]
        order = np.argsort(col, kind="stable")
        counts = np.bincount(col, minlength=t.n_leaves)
        starts = np.concatenate([[0], np.cumsum(counts)])
        for leaf in range(t.n_leaves):
            rows = order[starts[leaf]:starts[leaf + 1]]
            groups.setdefault(rows.tobytes(), []).append((m, leaf))

    boxes = {}
    values = [t.leaf_values for t in trees]
    column_of = [np.zeros(t.n_leaves, dtype=np.int64) for t in trees]
    p = 0
    residual = 0
    # columns are numbered by the first (tree-order) leaf they contain
    reps = []
    for members in groups.values():
        if len(members) == 1:
            reps.append(members)
            continue
        # split the pattern group into equivalence-preserving clusters
        clusters: list[list[tuple[int, int]]] = []
        by_box: dict[bytes, list] = {}
        for m, leaf in members:
            if m not in boxes:
                lo, hi = trees[m].leaf_boxes(q)
                boxes[m] = np.concatenate([lo, hi], axis=1)
            by_box.setdefault(boxes[m][leaf].tobytes(), []).append((m, leaf))
        by_value: dict[float, list] = {}
        for cl in by_box.values():
            vals = {float(values[m][leaf]) for m, leaf in cl}
            if len(vals) == 1:
                by_value.setdefault(vals.pop(), []).extend(cl)
            else:
                clusters.append(cl)
        clusters.extend(by_value.values())
        residual += len(clusters) - 1
        reps.extend(clusters)
    reps.sort(key=lambda cl: min(cl))
    for cl in reps:
        p += 1
        for m, leaf in cl:
            column_of[m][leaf] = p
    return LeafEncoder(trees, tuple(column_of), p, residual)


def encode_rows(encoder: LeafEncoder, X) -> sp.csc_matrix:
    X = X.features if isinstance(X, Dataset) else np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    M = encoder.n_trees
    rows = np.repeat(np.arange(n), M + 1)
    cols = np.zeros((n, M + 1), dtype=np.int64)
    if M:
        leaves = encoder.leaf_matrix(X)
        for m in range(M):
            cols[:, m + 1] = encoder.column_of[m][leaves[:, m]]
    data = np.ones(rows.shape[0])
    # duplicate (row, col) entries are summed: merged columns carry multiplicity
    mat = sp.csc_matrix((data, (rows, cols.ravel())), shape=(n, encoder.n_columns))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def original_coefficients(model: GbdtModel, encoder: LeafEncoder) -> np.ndarray:
    """beta with b0 = gamma0 and b_k = lr * (value of the leaves in column k).

    For a column merged on a shared region the values may differ; it fires with
    multiplicity K, so the coefficient is lr times the mean member value.
    """
    if len(model.trees) != encoder.n_trees or any(
            t.n_leaves != cols.shape[0] for t, cols in zip(model.trees, encoder.column_of)):
        raise ValueError("encoder was not built from this model")
    beta = np.zeros(encoder.n_columns)
    count = np.zeros(encoder.n_columns)
    beta[0] = model.gamma0
    for m, t in enumerate(model.trees):
        np.add.at(beta, encoder.column_of[m], model.learning_rate * t.leaf_values)
        np.add.at(count, encoder.column_of[m], 1.0)
    beta[1:] /= np.maximum(count[1:], 1.0)
    return beta


def write_matrix_market(design: sp.spmatrix, path) -> None:
    scipy.io.mmwrite(str(path), sp.coo_matrix(design), field="integer" if _is_integral(design) else "real")


def read_matrix_market(path) -> sp.csc_matrix:
    return sp.csc_matrix(scipy.io.mmread(str(path))).astype(np.float64)


def _is_integral(design: sp.spmatrix) -> bool:
    d = sp.coo_matrix(design).data
    return bool(np.all(d == np.round(d)))


def save_encoder(encoder: LeafEncoder, path) -> None:
    Path(path).write_text(encoder.to_json())
