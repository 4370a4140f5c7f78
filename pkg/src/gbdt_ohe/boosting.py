"""Squared-loss gradient boosting: F_M(x) = gamma0 + lr * sum_m f_m(x)."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .data import Dataset
from .tree import StackedTrees, Tree, TreeParams, fit_tree, presort

MODEL_VERSION = "gbdt-v1"


@dataclass(frozen=True)
class GbdtParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    base_score: float | None = None  # None -> training mean
    tree: TreeParams = field(default_factory=TreeParams)

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if not 0 < self.learning_rate <= 1:
            raise ValueError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtParams":
        d = dict(d)
        tree = TreeParams(**d.pop("tree", {}))
        return cls(tree=tree, **d)


@dataclass(frozen=True, eq=False)
class GbdtModel:
    gamma0: float
    learning_rate: float
    trees: tuple[Tree, ...]
    params: GbdtParams | None = None

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @cached_property
    def stacked(self) -> StackedTrees:
        return StackedTrees.from_trees(self.trees)

    def apply(self, X) -> np.ndarray:
        """Leaf id per (row, tree)."""
        return self.stacked.apply(X)

    def tree_outputs(self, X) -> np.ndarray:
        return self.stacked.outputs(X)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        out = self.gamma0 + self.learning_rate * self.tree_outputs(X).sum(axis=1)
        return out[0] if single else out

    def staged_predict(self, X) -> np.ndarray:
        """Predictions using the first m trees, m = 0..M; shape (n, M+1) (or (M+1,) for one row)."""
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        out = self.tree_outputs(X)
        staged = np.empty((out.shape[0], self.n_trees + 1))
        staged[:, 0] = self.gamma0
        staged[:, 1:] = self.gamma0 + self.learning_rate * np.cumsum(out, axis=1)
        return staged[0] if single else staged

    def truncate(self, m: int) -> "GbdtModel":
        return GbdtModel(self.gamma0, self.learning_rate, self.trees[:m], self.params)

    def to_dict(self) -> dict:
        return {
            "version": MODEL_VERSION,
            "gamma0": float(self.gamma0),
            "learning_rate": float(self.learning_rate),
            "trees": [t.to_dict() for t in self.trees],
            "params": None if self.params is None else self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        params = None if d.get("params") is None else GbdtParams.from_dict(d["params"])
        return cls(float(d["gamma0"]), float(d["learning_rate"]),
                   tuple(Tree.from_dict(t) for t in d["trees"]), params)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GbdtModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_gbdt(train: Dataset, params: GbdtParams, record_loss: list | None = None) -> GbdtModel:
    """Fit trees one at a time to the current residuals (gradient -r, unit hessian).

    If ``record_loss`` is a list, the training MSE after each stage (0..M) is appended to it.
    """
    if train.n < 2:
        raise ValueError("fit_gbdt needs at least 2 rows")
    X, y = train.features, train.response
    gamma0 = float(y.mean()) if params.base_score is None else float(params.base_score)
    order = presort(X)
    hess = np.ones(train.n)
    pred = np.full(train.n, gamma0)
    if record_loss is not None:
        record_loss.append(float(np.mean((y - pred) ** 2)))
    trees = []
    for _ in range(params.n_estimators):
        tree = fit_tree(X, pred - y, hess, params.tree, order=order)
        trees.append(tree)
        pred = pred + params.learning_rate * tree.predict(X)
        if record_loss is not None:
            record_loss.append(float(np.mean((y - pred) ** 2)))
    return GbdtModel(gamma0, params.learning_rate, tuple(trees), params)


def predict(model: GbdtModel, x) -> float | np.ndarray:
    return model.predict(x)


def staged_predict(model: GbdtModel, x) -> np.ndarray:
    return model.staged_predict(x)
