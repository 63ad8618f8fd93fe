"""Gini decision trees and the two ensembles built from them.

Features are binary, so every split is "bit == 0 goes left, bit == 1 goes
right" and a node only needs its feature index.  Trees are stored as flat
arrays so the traversal kernel (numba or numpy, see kernels.py) can run
over whole batches.
"""

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from .base import Detector, DetectorError, check_training_set


@dataclass
class TreeArrays:
    feature: np.ndarray  # int64, -1 for leaves
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray    # class-1 fraction at the node
    n_node: np.ndarray


def tree_value(tree: TreeArrays, X: np.ndarray) -> np.ndarray:
    """Leaf class-1 fraction for each row of X."""
    Xb = np.ascontiguousarray((X != 0).astype(np.uint8))
    return kernels.tree_apply(tree.feature, tree.left, tree.right, tree.value, Xb)


def build_tree(X, y, rows, max_depth, min_samples_split, min_samples_leaf) -> TreeArrays:
    """Grow one tree on the given row multiset (bootstrap rows may repeat)."""
    X = np.ascontiguousarray(X, dtype=np.uint8)
    y = np.ascontiguousarray(y, dtype=np.int64)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    depth_cap = max_depth if max_depth is not None else np.iinfo(np.int32).max

    feature, left, right, value, n_node = [], [], [], [], []

    def grow(node_rows, depth):
        i = len(feature)
        n = node_rows.size
        c1 = int(y[node_rows].sum())
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(c1 / n)
        n_node.append(n)
        if depth >= depth_cap or n < min_samples_split or c1 == 0 or c1 == n:
            return i
        f, _ = kernels.best_split(X, y, node_rows, min_samples_leaf)
        if f < 0:
            return i
        bit = X[node_rows, f]
        feature[i] = f
        left[i] = grow(node_rows[bit == 0], depth + 1)
        right[i] = grow(node_rows[bit == 1], depth + 1)
        return i

    grow(rows, 0)
    return TreeArrays(
        feature=np.array(feature, dtype=np.int64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=np.float64),
        n_node=np.array(n_node, dtype=np.int64),
    )


@dataclass
class TreeConfig:
    max_depth: int | None = 15
    min_samples_split: int = 2
    min_samples_leaf: int = 10
    rng_seed: int = 0  # single trees are deterministic; kept for config uniformity

    def validate(self):
        if self.min_samples_split < 2 or self.min_samples_leaf < 1:
            raise ValueError(f"bad tree config: {self}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")


class DecisionTreeDetector(Detector):
    kind = "decision_tree"

    def __init__(self, vocab_size, config: TreeConfig | None = None, vocab_hash: str = ""):
        super().__init__(vocab_size, vocab_hash)
        self.config = config or TreeConfig()
        self.config.validate()
        self.tree: TreeArrays | None = None

    def fit(self, X, y):
        cfg = self.config
        self.tree = build_tree(
            X, y, np.arange(X.shape[0]),
            cfg.max_depth, cfg.min_samples_split, cfg.min_samples_leaf,
        )
        return self

    def _proba_impl(self, X):
        f1 = tree_value(self.tree, X)
        return np.column_stack([1.0 - f1, f1])


@dataclass
class ForestConfig:
    n_trees: int = 20
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 20
    rng_seed: int = 0

    def validate(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")


class RandomForestDetector(Detector):
    """Bagged Gini trees; every split sees all features.

    Bootstrap membership is kept per tree so out-of-bag error and
    permutation importance can be computed after training.
    """

    kind = "random_forest"

    def __init__(self, vocab_size, config: ForestConfig | None = None, vocab_hash: str = ""):
        super().__init__(vocab_size, vocab_hash)
        self.config = config or ForestConfig()
        self.config.validate()
        self.trees: list[TreeArrays] = []
        self.bootstrap_indices: list[np.ndarray] | None = None
        self.n_train = 0

    def fit(self, X, y):
        cfg = self.config
        rng = np.random.default_rng(cfg.rng_seed)
        n = X.shape[0]
        self.n_train = n
        self.trees = []
        self.bootstrap_indices = []
        for _ in range(cfg.n_trees):
            boot = rng.integers(0, n, size=n)
            self.bootstrap_indices.append(boot)
            self.trees.append(build_tree(
                X, y, boot, cfg.max_depth, cfg.min_samples_split, cfg.min_samples_leaf,
            ))
        return self

    def _proba_impl(self, X):
        f1 = np.mean([tree_value(t, X) for t in self.trees], axis=0)
        return np.column_stack([1.0 - f1, f1])


@dataclass
class ExtraTreesConfig:
    n_trees: int = 10
    max_depth: int | None = 50
    min_samples_split: int = 2
    min_samples_leaf: int = 20
    rng_seed: int = 0

    def validate(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")


class ExtraTreesDetector(Detector):
    """Extremely randomized trees, grown on the full training set.

    With binary features the usual random threshold draw always lands in
    (0, 1) and collapses to the same partition, so the member trees are
    deterministic; the ensemble is kept for its averaged leaf fractions.
    No bootstrap is taken, so OOB-based importance is unavailable here.
    """

    kind = "extra_trees"

    def __init__(self, vocab_size, config: ExtraTreesConfig | None = None, vocab_hash: str = ""):
        super().__init__(vocab_size, vocab_hash)
        self.config = config or ExtraTreesConfig()
        self.config.validate()
        self.trees: list[TreeArrays] = []
        self.bootstrap_indices = None

    def fit(self, X, y):
        cfg = self.config
        rows = np.arange(X.shape[0])
        self.trees = [
            build_tree(X, y, rows, cfg.max_depth, cfg.min_samples_split, cfg.min_samples_leaf)
            for _ in range(cfg.n_trees)
        ]
        return self

    def _proba_impl(self, X):
        f1 = np.mean([tree_value(t, X) for t in self.trees], axis=0)
        return np.column_stack([1.0 - f1, f1])


def train_tree_family(kind, X, y, config=None, vocab_hash: str = ""):
    X, y = check_training_set(X, y)
    cls, default_cfg = {
        "decision_tree": (DecisionTreeDetector, TreeConfig),
        "random_forest": (RandomForestDetector, ForestConfig),
        "extra_trees": (ExtraTreesDetector, ExtraTreesConfig),
    }[kind]
    model = cls(X.shape[1], config or default_cfg(), vocab_hash)
    model.fit(X, y)
    return model
