"""Five detector families behind one probability-query interface."""

from .base import Detector, DetectorError, EvalMetrics, check_training_set, evaluate
from .io import from_blob, load, save, to_blob
from .linear import LogRegConfig, LogRegDetector, train_logreg
from .mlp import MLPConfig, MLPDetector, train_mlp
from .trees import (
    DecisionTreeDetector, ExtraTreesConfig, ExtraTreesDetector, ForestConfig,
    RandomForestDetector, TreeConfig, train_tree_family,
)

KINDS = ("mlp", "logreg", "decision_tree", "random_forest", "extra_trees")

# Short names used in report tables.
SHORT_NAMES = {
    "mlp": "NN",
    "logreg": "LR",
    "decision_tree": "DT",
    "random_forest": "RF",
    "extra_trees": "ET",
}

CONFIG_TYPES = {
    "mlp": MLPConfig,
    "logreg": LogRegConfig,
    "decision_tree": TreeConfig,
    "random_forest": ForestConfig,
    "extra_trees": ExtraTreesConfig,
}


def default_config(kind: str, rng_seed: int = 0):
    try:
        cfg = CONFIG_TYPES[kind]()
    except KeyError:
        raise DetectorError(f"unknown detector kind {kind!r}") from None
    cfg.rng_seed = rng_seed
    return cfg


def train(kind: str, X, y, config=None, vocab_hash: str = "") -> Detector:
    """Train one detector family; dataset must contain both classes."""
    if kind == "mlp":
        return train_mlp(X, y, config, vocab_hash)
    if kind == "logreg":
        return train_logreg(X, y, config, vocab_hash)
    if kind in ("decision_tree", "random_forest", "extra_trees"):
        return train_tree_family(kind, X, y, config, vocab_hash)
    raise DetectorError(f"unknown detector kind {kind!r}")
