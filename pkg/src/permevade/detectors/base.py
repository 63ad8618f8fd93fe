"""Common detector contract: black-box probability queries plus metrics.

Every trained model exposes predict_proba(x) -> [F0, F1] with F0 + F1 = 1
(F1 = malware probability).  The attack only ever sees this surface.
"""

from dataclasses import dataclass

import numpy as np


class DetectorError(ValueError):
    pass


class Detector:
    """Base class; subclasses implement _proba_impl on 2-D input."""

    kind = "abstract"

    def __init__(self, vocab_size: int, vocab_hash: str = ""):
        self.vocab_size = int(vocab_size)
        self.vocab_hash = vocab_hash

    def _proba_impl(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, x) -> np.ndarray:
        """[F0, F1] for one vector, or an (n, 2) matrix for a batch."""
        x = np.asarray(x)
        single = x.ndim == 1
        X = np.atleast_2d(x)
        if X.shape[1] != self.vocab_size:
            raise DetectorError(
                f"vector length {X.shape[1]} != model vocab size {self.vocab_size}"
            )
        proba = self._proba_impl(X.astype(np.float64))
        return proba[0] if single else proba

    def classify(self, x) -> np.ndarray | int:
        """argmax label; exact ties (F0 == F1) break to 1 (flag as malware)."""
        proba = self.predict_proba(x)
        label = (proba[..., 1] >= proba[..., 0]).astype(np.int64)
        return int(label) if label.ndim == 0 else label


@dataclass
class EvalMetrics:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / (self.tp + self.fp + self.fn + self.tn)

    @property
    def precision(self) -> float:
        # empty-denominator convention: no positive predictions -> 1.0
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 1.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 1.0

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "accuracy": self.accuracy, "precision": self.precision, "recall": self.recall,
        }


def evaluate(model: Detector, X, y) -> EvalMetrics:
    """Confusion counts with label 1 (malware) as the positive class."""
    y = np.asarray(y)
    if y.size == 0:
        raise DetectorError("empty evaluation set")
    pred = model.classify(np.asarray(X))
    return EvalMetrics(
        tp=int(np.sum((pred == 1) & (y == 1))),
        fp=int(np.sum((pred == 1) & (y == 0))),
        fn=int(np.sum((pred == 0) & (y == 1))),
        tn=int(np.sum((pred == 0) & (y == 0))),
    )


def check_training_set(X, y):
    X = np.asarray(X)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DetectorError(f"bad dataset shapes: X {X.shape}, y {y.shape}")
    classes = np.unique(y)
    if not np.array_equal(classes, [0, 1]):
        raise DetectorError(f"training set must contain both classes, got {classes.tolist()}")
    return X, y
