"""Out-of-bag permutation importance for the bagged-forest detector.

Per tree: take its out-of-bag rows, measure the error, shuffle the target
column(s) across those rows (one seeded shuffle per tree, applied to all
columns of the target jointly), measure again.  Importance is the mean OOB
error increase over trees; positive means the forest actually leans on the
feature, noise features land near zero (and exactly zero if the forest
never splits on them).
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .detectors.trees import RandomForestDetector, tree_value
from .featurespace import Category, Vocabulary


class ImportanceError(ValueError):
    pass


@dataclass
class OobResult:
    error: float
    skipped: int  # samples that landed in every tree's bootstrap


@dataclass
class ImportanceReport:
    per_category: dict = field(default_factory=dict)   # Category -> importance
    per_feature: dict | None = None                    # index -> importance
    oob_error_base: float = 0.0
    oob_skipped: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category", "importance"])
        for cat in sorted(self.per_category, key=lambda c: c.value):
            writer.writerow([cat.value, repr(self.per_category[cat])])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "oob_error_base": self.oob_error_base,
            "oob_skipped": self.oob_skipped,
            "per_category": {c.value: v for c, v in sorted(
                self.per_category.items(), key=lambda kv: kv[0].value)},
        }
        if self.per_feature is not None:
            payload["per_feature"] = {str(k): v for k, v in sorted(self.per_feature.items())}
        return json.dumps(payload, sort_keys=True, indent=2)


def _in_bag_matrix(forest: RandomForestDetector, n: int) -> np.ndarray:
    if forest.bootstrap_indices is None:
        raise ImportanceError("forest was trained without bootstrap records")
    in_bag = np.zeros((len(forest.trees), n), dtype=bool)
    for t, boot in enumerate(forest.bootstrap_indices):
        in_bag[t, boot] = True
    return in_bag


def _vote_labels(f1: np.ndarray) -> np.ndarray:
    # same tie-break as Detector.classify: F1 == F0 flags malware
    return (f1 >= 0.5).astype(np.int64)


def oob_error(forest: RandomForestDetector, X, y) -> OobResult:
    """Forest-level OOB error: each sample voted on only by trees that
    never saw it; samples in every bootstrap are skipped and counted."""
    X = np.asarray(X)
    y = np.asarray(y)
    n = X.shape[0]
    in_bag = _in_bag_matrix(forest, n)
    f1_sum = np.zeros(n)
    votes = np.zeros(n)
    for t, tree in enumerate(forest.trees):
        oob = np.flatnonzero(~in_bag[t])
        if oob.size == 0:
            continue
        f1_sum[oob] += tree_value(tree, X[oob])
        votes[oob] += 1
    covered = votes > 0
    skipped = int(n - covered.sum())
    if not covered.any():
        raise ImportanceError("no out-of-bag samples at all")
    labels = _vote_labels(f1_sum[covered] / votes[covered])
    return OobResult(error=float(np.mean(labels != y[covered])), skipped=skipped)


def permutation_importance(forest: RandomForestDetector, X, y, columns, rng_seed: int = 0) -> float:
    """Mean per-tree OOB error increase after shuffling ``columns``.

    ``columns`` may be a single index or an array of indices; all listed
    columns are permuted with the same row shuffle.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    columns = np.atleast_1d(np.asarray(columns, dtype=np.int64))
    if columns.size == 0:
        raise ImportanceError("empty permutation target")
    in_bag = _in_bag_matrix(forest, X.shape[0])
    deltas = []
    for t, tree in enumerate(forest.trees):
        oob = np.flatnonzero(~in_bag[t])
        if oob.size == 0:
            deltas.append(0.0)
            continue
        Xo = X[oob]
        yo = y[oob]
        error1 = float(np.mean(_vote_labels(tree_value(tree, Xo)) != yo))
        perm = np.random.default_rng([rng_seed, t]).permutation(oob.size)
        Xp = Xo.copy()
        Xp[:, columns] = Xo[perm][:, columns]
        error2 = float(np.mean(_vote_labels(tree_value(tree, Xp)) != yo))
        deltas.append(error2 - error1)
    return float(np.sum(deltas) / len(forest.trees))


def category_report(forest, X, y, vocab: Vocabulary, rng_seed: int = 0,
                    per_feature: bool = False) -> ImportanceReport:
    """Importance of every category present in the vocabulary."""
    base = oob_error(forest, X, y)
    report = ImportanceReport(oob_error_base=base.error, oob_skipped=base.skipped)
    for cat in Category:
        cols = vocab.category_indices(cat)
        if cols.size:
            report.per_category[cat] = permutation_importance(forest, X, y, cols, rng_seed)
    if per_feature:
        report.per_feature = {
            int(j): permutation_importance(forest, X, y, j, rng_seed)
            for j in range(len(vocab))
        }
    return report


def select_perturbable_categories(report: ImportanceReport, allowed) -> list[Category]:
    """Manifest-derived categories from ``allowed``, most important first.

    Ties keep S1..S4 order, so the result is stable.
    """
    candidates = [c for c in Category if c.manifest_derived and c in allowed
                  and c in report.per_category]
    return sorted(candidates, key=lambda c: (-report.per_category[c], c.value))


def perturbable_mask(vocab: Vocabulary, categories) -> np.ndarray:
    """Boolean mask over the vocabulary covering the given categories."""
    mask = np.zeros(len(vocab), dtype=bool)
    for cat in categories:
        start, stop = vocab.category_range.get(cat, (0, 0))
        mask[start:stop] = True
    return mask
