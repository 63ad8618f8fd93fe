"""Seeded synthetic corpus: a desk-scale stand-in for a real app corpus.

Each feature is an independent Bernoulli bit whose rate depends on its
role.  All of the signal is benign-indicative, mirroring the setting the
attack needs: an evader succeeds by *adding* features that detectors
associate with benign apps.  Two planted roles with different textures:

* counting features fire often in benign apps and at a noticeably lower
  rate in malware, so the classes separate on how many of them are set
  (soft, aggregate evidence every detector family can use);
* marker features fire in most benign apps and almost never in malware,
  giving tree models the near-pure single-feature splits they need.

Everything else is background noise firing at one low rate in both classes.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .featurespace import Category, Vocabulary, write_corpus


class SynthSpecError(ValueError):
    pass


def _default_category_sizes():
    return {Category.S1: 72, Category.S2: 3812}


def _default_counting():
    return {Category.S1: 4, Category.S2: 10}


def _default_markers():
    return {Category.S1: 2, Category.S2: 10}


@dataclass
class SynthSpec:
    n_benign: int = 700
    n_malware: int = 700
    category_sizes: dict = field(default_factory=_default_category_sizes)
    counting_features: dict = field(default_factory=_default_counting)   # per category
    marker_features: dict = field(default_factory=_default_markers)      # per category
    counting_benign_rate: float = 0.6
    counting_malware_rate: float = 0.35
    marker_benign_rate: float = 0.65
    marker_malware_rate: float = 0.005
    background_rate: float = 0.05
    rng_seed: int = 0

    def validate(self):
        if self.n_benign < 0 or self.n_malware < 0:
            raise SynthSpecError("sample counts must be nonnegative")
        rates = (self.counting_benign_rate, self.counting_malware_rate,
                 self.marker_benign_rate, self.marker_malware_rate,
                 self.background_rate)
        if not all(0.0 <= r <= 1.0 for r in rates):
            raise SynthSpecError("rates must be in [0, 1]")
        if self.counting_benign_rate <= self.counting_malware_rate:
            raise SynthSpecError("counting-feature rate gap must be positive")
        if self.marker_benign_rate <= self.marker_malware_rate:
            raise SynthSpecError("marker-feature rate gap must be positive")
        total_planted = 0
        for cat, size in self.category_sizes.items():
            planted = self.counting_features.get(cat, 0) + self.marker_features.get(cat, 0)
            total_planted += planted
            if size < planted:
                raise SynthSpecError(f"category {cat.value} too small for the planted features")
        if total_planted == 0:
            raise SynthSpecError("no planted features: corpus would be unlearnable")


@dataclass
class SynthCorpus:
    X: np.ndarray
    y: np.ndarray
    app_ids: list
    vocab: Vocabulary
    counting_idx: np.ndarray
    marker_idx: np.ndarray
    background_idx: np.ndarray

    @property
    def planted_idx(self) -> np.ndarray:
        return np.sort(np.concatenate([self.counting_idx, self.marker_idx]))


def generate(spec: SynthSpec) -> SynthCorpus:
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)

    pairs = []
    roles = {}  # (Category, name) -> role
    for cat in sorted(spec.category_sizes, key=lambda c: c.value):
        size = spec.category_sizes[cat]
        n_count = spec.counting_features.get(cat, 0)
        n_mark = spec.marker_features.get(cat, 0)
        for i in range(n_count):
            name = f"sig_count_{i:04d}"
            pairs.append((cat, name))
            roles[(cat, name)] = "count"
        for i in range(n_mark):
            name = f"sig_mark_{i:04d}"
            pairs.append((cat, name))
            roles[(cat, name)] = "mark"
        for i in range(size - n_count - n_mark):
            name = f"bg_{i:05d}"
            pairs.append((cat, name))
            roles[(cat, name)] = "bg"
    vocab = Vocabulary.from_entries(pairs)

    d = len(vocab)
    rate_benign = np.empty(d)
    rate_malware = np.empty(d)
    role_arr = np.array([roles[pair] for pair in vocab.entries])
    rate_benign[role_arr == "count"] = spec.counting_benign_rate
    rate_malware[role_arr == "count"] = spec.counting_malware_rate
    rate_benign[role_arr == "mark"] = spec.marker_benign_rate
    rate_malware[role_arr == "mark"] = spec.marker_malware_rate
    rate_benign[role_arr == "bg"] = spec.background_rate
    rate_malware[role_arr == "bg"] = spec.background_rate

    n = spec.n_benign + spec.n_malware
    y = np.concatenate([
        np.zeros(spec.n_benign, dtype=np.int64),
        np.ones(spec.n_malware, dtype=np.int64),
    ])
    rates = np.where(y[:, None] == 1, rate_malware[None, :], rate_benign[None, :])
    X = (rng.random((n, d)) < rates).astype(np.uint8)
    app_ids = [f"ben_{i:05d}" for i in range(spec.n_benign)] + \
              [f"mal_{i:05d}" for i in range(spec.n_malware)]
    return SynthCorpus(
        X=X, y=y, app_ids=app_ids, vocab=vocab,
        counting_idx=np.flatnonzero(role_arr == "count"),
        marker_idx=np.flatnonzero(role_arr == "mark"),
        background_idx=np.flatnonzero(role_arr == "bg"),
    )


def emit(corpus: SynthCorpus, out_dir: str) -> str:
    """Write the corpus as feature files + manifest.csv + vocabulary.csv."""
    apps = []
    entries = corpus.vocab.entries
    for app_id, bits, label in zip(corpus.app_ids, corpus.X, corpus.y):
        features = {entries[j] for j in np.flatnonzero(bits)}
        apps.append((app_id, features, int(label)))
    manifest = write_corpus(out_dir, apps)
    with open(os.path.join(out_dir, "vocabulary.csv"), "w") as fh:
        fh.write(corpus.vocab.to_csv())
    return manifest


def stratified_split(y, train_fraction: float, rng_seed: int):
    """Deterministic per-class shuffle split; returns (train_idx, test_idx)."""
    rng = np.random.default_rng(rng_seed)
    train, test = [], []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        cut = int(round(train_fraction * idx.size))
        train.append(idx[:cut])
        test.append(idx[cut:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))
