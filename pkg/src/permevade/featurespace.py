"""Feature files, vocabularies and binary feature vectors.

An app is a set of (category, name) features parsed from a plain-text
feature file (one ``prefix::name`` per line).  A Vocabulary assigns every
feature of the selected categories a fixed index; apps then become dense
0/1 vectors of that width.  Perturbations are add-only bit masks over a
configurable index range.
"""

import csv
import enum
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

MANIFEST_CATEGORIES = ("S1", "S2", "S3", "S4")


class Category(enum.Enum):
    """The eight feature classes of permission-style Android feature sets.

    S1-S4 come from the app manifest (and are therefore the only ones an
    attacker can touch by editing the manifest); S5-S8 come from the
    disassembled code.
    """

    S1 = "S1"  # hardware components
    S2 = "S2"  # requested permissions
    S3 = "S3"  # app components
    S4 = "S4"  # filtered intents
    S5 = "S5"  # restricted API calls
    S6 = "S6"  # used permissions
    S7 = "S7"  # suspicious API calls
    S8 = "S8"  # network addresses

    @property
    def manifest_derived(self) -> bool:
        return self.value in MANIFEST_CATEGORIES


# On-disk prefixes, following the public DREBIN naming convention.
PREFIX_TO_CATEGORY = {
    "feature": Category.S1,
    "permission": Category.S2,
    "activity": Category.S3,
    "service_receiver": Category.S3,
    "provider": Category.S3,
    "intent": Category.S4,
    "api_call": Category.S5,
    "real_permission": Category.S6,
    "call": Category.S7,
    "url": Category.S8,
}

# Canonical prefix per category, used when writing feature files.
CATEGORY_TO_PREFIX = {
    Category.S1: "feature",
    Category.S2: "permission",
    Category.S3: "activity",
    Category.S4: "intent",
    Category.S5: "api_call",
    Category.S6: "real_permission",
    Category.S7: "call",
    Category.S8: "url",
}


class FeatureParseError(ValueError):
    """A feature file line could not be parsed."""


class VocabularyError(ValueError):
    """Vocabulary construction or lookup failed."""


class PerturbationError(ValueError):
    """A perturbation violates the add-only / mask invariants."""


def parse_feature_file(text: str, strict: bool = True, stats: dict | None = None):
    """Parse a feature file into a set of (Category, name) pairs.

    Lines are ``prefix::name``; ``#`` starts a comment line; blank lines are
    ignored; trailing whitespace is trimmed.  Unknown prefixes raise in
    strict mode, otherwise they are skipped and counted in
    ``stats["skipped_unknown_prefix"]`` when a stats dict is supplied.
    """
    features = set()
    skipped = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "::" not in line:
            raise FeatureParseError(f"line {lineno}: expected 'prefix::name', got {line!r}")
        prefix, name = line.split("::", 1)
        category = PREFIX_TO_CATEGORY.get(prefix)
        if category is None:
            if strict:
                raise FeatureParseError(f"line {lineno}: unknown prefix {prefix!r}")
            skipped += 1
            continue
        features.add((category, name))
    if stats is not None:
        stats["skipped_unknown_prefix"] = stats.get("skipped_unknown_prefix", 0) + skipped
    return features


def serialize_feature_set(features) -> str:
    """Write a feature set in the canonical file format (sorted, one per line)."""
    lines = sorted(
        f"{CATEGORY_TO_PREFIX[cat]}::{name}" for cat, name in features
    )
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class Vocabulary:
    """Ordered map from (category, name) to a vector index.

    Categories appear in S1..S8 order, names lexicographic within a
    category, so indices of one category are contiguous and the whole
    thing is deterministic for a given feature inventory.
    """

    entries: tuple  # tuple of (Category, name)
    index_of: dict = field(repr=False)
    category_range: dict = field(repr=False)  # Category -> (start, stop)

    def __len__(self) -> int:
        return len(self.entries)

    @classmethod
    def from_entries(cls, pairs) -> "Vocabulary":
        ordered = sorted(set(pairs), key=lambda p: (p[0].value, p[1]))
        if not ordered:
            raise VocabularyError("no features in selected categories")
        index_of = {pair: i for i, pair in enumerate(ordered)}
        ranges = {}
        for i, (cat, _) in enumerate(ordered):
            start, _ = ranges.get(cat, (i, i))
            ranges[cat] = (start, i + 1)
        return cls(entries=tuple(ordered), index_of=index_of, category_range=ranges)

    @classmethod
    def build(cls, corpus, categories) -> "Vocabulary":
        """Union of corpus feature sets restricted to ``categories``."""
        pairs = set()
        for features in corpus:
            pairs.update(p for p in features if p[0] in categories)
        return cls.from_entries(pairs)

    def category_indices(self, category: Category) -> np.ndarray:
        start, stop = self.category_range.get(category, (0, 0))
        return np.arange(start, stop)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "category", "name"])
        for i, (cat, name) in enumerate(self.entries):
            writer.writerow([i, cat.value, name])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Vocabulary":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["index", "category", "name"]:
            raise VocabularyError(f"bad vocabulary header: {header}")
        pairs = []
        for row in reader:
            if not row:
                continue
            _, cat, name = row
            pairs.append((Category(cat), name))
        vocab = cls.from_entries(pairs)
        if [p for p in vocab.entries] != pairs:
            raise VocabularyError("vocabulary rows are not in canonical order")
        return vocab

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()


@dataclass
class FeatureVector:
    """One app as a dense 0/1 vector over a vocabulary.

    label: 0 = benign, 1 = malware, None = unlabeled.
    """

    bits: np.ndarray
    label: int | None = None


def vectorize(features, vocab: Vocabulary) -> np.ndarray:
    """Dense 0/1 vector; features missing from the vocabulary are dropped."""
    bits = np.zeros(len(vocab), dtype=np.uint8)
    for pair in features:
        idx = vocab.index_of.get(pair)
        if idx is not None:
            bits[idx] = 1
    return bits


def apply_perturbation(x: np.ndarray, delta: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """OR the add-only perturbation into x, enforcing the invariants.

    Raises PerturbationError if delta touches a bit already set in x
    (features can only be added, never re-added or removed) or sets a bit
    outside ``mask`` when one is given.
    """
    x = np.asarray(x, dtype=np.uint8)
    delta = np.asarray(delta, dtype=np.uint8)
    if x.shape != delta.shape:
        raise PerturbationError(f"shape mismatch: x {x.shape} vs delta {delta.shape}")
    if np.any(x & delta):
        raise PerturbationError("perturbation adds an already-present feature")
    if mask is not None and np.any(delta & ~np.asarray(mask, dtype=bool)):
        raise PerturbationError("perturbation sets a bit outside the perturbable range")
    return x | delta


def num_added(delta: np.ndarray) -> int:
    """popcount of a perturbation: the number of features it adds."""
    return int(np.asarray(delta, dtype=np.uint8).sum())


# ---------------------------------------------------------------------------
# Corpus I/O: one feature file per app plus a manifest CSV `app_id,path,label`.
# ---------------------------------------------------------------------------

def write_corpus(out_dir, apps) -> str:
    """Write feature files and manifest.csv for (app_id, features, label) triples.

    Returns the manifest path.  Files are named ``<app_id>.txt``.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.csv")
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["app_id", "path", "label"])
        for app_id, features, label in apps:
            fname = f"{app_id}.txt"
            with open(os.path.join(out_dir, fname), "w") as ffh:
                ffh.write(serialize_feature_set(features))
            writer.writerow([app_id, fname, int(label)])
    return manifest_path


def load_corpus(manifest_path, strict: bool = True):
    """Read a manifest CSV and its feature files.

    Returns (app_ids, feature_sets, labels) with labels as an int array.
    """
    import os

    base = os.path.dirname(os.path.abspath(manifest_path))
    app_ids, feature_sets, labels = [], [], []
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["app_id", "path", "label"]:
            raise FeatureParseError(f"bad manifest header: {header}")
        for row in reader:
            if not row:
                continue
            app_id, path, label = row
            if label not in ("0", "1"):
                raise FeatureParseError(f"bad label {label!r} for app {app_id}")
            full = path if os.path.isabs(path) else os.path.join(base, path)
            with open(full) as ffh:
                feature_sets.append(parse_feature_file(ffh.read(), strict=strict))
            app_ids.append(app_id)
            labels.append(int(label))
    return app_ids, feature_sets, np.array(labels, dtype=np.int64)
