"""Versioned JSON serialization for trained detectors.

The blob carries the model kind, the hash of the vocabulary it was trained
against, its config, and all parameter arrays (base64 of the raw bytes).
Loading against a vocabulary with a different hash is refused.
"""

import base64
import dataclasses
import json

import numpy as np

from .base import DetectorError
from .linear import LogRegConfig, LogRegDetector
from .mlp import MLPConfig, MLPDetector, PARAM_NAMES
from .trees import (
    DecisionTreeDetector, ExtraTreesConfig, ExtraTreesDetector,
    ForestConfig, RandomForestDetector, TreeArrays, TreeConfig,
)

FORMAT_VERSION = 1

TREE_FIELDS = ("feature", "left", "right", "value", "n_node")


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {
        "dtype": str(a.dtype),
        "shape": list(a.shape),
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def _encode_tree(tree: TreeArrays, prefix: str, arrays: dict):
    for name in TREE_FIELDS:
        arrays[f"{prefix}{name}"] = _encode_array(getattr(tree, name))


def _decode_tree(prefix: str, arrays: dict) -> TreeArrays:
    return TreeArrays(**{name: _decode_array(arrays[f"{prefix}{name}"]) for name in TREE_FIELDS})


def to_blob(model) -> dict:
    blob = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "vocab_hash": model.vocab_hash,
        "vocab_size": model.vocab_size,
        "config": dataclasses.asdict(model.config),
        "arrays": {},
        "extra": {},
    }
    arrays = blob["arrays"]
    if model.kind == "mlp":
        for name in PARAM_NAMES:
            arrays[name] = _encode_array(model.params[name])
        provenance = getattr(model, "provenance", None)
        if provenance:
            blob["extra"]["provenance"] = provenance
    elif model.kind == "logreg":
        arrays["w"] = _encode_array(model.w)
        blob["extra"]["b"] = model.b
    elif model.kind == "decision_tree":
        _encode_tree(model.tree, "", arrays)
    elif model.kind in ("random_forest", "extra_trees"):
        blob["extra"]["n_trees"] = len(model.trees)
        for i, tree in enumerate(model.trees):
            _encode_tree(tree, f"t{i}_", arrays)
        if model.bootstrap_indices is not None:
            blob["extra"]["n_train"] = model.n_train
            for i, boot in enumerate(model.bootstrap_indices):
                arrays[f"boot{i}"] = _encode_array(boot)
    else:
        raise DetectorError(f"cannot serialize kind {model.kind!r}")
    return blob


def from_blob(blob: dict, vocab=None):
    if blob.get("format_version") != FORMAT_VERSION:
        raise DetectorError(f"unsupported model format version {blob.get('format_version')!r}")
    if vocab is not None and blob["vocab_hash"] and blob["vocab_hash"] != vocab.sha256:
        raise DetectorError(
            "model was trained against a different vocabulary "
            f"({blob['vocab_hash'][:12]}... != {vocab.sha256[:12]}...)"
        )
    kind = blob["kind"]
    arrays = blob["arrays"]
    size = blob["vocab_size"]
    vhash = blob["vocab_hash"]
    if kind == "mlp":
        model = MLPDetector(size, MLPConfig(**blob["config"]), vhash)
        for name in PARAM_NAMES:
            model.params[name] = _decode_array(arrays[name])
        if "provenance" in blob["extra"]:
            model.provenance = blob["extra"]["provenance"]
    elif kind == "logreg":
        model = LogRegDetector(size, LogRegConfig(**blob["config"]), vhash)
        model.w = _decode_array(arrays["w"])
        model.b = float(blob["extra"]["b"])
    elif kind == "decision_tree":
        model = DecisionTreeDetector(size, TreeConfig(**blob["config"]), vhash)
        model.tree = _decode_tree("", arrays)
    elif kind == "random_forest":
        model = RandomForestDetector(size, ForestConfig(**blob["config"]), vhash)
        n_trees = blob["extra"]["n_trees"]
        model.trees = [_decode_tree(f"t{i}_", arrays) for i in range(n_trees)]
        if "boot0" in arrays:
            model.bootstrap_indices = [_decode_array(arrays[f"boot{i}"]) for i in range(n_trees)]
            model.n_train = blob["extra"]["n_train"]
    elif kind == "extra_trees":
        model = ExtraTreesDetector(size, ExtraTreesConfig(**blob["config"]), vhash)
        model.trees = [_decode_tree(f"t{i}_", arrays) for i in range(blob["extra"]["n_trees"])]
    else:
        raise DetectorError(f"unknown model kind {kind!r}")
    return model


def save(model, path):
    with open(path, "w") as fh:
        json.dump(to_blob(model), fh, sort_keys=True)


def load(path, vocab=None):
    with open(path) as fh:
        return from_blob(json.load(fh), vocab=vocab)
