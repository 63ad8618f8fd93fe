"""Command-line entry points.

Subcommands mirror the pipeline stages: synth, train, evaluate, importance,
attack, distill, report, oracle.  Every subcommand takes --seed, --config
(JSON or TOML) and --out.  Exit codes: 0 success, 1 configuration error
(bad config file, bad paths, invalid field values), 2 runtime failure.
"""

import argparse
import dataclasses
import json
import os
import sys

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from . import detectors
from .detectors.base import DetectorError
from .detectors.io import load as load_model, save as save_model
from .evoattack import AttackConfig, attack, brute_force_min_perturbation
from .experiment import ExperimentConfig, ExperimentError, run_experiment
from .featurespace import (CATEGORY_TO_PREFIX, Category, FeatureParseError,
                           PerturbationError, Vocabulary, VocabularyError,
                           load_corpus, vectorize)
from .hardening import DistillConfig, distill
from .importance import ImportanceError, category_report, perturbable_mask
from .report import ReportError, emit_report
from .synth import SynthSpec, SynthSpecError, generate, emit, stratified_split

CONFIG_ERRORS = (SynthSpecError, ExperimentError, DetectorError, FeatureParseError,
                 VocabularyError, ImportanceError, ReportError, PerturbationError,
                 ValueError, FileNotFoundError, NotADirectoryError,
                 IsADirectoryError, PermissionError, KeyError, TypeError)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            return tomllib.load(fh)
        return json.loads(fh.read().decode())


def _category_keyed(mapping: dict) -> dict:
    return {Category(k): v for k, v in mapping.items()}


def _read_corpus(corpus_dir: str):
    """Load a synth-emitted corpus directory into (X, y, app_ids, vocab)."""
    with open(os.path.join(corpus_dir, "vocabulary.csv")) as fh:
        vocab = Vocabulary.from_csv(fh.read())
    app_ids, feature_sets, labels = load_corpus(os.path.join(corpus_dir, "manifest.csv"))
    X = np.stack([vectorize(fs, vocab) for fs in feature_sets])
    return X, labels, app_ids, vocab


def _emit_json(payload, out_dir: str | None, name: str):
    text = json.dumps(payload, sort_keys=True, indent=2)
    print(text)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, name), "w") as fh:
            fh.write(text + "\n")


# -- subcommands -----------------------------------------------------------

def cmd_synth(args):
    overrides = _load_config(args.config)
    for key in ("category_sizes", "counting_features", "marker_features"):
        if key in overrides:
            overrides[key] = _category_keyed(overrides[key])
    spec = SynthSpec(rng_seed=args.seed, **overrides)
    corpus = generate(spec)
    if not args.out:
        raise ValueError("synth requires --out")
    manifest = emit(corpus, args.out)
    print(manifest)


def cmd_train(args):
    overrides = _load_config(args.config)
    X, y, _, vocab = _read_corpus(args.corpus)
    if args.train_fraction < 1.0:
        train_idx, _ = stratified_split(y, args.train_fraction, args.seed)
        X, y = X[train_idx], y[train_idx]
    config = detectors.default_config(args.kind, args.seed)
    for key, value in overrides.items():
        if not hasattr(config, key):
            raise ValueError(f"unknown {args.kind} config field: {key}")
        setattr(config, key, value)
    model = detectors.train(args.kind, X, y, config, vocab.sha256)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, f"model-{args.kind}.json")
    save_model(model, path)
    print(path)


def cmd_evaluate(args):
    X, y, _, vocab = _read_corpus(args.corpus)
    model = load_model(args.model, vocab)
    if args.train_fraction < 1.0:
        _, test_idx = stratified_split(y, args.train_fraction, args.seed)
        X, y = X[test_idx], y[test_idx]
    metrics = detectors.evaluate(model, X, y)
    _emit_json({"kind": model.kind, **metrics.as_dict()}, args.out, "metrics.json")


def cmd_importance(args):
    X, y, _, vocab = _read_corpus(args.corpus)
    model = load_model(args.model, vocab)
    report = category_report(model, X, y, vocab, rng_seed=args.seed,
                             per_feature=args.per_feature)
    print(report.to_json())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "importance.json"), "w") as fh:
            fh.write(report.to_json() + "\n")
        with open(os.path.join(args.out, "importance.csv"), "w") as fh:
            fh.write(report.to_csv())


def _attack_setup(args):
    overrides = _load_config(args.config)
    X, y, app_ids, vocab = _read_corpus(args.corpus)
    model = load_model(args.model, vocab)
    categories = [Category(c) for c in args.categories.split(",")]
    mask = perturbable_mask(vocab, categories)
    if args.app_id is not None:
        try:
            row = app_ids.index(args.app_id)
        except ValueError:
            raise ValueError(f"app_id {args.app_id!r} not in corpus") from None
    else:
        row = args.index
    if not 0 <= row < len(app_ids):
        raise ValueError(f"sample index {row} out of range")
    return overrides, model, X[row], app_ids[row], vocab, mask


def cmd_attack(args):
    overrides, model, x, app_id, vocab, mask = _attack_setup(args)
    if "excluded_features" in overrides:
        overrides["excluded_features"] = np.asarray(overrides["excluded_features"],
                                                    dtype=np.int64)
    config = AttackConfig(perturbable_mask=mask, rng_seed=args.seed, **overrides)
    res = attack(model, x, config)
    added = np.flatnonzero(res.best.perturbation)
    payload = {
        "app_id": app_id,
        "success": bool(res.success),
        "num_added": int(res.num_added),
        "added_features": [f"{CATEGORY_TO_PREFIX[vocab.entries[j][0]]}::{vocab.entries[j][1]}"
                           for j in added],
        "query_count": int(res.query_count),
        "generations_run": int(res.generations_run),
        "final_proba": float(res.final_proba[1]),
        "fitness_trajectory": [float(f) for f in res.fitness_trajectory],
        "budget_exhausted": bool(res.budget_exhausted),
    }
    _emit_json(payload, args.out, "attack.json")


def cmd_oracle(args):
    overrides, model, x, app_id, vocab, mask = _attack_setup(args)
    excluded = overrides.get("excluded_features")
    if excluded is not None:
        excluded = np.asarray(excluded, dtype=np.int64)
    best = brute_force_min_perturbation(model, x, mask, excluded=excluded,
                                        max_bits=overrides.get("max_bits", 20))
    if best is None:
        payload = {"app_id": app_id, "found": False}
    else:
        added = np.flatnonzero(best)
        payload = {
            "app_id": app_id,
            "found": True,
            "num_added": int(added.size),
            "added_features": [f"{CATEGORY_TO_PREFIX[vocab.entries[j][0]]}::{vocab.entries[j][1]}"
                               for j in added],
        }
    _emit_json(payload, args.out, "oracle.json")


def cmd_distill(args):
    overrides = _load_config(args.config)
    X, y, _, vocab = _read_corpus(args.corpus)
    teacher = load_model(args.model, vocab)
    train_idx, test_idx = stratified_split(y, args.train_fraction, args.seed)
    config = DistillConfig(rng_seed=args.seed, **overrides)
    result = distill(teacher, X[train_idx], y[train_idx], config,
                     X[test_idx], y[test_idx])
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    student_path = os.path.join(out, "model-mlp-distilled.json")
    save_model(result.student, student_path)
    _emit_json({
        "student_path": student_path,
        "temperature": config.temperature,
        "teacher_accuracy": result.teacher_accuracy,
        "student_accuracy": result.student_accuracy,
        "accuracy_regression_warning": result.accuracy_regression_warning,
    }, args.out, "distill.json")


def cmd_report(args):
    overrides = _load_config(args.config)
    if "spec" in overrides:
        spec_kwargs = overrides.pop("spec")
        for key in ("category_sizes", "counting_features", "marker_features"):
            if key in spec_kwargs:
                spec_kwargs[key] = _category_keyed(spec_kwargs[key])
        overrides["spec"] = SynthSpec(**spec_kwargs)
    if "allowed_categories" in overrides:
        overrides["allowed_categories"] = tuple(
            Category(c) for c in overrides["allowed_categories"])
    if "attack_overrides" in overrides:
        overrides["attack_overrides"] = _category_keyed(overrides["attack_overrides"])
    config = ExperimentConfig(master_seed=args.seed, **overrides)
    report = run_experiment(config)
    if not args.out:
        raise ValueError("report requires --out")
    for path in emit_report(report, args.out):
        print(path)


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="permevade")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=False, model=False, sample=False, split=False):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--config", default=None, help="JSON or TOML config file")
        p.add_argument("--out", default=None, help="output directory")
        if corpus:
            p.add_argument("--corpus", required=True, help="corpus directory (synth output)")
        if model:
            p.add_argument("--model", required=True, help="serialized model path")
        if sample:
            p.add_argument("--index", type=int, default=0, help="corpus row to attack")
            p.add_argument("--app-id", default=None, help="attack this app instead of --index")
            p.add_argument("--categories", default="S2", help="comma-separated, e.g. S1,S2")
        if split:
            p.add_argument("--train-fraction", type=float, default=1.0)

    common(sub.add_parser("synth", help="generate a synthetic corpus"))
    p = sub.add_parser("train", help="train one detector on a corpus")
    common(p, corpus=True, split=True)
    p.add_argument("--kind", required=True, choices=detectors.KINDS)
    common(sub.add_parser("evaluate", help="evaluate a trained detector"),
           corpus=True, model=True, split=True)
    p = sub.add_parser("importance", help="OOB permutation importance (random forest)")
    common(p, corpus=True, model=True)
    p.add_argument("--per-feature", action="store_true")
    common(sub.add_parser("attack", help="GA evasion attack on one sample"),
           corpus=True, model=True, sample=True)
    common(sub.add_parser("oracle", help="brute-force minimal perturbation"),
           corpus=True, model=True, sample=True)
    p = sub.add_parser("distill", help="distillation-harden an MLP detector")
    common(p, corpus=True, model=True)
    p.add_argument("--train-fraction", type=float, default=1000 / 1400,
                   dest="train_fraction")
    common(sub.add_parser("report", help="run the full experiment and emit reports"))
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
    "attack": cmd_attack,
    "oracle": cmd_oracle,
    "distill": cmd_distill,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
