"""Experiment orchestration: synth -> train -> importance -> attacks -> report.

One master seed drives the whole pipeline.  Child seeds are derived by
hashing (master, stage-name, index), so every stage is independently
reproducible and per-sample attacks are order-independent — which is what
lets the optional process pool produce byte-identical reports to a serial
run.
"""

import concurrent.futures
import hashlib
import os
import pickle
from dataclasses import dataclass, field

import numpy as np

from . import detectors
from .evoattack import AttackConfig, attack
from .featurespace import CATEGORY_TO_PREFIX, Category
from .hardening import DistillConfig, distill
from .importance import category_report, perturbable_mask, select_perturbable_categories
from .report import AttackRecord, ExperimentReport, summarize_cell
from .synth import SynthSpec, generate, stratified_split

WORKERS_ENV = "PERMEVADE_WORKERS"

# Desk-calibrated GA rates per category.  The literature-scale defaults
# (S1 init 0.01 / mut 0.30, S2 init 0.0001 / mut 0.005) read as per-bit
# probabilities put the expected perturbation size far above the reported
# mean num(d); at this corpus scale the rates below keep the equilibrium
# number of carried bits small enough for the GA to minimize properly.
CATEGORY_ATTACK_PARAMS = {
    Category.S1: {"init_prob": 0.01, "mutation_prob": 0.02, "w2": 0.5},
    Category.S2: {"init_prob": 0.0001, "mutation_prob": 0.0005, "w2": 0.5},
}


class ExperimentError(ValueError):
    pass


def child_seed(master_seed: int, stage: str, index: int = 0) -> int:
    """Deterministic per-stage seed fan-out."""
    digest = hashlib.sha256(f"{master_seed}:{stage}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1  # fit a nonnegative int64


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    spec: SynthSpec = field(default_factory=SynthSpec)
    train_fraction: float = 1000 / 1400
    n_attack_samples: int = 100
    model_kinds: tuple = detectors.KINDS
    allowed_categories: tuple = (Category.S1, Category.S2)
    attack_overrides: dict = field(default_factory=dict)  # Category -> AttackConfig kwargs
    exclusion_top_k: int = 5
    run_exclusion: bool = True
    run_distill: bool = True
    distill_temperature: float = 10.0
    # Warm-start the student from the teacher weights.  From-scratch students
    # on this corpus come out flatter than the teacher (soft targets smear the
    # early response to single added bits), which masks the fitness gradient
    # rather than the decision -- the warm start keeps the distilled model
    # faithful to the deployed one while the negative result stays measurable.
    distill_init_from_teacher: bool = True
    workers: int | None = None  # None -> $PERMEVADE_WORKERS or serial

    def validate(self):
        if self.n_attack_samples <= 0:
            raise ExperimentError("n_attack_samples must be positive")
        if not 0.0 < self.train_fraction < 1.0:
            raise ExperimentError("train_fraction must be in (0, 1)")
        unknown = [k for k in self.model_kinds if k not in detectors.KINDS]
        if unknown:
            raise ExperimentError(f"unknown model kinds: {unknown}")
        if "random_forest" not in self.model_kinds:
            raise ExperimentError("random_forest is required (importance-based mask selection)")
        for cat in self.allowed_categories:
            if not cat.manifest_derived:
                raise ExperimentError(f"category {cat.value} is not manifest-derived")

    def resolve_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))


def _attack_config(config: ExperimentConfig, cat: Category, mask, rng_seed: int,
                   excluded=None) -> AttackConfig:
    kwargs = dict(CATEGORY_ATTACK_PARAMS.get(cat, {}))
    kwargs.update(config.attack_overrides.get(cat, {}))
    return AttackConfig(perturbable_mask=mask, rng_seed=rng_seed,
                        excluded_features=excluded, **kwargs)


# -- worker plumbing ------------------------------------------------------

_WORKER_MODEL = None


def _init_worker(model_blob: bytes):
    global _WORKER_MODEL
    _WORKER_MODEL = pickle.loads(model_blob)


def _run_one(args):
    x, cfg = args
    return attack(_WORKER_MODEL, x, cfg)


def _run_attacks(model, tasks, workers: int):
    """Run (x, AttackConfig) tasks; order of results matches order of tasks."""
    if workers <= 1 or len(tasks) <= 1:
        return [attack(model, x, cfg) for x, cfg in tasks]
    blob = pickle.dumps(model)
    with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker, initargs=(blob,)) as pool:
        return list(pool.map(_run_one, tasks))


# -- the experiment -------------------------------------------------------

def _attack_cell(model, kind: str, cat: Category, variant: str, stage: str,
                 Xte, test_app_ids, mal_rows, config, mask, vocab, workers,
                 excluded=None):
    """Attack up to n_attack_samples held-out malware; returns (records, skipped)."""
    tasks, task_apps = [], []
    skipped = 0
    for i, row in enumerate(mal_rows):
        x = Xte[row]
        if model.classify(x) != 1:
            skipped += 1
            continue
        cfg = _attack_config(config, cat, mask,
                             child_seed(config.master_seed, stage, i), excluded)
        tasks.append((x, cfg))
        task_apps.append(test_app_ids[row])
    results = _run_attacks(model, tasks, workers)
    records = []
    for app_id, (x, _), res in zip(task_apps, tasks, results):
        added = np.flatnonzero(res.best.perturbation)
        records.append(AttackRecord(
            app_id=app_id, model=kind, category=cat.value, variant=variant,
            success=bool(res.success), num_added=int(res.num_added),
            added_features=[f"{CATEGORY_TO_PREFIX[vocab.entries[j][0]]}::{vocab.entries[j][1]}"
                            for j in added],
            query_count=int(res.query_count),
            generations_run=int(res.generations_run),
            final_proba=float(res.final_proba[1]),
            fitness_trajectory=[float(f) for f in res.fitness_trajectory],
        ))
    return records, skipped


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    workers = config.resolve_workers()
    master = config.master_seed

    spec = SynthSpec(**{**vars(config.spec), "rng_seed": child_seed(master, "synth")})
    corpus = generate(spec)
    train_idx, test_idx = stratified_split(corpus.y, config.train_fraction,
                                           child_seed(master, "split"))
    Xtr, ytr = corpus.X[train_idx], corpus.y[train_idx]
    Xte, yte = corpus.X[test_idx], corpus.y[test_idx]
    test_app_ids = [corpus.app_ids[i] for i in test_idx]
    vhash = corpus.vocab.sha256

    report = ExperimentReport(master_seed=master)
    models = {}
    for kind in config.model_kinds:
        cfg = detectors.default_config(kind, child_seed(master, f"train:{kind}"))
        models[kind] = detectors.train(kind, Xtr, ytr, cfg, vhash)
        report.detector_metrics[kind] = detectors.evaluate(models[kind], Xte, yte).as_dict()

    imp = category_report(models["random_forest"], Xtr, ytr, corpus.vocab,
                          rng_seed=child_seed(master, "importance"))
    report.importance = {c.value: v for c, v in sorted(
        imp.per_category.items(), key=lambda kv: kv[0].value)}
    selected = select_perturbable_categories(imp, set(config.allowed_categories))
    report.selected_categories = [c.value for c in selected]

    mal_rows = np.flatnonzero(yte == 1)[:config.n_attack_samples]
    masks = {cat: perturbable_mask(corpus.vocab, [cat]) for cat in selected}

    for kind in config.model_kinds:
        for cat in selected:
            records, skipped = _attack_cell(
                models[kind], kind, cat, "baseline", f"attack:{kind}:{cat.value}",
                Xte, test_app_ids, mal_rows, config, masks[cat], corpus.vocab, workers)
            report.records.extend(records)
            report.cells.append(summarize_cell(kind, cat.value, "baseline", records, skipped))

    if config.run_exclusion and "mlp" in models and Category.S2 in selected:
        baseline = next(c for c in report.cells
                        if (c.model, c.category, c.variant) == ("mlp", "S2", "baseline"))
        banned = [name for name, _ in baseline.most_added[:config.exclusion_top_k]]
        name_to_idx = {f"{CATEGORY_TO_PREFIX[cat]}::{name}": j
                       for j, (cat, name) in enumerate(corpus.vocab.entries)}
        excluded = np.array(sorted(name_to_idx[n] for n in banned), dtype=np.int64)
        records, skipped = _attack_cell(
            models["mlp"], "mlp", Category.S2, "excluded", "attack-excluded:mlp:S2",
            Xte, test_app_ids, mal_rows, config, masks[Category.S2], corpus.vocab,
            workers, excluded=excluded)
        report.records.extend(records)
        report.cells.append(summarize_cell("mlp", "S2", "excluded", records, skipped))

    if config.run_distill and "mlp" in models and Category.S2 in selected:
        dres = distill(models["mlp"], Xtr, ytr,
                       DistillConfig(temperature=config.distill_temperature,
                                     init_from_teacher=config.distill_init_from_teacher,
                                     rng_seed=child_seed(master, "distill")),
                       Xte, yte)
        report.distill = {
            "temperature": config.distill_temperature,
            "teacher_accuracy": dres.teacher_accuracy,
            "student_accuracy": dres.student_accuracy,
            "accuracy_regression_warning": dres.accuracy_regression_warning,
        }
        records, skipped = _attack_cell(
            dres.student, "mlp", Category.S2, "distilled", "attack-distilled:mlp:S2",
            Xte, test_app_ids, mal_rows, config, masks[Category.S2], corpus.vocab, workers)
        report.records.extend(records)
        report.cells.append(summarize_cell("mlp", "S2", "distilled", records, skipped))

    report.check_consistency()
    return report
