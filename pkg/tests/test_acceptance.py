"""Acceptance suite: ten go/no-go criteria for the whole pipeline.

Each test prints one `CRITERION n: PASS/FAIL — ...` line with the measured
values (via the terminal reporter, so the lines survive output capture).
The expensive shared state — the main corpus, the five trained detectors
and the S2 attack grid at the acceptance master seed — is built once in
session fixtures.
"""

import time

import numpy as np
import pytest

from permevade import detectors
from permevade.detectors.mlp import MLPConfig, MLPDetector
from permevade.detectors.trees import ForestConfig, train_tree_family
from permevade.evoattack import AttackConfig, attack, brute_force_min_perturbation
from permevade.experiment import (
    ExperimentConfig,
    _attack_cell,
    child_seed,
    run_experiment,
)
from permevade.featurespace import CATEGORY_TO_PREFIX, Category
from permevade.hardening import DistillConfig, distill
from permevade.importance import permutation_importance, perturbable_mask
from permevade.report import emit_report, summarize_cell
from permevade.synth import SynthSpec, generate, stratified_split

MASTER = 0  # acceptance master seed


@pytest.fixture
def announce(request):
    """One `CRITERION n: PASS/FAIL — ...` line per criterion, written
    through pytest's terminal reporter so it shows up on passing runs."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def _announce(criterion: int, ok: bool, detail: str):
        status = "PASS" if ok else "FAIL"
        line = f"CRITERION {criterion}: {status} — {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:  # pragma: no cover - reporter always present in practice
            print(line, flush=True)

    return _announce


@pytest.fixture(scope="session")
def pipeline():
    """Corpus + five trained detectors at the acceptance seed (timed)."""
    config = ExperimentConfig(master_seed=MASTER)
    spec = SynthSpec(**{**vars(config.spec), "rng_seed": child_seed(MASTER, "synth")})
    corpus = generate(spec)
    train_idx, test_idx = stratified_split(corpus.y, config.train_fraction,
                                           child_seed(MASTER, "split"))
    Xtr, ytr = corpus.X[train_idx], corpus.y[train_idx]
    Xte, yte = corpus.X[test_idx], corpus.y[test_idx]

    t0 = time.monotonic()
    models, metrics = {}, {}
    for kind in detectors.KINDS:
        cfg = detectors.default_config(kind, child_seed(MASTER, f"train:{kind}"))
        models[kind] = detectors.train(kind, Xtr, ytr, cfg, corpus.vocab.sha256)
        metrics[kind] = detectors.evaluate(models[kind], Xte, yte)
    train_time = time.monotonic() - t0

    return {
        "config": config, "corpus": corpus,
        "Xtr": Xtr, "ytr": ytr, "Xte": Xte, "yte": yte,
        "test_app_ids": [corpus.app_ids[i] for i in test_idx],
        "models": models, "metrics": metrics, "train_time": train_time,
        "mal_rows": np.flatnonzero(yte == 1)[:config.n_attack_samples],
        "s2_mask": perturbable_mask(corpus.vocab, [Category.S2]),
    }


@pytest.fixture(scope="session")
def attack_grid(pipeline):
    """S2 baseline attacks: 100 held-out malware per detector (timed)."""
    p = pipeline
    cells, times, all_records = {}, {}, []
    for kind in detectors.KINDS:
        t0 = time.monotonic()
        records, skipped = _attack_cell(
            p["models"][kind], kind, Category.S2, "baseline",
            f"attack:{kind}:S2", p["Xte"], p["test_app_ids"], p["mal_rows"],
            p["config"], p["s2_mask"], p["corpus"].vocab, workers=1)
        times[kind] = time.monotonic() - t0
        cells[kind] = summarize_cell(kind, "S2", "baseline", records, skipped)
        all_records.extend(records)
    return {"cells": cells, "times": times, "records": all_records}


def test_criterion_1_detector_accuracy(pipeline, announce):
    """All five detectors reach >= 0.95 held-out accuracy, trained < 2 min."""
    accs = {k: m.accuracy for k, m in pipeline["metrics"].items()}
    elapsed = pipeline["train_time"]
    ok = all(a >= 0.95 for a in accs.values()) and elapsed < 120
    detail = ", ".join(f"{k}={v:.4f}" for k, v in accs.items())
    announce(1, ok, f"held-out accuracy {detail}; training {elapsed:.1f}s (< 120s)")
    assert ok


def test_criterion_2_attack_success(attack_grid, announce):
    """S2 attacks on 100 held-out malware per detector: success >= 0.90,
    mean num(delta) <= 10, < 10 min per detector."""
    ok = True
    details = []
    for kind, cell in attack_grid["cells"].items():
        t = attack_grid["times"][kind]
        good = (cell.success_rate >= 0.90 and cell.mean_num is not None
                and cell.mean_num <= 10 and t < 600)
        ok = ok and good
        details.append(f"{kind}: sr={cell.success_rate:.2f} "
                       f"mean_num={cell.mean_num:.2f} t={t:.0f}s")
    announce(2, ok, "; ".join(details))
    assert ok


def test_criterion_3_oracle_agreement(announce):
    """On 50 small instances (<= 12 eligible bits) the GA never beats the
    brute-force minimum and matches it in >= 90% of trials."""
    spec = SynthSpec(n_benign=150, n_malware=150,
                     category_sizes={Category.S1: 10, Category.S2: 40},
                     counting_features={Category.S1: 3, Category.S2: 2},
                     marker_features={Category.S1: 3, Category.S2: 2},
                     rng_seed=1234)
    corpus = generate(spec)
    model = detectors.train("logreg", corpus.X, corpus.y,
                            detectors.default_config("logreg", 0),
                            corpus.vocab.sha256)
    mask = perturbable_mask(corpus.vocab, [Category.S1])
    match = beat = total = 0
    for i in np.flatnonzero(corpus.y == 1):
        x = corpus.X[i]
        if model.classify(x) != 1:
            continue
        assert int(((x == 0) & mask).sum()) <= 12
        oracle = brute_force_min_perturbation(model, x, mask, max_bits=12)
        cfg = AttackConfig(perturbable_mask=mask, population_size=100,
                           max_iterations=50, init_prob=0.05,
                           mutation_prob=0.05, w2=0.5, rng_seed=1000 + i)
        res = attack(model, x, cfg)
        total += 1
        if oracle is None:
            if res.success:
                beat += 1
        elif res.success:
            if res.num_added < int(oracle.sum()):
                beat += 1
            elif res.num_added == int(oracle.sum()):
                match += 1
        if total == 50:
            break
    ok = total == 50 and beat == 0 and match >= 45
    announce(3, ok, f"{total} trials: GA matched the brute-force minimum "
                    f"{match}/50 (>= 45 required), beat it {beat} times (0 allowed)")
    assert ok


class _LinearStub:
    """Cheap black box for the randomized constraint audit."""

    def __init__(self, weights, threshold):
        self.w = weights
        self.t = threshold
        self.vocab_size = weights.size

    def predict_proba(self, X):
        one = np.asarray(X).ndim == 1
        X = np.atleast_2d(np.asarray(X, dtype=float))
        f1 = 1.0 / (1.0 + np.exp(X @ self.w - self.t))
        out = np.column_stack([1.0 - f1, f1])
        return out[0] if one else out

    def classify(self, X):
        one = np.asarray(X).ndim == 1
        probs = np.atleast_2d(self.predict_proba(np.atleast_2d(X)))
        labels = (probs[:, 1] >= probs[:, 0]).astype(int)
        return labels[0] if one else labels


def test_criterion_4_constraint_audit(announce):
    """>= 10^4 randomized candidate perturbations across random masks,
    exclusions and samples: zero add-only / mask / exclusion violations."""
    rng = np.random.default_rng(99)
    audited = violations = 0
    trial = 0
    while audited < 10_000:
        trial += 1
        width = int(rng.integers(20, 60))
        mask = rng.random(width) < 0.7
        excluded = rng.choice(width, size=int(rng.integers(0, 4)), replace=False)
        x = (rng.random(width) < 0.2).astype(np.uint8)
        model = _LinearStub(rng.normal(size=width) * 0.5, threshold=1.0)
        if model.classify(x) != 1:
            continue
        if not np.any(mask & (x == 0)):
            continue
        state = {"aud": 0, "bad": 0}

        def inspect(pop, elig, x=x, mask=mask, excluded=excluded, state=state):
            full = np.zeros((pop.shape[0], x.size), dtype=np.uint8)
            full[:, elig] = pop
            state["aud"] += pop.shape[0]
            state["bad"] += int(np.any(full & x))
            state["bad"] += int(np.any(full[:, ~mask]))
            if excluded.size:
                state["bad"] += int(np.any(full[:, excluded]))

        cfg = AttackConfig(perturbable_mask=mask, population_size=20,
                           max_iterations=10, init_prob=0.1, mutation_prob=0.1,
                           excluded_features=np.sort(excluded) if excluded.size else None,
                           rng_seed=trial)
        try:
            attack(model, x, cfg, inspect=inspect)
        except ValueError:
            continue
        audited += state["aud"]
        violations += state["bad"]
    ok = violations == 0
    announce(4, ok, f"{audited} candidate perturbations audited across "
                    f"{trial} randomized attacks; {violations} violations")
    assert ok


def test_criterion_5_monotone_trajectories(attack_grid, announce):
    """Best-fitness trajectories are non-increasing in every attack."""
    checked = bad = 0
    for rec in attack_grid["records"]:
        traj = rec.fitness_trajectory
        checked += 1
        if any(b > a for a, b in zip(traj, traj[1:])):
            bad += 1
    ok = checked > 0 and bad == 0
    announce(5, ok, f"{checked} trajectories checked, {bad} non-monotone")
    assert ok


def test_criterion_6_importance_ordering(announce):
    """In 20 seeded compact corpora every planted feature outranks every
    noise feature, and a never-firing feature scores exactly 0."""
    bad = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n, d = 400, 13
        y = np.concatenate([np.zeros(200, dtype=np.int64),
                            np.ones(200, dtype=np.int64)])
        X = np.empty((n, d), dtype=np.uint8)
        planted, noise, null_col = [0, 1, 2, 3], list(range(4, 12)), 12
        for j in planted:
            X[:, j] = rng.random(n) < np.where(y == 0, 0.75, 0.25)
        for j in noise:
            X[:, j] = rng.random(n) < 0.4
        X[:, null_col] = 0
        forest = train_tree_family("random_forest", X, y,
                                   ForestConfig(min_samples_leaf=5, rng_seed=seed), "")
        imps = np.array([permutation_importance(forest, X, y, j, rng_seed=seed)
                         for j in range(d)])
        if not (imps[planted].min() > imps[noise].max() and imps[null_col] == 0.0):
            bad += 1
    ok = bad == 0
    announce(6, ok, f"20 seeded corpora; {bad} with a planted/noise ordering "
                    f"violation or nonzero null-feature importance")
    assert ok


def test_criterion_7_exclusion_rerun(pipeline, attack_grid, announce):
    """Banning the 5 most-added features (MLP x S2): success within 5
    points of baseline, mean num(delta) not lower."""
    p = pipeline
    baseline = attack_grid["cells"]["mlp"]
    banned = [name for name, _ in baseline.most_added[:5]]
    name_to_idx = {f"{CATEGORY_TO_PREFIX[cat]}::{name}": j
                   for j, (cat, name) in enumerate(p["corpus"].vocab.entries)}
    excluded = np.array(sorted(name_to_idx[n] for n in banned), dtype=np.int64)
    records, skipped = _attack_cell(
        p["models"]["mlp"], "mlp", Category.S2, "excluded",
        "attack-excluded:mlp:S2", p["Xte"], p["test_app_ids"], p["mal_rows"],
        p["config"], p["s2_mask"], p["corpus"].vocab, workers=1,
        excluded=excluded)
    cell = summarize_cell("mlp", "S2", "excluded", records, skipped)
    ok = (cell.success_rate >= baseline.success_rate - 0.05
          and cell.mean_num is not None
          and cell.mean_num >= baseline.mean_num)
    announce(7, ok, f"excluded top-5 {banned}: sr {cell.success_rate:.2f} vs "
                    f"baseline {baseline.success_rate:.2f} (>= -5 points), "
                    f"mean_num {cell.mean_num:.2f} vs {baseline.mean_num:.2f} "
                    f"(not lower)")
    assert ok


def test_criterion_8_distillation_negative_result(pipeline, announce):
    """Distilled (T=10) MLP: attack success stays >= 0.90 and student
    accuracy is within 2 points of the teacher."""
    p = pipeline
    dres = distill(p["models"]["mlp"], p["Xtr"], p["ytr"],
                   DistillConfig(temperature=10.0, init_from_teacher=True,
                                 rng_seed=child_seed(MASTER, "distill")),
                   p["Xte"], p["yte"])
    records, skipped = _attack_cell(
        dres.student, "mlp", Category.S2, "distilled",
        "attack-distilled:mlp:S2", p["Xte"], p["test_app_ids"], p["mal_rows"],
        p["config"], p["s2_mask"], p["corpus"].vocab, workers=1)
    cell = summarize_cell("mlp", "S2", "distilled", records, skipped)
    ok = (cell.success_rate >= 0.90
          and dres.student_accuracy >= dres.teacher_accuracy - 0.02)
    announce(8, ok, f"distilled T=10: attack sr {cell.success_rate:.2f} "
                    f"(>= 0.90), student acc {dres.student_accuracy:.4f} vs "
                    f"teacher {dres.teacher_accuracy:.4f} (within 2 points)")
    assert ok


def test_criterion_9_byte_identical_reports(tmp_path, announce):
    """Same master seed twice => byte-identical report directories."""
    cfg_kwargs = dict(
        master_seed=5,
        spec=SynthSpec(n_benign=120, n_malware=120,
                       category_sizes={Category.S1: 20, Category.S2: 120},
                       counting_features={Category.S1: 2, Category.S2: 4},
                       marker_features={Category.S1: 1, Category.S2: 3}),
        n_attack_samples=3,
        attack_overrides={
            Category.S1: {"population_size": 30, "max_iterations": 10},
            Category.S2: {"population_size": 30, "max_iterations": 10,
                          "init_prob": 0.005, "mutation_prob": 0.005},
        },
    )
    dirs = []
    for tag in ("a", "b"):
        report = run_experiment(ExperimentConfig(**cfg_kwargs))
        out = tmp_path / tag
        emit_report(report, str(out))
        dirs.append(out)
    names = sorted(f.name for f in dirs[0].iterdir())
    assert names == sorted(f.name for f in dirs[1].iterdir())
    mismatch = [n for n in names
                if (dirs[0] / n).read_bytes() != (dirs[1] / n).read_bytes()]
    ok = not mismatch
    announce(9, ok, f"{len(names)} report files compared byte-for-byte; "
                    f"mismatches: {mismatch or 'none'}")
    assert ok


def test_criterion_10_mlp_gradient_check(announce):
    """Analytic MLP gradients agree with central finite differences
    (step 1e-4) to relative error <= 1e-3 on every parameter."""
    rng = np.random.default_rng(1)
    Xf = (rng.random((5, 8)) < 0.4).astype(np.float64)
    targets = np.eye(2)[(rng.random(5) < 0.5).astype(int)]
    model = MLPDetector(8, MLPConfig(hidden=6, epochs=0, rng_seed=3))
    _, grads = model.loss_and_grads(Xf, targets)
    step = 1e-4
    worst = 0.0
    n_params = 0
    for name, grad in grads.items():
        flat = model.params[name].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = model.loss(Xf, targets)
            flat[idx] = orig - step
            down = model.loss(Xf, targets)
            flat[idx] = orig
            numeric = (up - down) / (2 * step)
            analytic = grad.reshape(-1)[idx]
            denom = max(abs(numeric), abs(analytic), 1e-8)
            worst = max(worst, abs(numeric - analytic) / denom)
            n_params += 1
    ok = worst <= 1e-3
    announce(10, ok, f"{n_params} parameters checked, worst relative "
                     f"error {worst:.2e} (<= 1e-3)")
    assert ok
