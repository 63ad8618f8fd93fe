"""Black-box evasion by genetic search over add-only permission perturbations.

An individual is a bit mask over the eligible positions (perturbable mask,
minus the sample's own bits, minus any excluded features).  Fitness is
w1 * F1(x + delta) + w2 * num(delta), minimized; w1 >> w2 so evading
individuals dominate, and the num(delta) term then squeezes the
perturbation down.  The detector is only ever queried through
predict_proba.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from .featurespace import apply_perturbation


class NothingToEvadeError(ValueError):
    """The sample is already classified benign."""


class NothingToPerturbError(ValueError):
    """No eligible bit is left after masking and exclusions."""


class OracleTooLargeError(ValueError):
    pass


@dataclass
class AttackConfig:
    perturbable_mask: np.ndarray
    population_size: int = 150
    max_iterations: int = 50
    init_prob: float = 0.0001
    mutation_prob: float = 0.005
    w1: float = 100.0
    w2: float = 1.0
    excluded_features: np.ndarray | None = None
    early_stop_patience: int = 10
    rng_seed: int = 0
    query_budget: int | None = None
    use_crossover: bool = True   # ablation switch: mutation-only variant when False
    memoize: bool = True

    def validate(self):
        # init/mutation probability 0 is allowed as a degenerate case
        if not (0.0 <= self.init_prob <= 1.0 and 0.0 <= self.mutation_prob <= 1.0):
            raise ValueError("probabilities must be in [0, 1]")
        if not (self.w1 > self.w2 >= 0.0):
            raise ValueError("need w1 > w2 >= 0")
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_iterations < 1 or self.early_stop_patience < 1:
            raise ValueError("max_iterations and early_stop_patience must be >= 1")
        if self.query_budget is not None and self.query_budget < 1:
            raise ValueError("query_budget must be positive")


@dataclass
class Individual:
    perturbation: np.ndarray          # full vocabulary-width 0/1 vector
    fitness: float | None = None
    evades: bool | None = None

    @property
    def num_added(self) -> int:
        return int(self.perturbation.sum())


@dataclass
class AttackResult:
    success: bool
    best: Individual
    num_added: int
    generations_run: int
    query_count: int
    fitness_trajectory: list = field(default_factory=list)
    final_proba: tuple = (0.0, 0.0)
    budget_exhausted: bool = False


def eligible_indices(x: np.ndarray, config: AttackConfig) -> np.ndarray:
    """Positions an attack may flip: in the mask, absent from x, not excluded."""
    x = np.asarray(x, dtype=np.uint8)
    ok = np.asarray(config.perturbable_mask, dtype=bool) & (x == 0)
    if config.excluded_features is not None:
        ok[np.asarray(config.excluded_features, dtype=np.int64)] = False
    return np.flatnonzero(ok)


def fitness(model, x, delta, w1: float, w2: float) -> float:
    """w1 * F1(x + delta) + w2 * num(delta); exactly one model query."""
    xp = apply_perturbation(x, delta)
    f1 = float(model.predict_proba(xp)[1])
    return w1 * f1 + w2 * float(np.sum(delta))


def initialize_population(x, config: AttackConfig) -> list[Individual]:
    """M individuals with each eligible bit set i.i.d. with init_prob;
    individual 0 is forced all-zero (elite seed for minimal perturbations)."""
    config.validate()
    elig = eligible_indices(x, config)
    if elig.size == 0:
        raise NothingToPerturbError("nothing to perturb")
    pop = _init_matrix(elig.size, config, np.random.default_rng(config.rng_seed))
    return [_to_individual(row, elig, len(x)) for row in pop]


def mutate(ind: Individual, x, config: AttackConfig, rng: np.random.Generator) -> Individual:
    """Flip each eligible bit with mutation_prob; 0->1 adds a feature,
    1->0 removes a previously *added* one (x's own bits are never eligible)."""
    elig = eligible_indices(x, config)
    bits = ind.perturbation.copy()
    bits[elig] = _mutate_rows(bits[elig][None, :], config.mutation_prob, rng)[0]
    return Individual(perturbation=bits)


def crossover(parent_a: Individual, parent_b: Individual, rng: np.random.Generator):
    """Uniform crossover; the two children take complementary picks."""
    a, b = parent_a.perturbation, parent_b.perturbation
    take_a = rng.random(a.shape[0]) < 0.5
    child_a = np.where(take_a, a, b).astype(np.uint8)
    child_b = np.where(take_a, b, a).astype(np.uint8)
    return Individual(perturbation=child_a), Individual(perturbation=child_b)


def select(population: list[Individual], rng: np.random.Generator) -> list[Individual]:
    """Size-3 tournaments, M-1 winners, plus the best individual unchanged
    (elitism).  All fitness values must already be evaluated."""
    if any(ind.fitness is None for ind in population):
        raise ValueError("select() needs fully evaluated fitness")
    keys = [_rank_key(ind.fitness, ind.num_added, ind.perturbation) for ind in population]
    elite = population[min(range(len(population)), key=keys.__getitem__)]
    chosen = [elite]
    for _ in range(len(population) - 1):
        contenders = rng.integers(0, len(population), size=3)
        winner = min(contenders, key=keys.__getitem__)
        chosen.append(population[int(winner)])
    return chosen


# -- internal vectorized machinery (same semantics as the ops above) ------

def _rank_key(fit, num, bits):
    return (fit, num, bits.tobytes())


def _to_individual(row, elig, width) -> Individual:
    bits = np.zeros(width, dtype=np.uint8)
    bits[elig] = row
    return Individual(perturbation=bits)


def _init_matrix(n_elig, config, rng):
    pop = np.zeros((config.population_size, n_elig), dtype=np.uint8)
    if config.init_prob > 0:
        pop[1:] = rng.random((config.population_size - 1, n_elig)) < config.init_prob
    return pop


def _mutate_rows(rows, prob, rng):
    if prob <= 0:
        return rows
    flips = rng.random(rows.shape) < prob
    return rows ^ flips.astype(np.uint8)


class _Evaluator:
    """Batched fitness with optional memoization and budget accounting."""

    def __init__(self, model, x, elig, config):
        self.model = model
        self.x = np.asarray(x, dtype=np.uint8)
        self.elig = elig
        self.config = config
        self.memo = {} if config.memoize else None
        self.query_count = 0
        self.budget_exhausted = False

    def __call__(self, pop):
        """Returns (f1, fitness) arrays; unevaluated rows (budget ran out)
        get +inf fitness so they can never become the best individual."""
        m = pop.shape[0]
        f1 = np.full(m, np.inf)
        todo = []
        for i in range(m):
            if self.memo is not None:
                cached = self.memo.get(pop[i].tobytes())
                if cached is not None:
                    f1[i] = cached
                    continue
            todo.append(i)
        budget = self.config.query_budget
        if budget is not None and self.query_count + len(todo) > budget:
            todo = todo[: budget - self.query_count]
            self.budget_exhausted = True
        if todo:
            Xp = np.repeat(self.x[None, :], len(todo), axis=0)
            Xp[:, self.elig] = pop[todo]
            probs = self.model.predict_proba(Xp)
            self.query_count += len(todo)
            for j, i in enumerate(todo):
                f1[i] = probs[j, 1]
                if self.memo is not None:
                    self.memo[pop[i].tobytes()] = float(probs[j, 1])
        num = pop.sum(axis=1)
        fit = np.where(np.isfinite(f1), self.config.w1 * f1 + self.config.w2 * num, np.inf)
        return f1, fit


def attack(model, x, config: AttackConfig, inspect=None) -> AttackResult:
    """Run the full evolutionary attack against one malware sample.

    Generations of evaluate -> select -> crossover -> mutate, stopping early
    once an evader exists and the best fitness has stalled for
    early_stop_patience generations.  ``inspect``, if given, is called with
    the eligible-space population matrix each generation (used by the
    constraint-audit tests).
    """
    config.validate()
    x = np.asarray(x, dtype=np.uint8)
    if model.classify(x) != 1:
        raise NothingToEvadeError("nothing to evade: sample is already classified benign")
    elig = eligible_indices(x, config)
    if elig.size == 0:
        raise NothingToPerturbError("nothing to perturb")

    rng = np.random.default_rng(config.rng_seed)
    evaluator = _Evaluator(model, x, elig, config)
    pop = _init_matrix(elig.size, config, rng)

    best_key = None
    best_row = None
    best_f1 = None
    evader_key = None
    evader_row = None
    evader_f1 = None
    trajectory = []
    stall = 0
    generations = 0

    for gen in range(config.max_iterations):
        if inspect is not None:
            inspect(pop, elig)
        f1, fit = evaluator(pop)
        generations = gen + 1

        keys = [
            _rank_key(float(fit[i]), int(pop[i].sum()), pop[i]) if np.isfinite(fit[i]) else None
            for i in range(pop.shape[0])
        ]
        improved = False
        for i, key in enumerate(keys):
            if key is None:
                continue
            if best_key is None or key < best_key:
                improved = improved or best_key is None or key[0] < best_key[0]
                best_key, best_row, best_f1 = key, pop[i].copy(), float(f1[i])
            if f1[i] < 0.5:
                # among evaders, prefer the sparsest perturbation: the
                # fitness optimum keeps absorbing bits as long as
                # w1*dF1 > w2, but the attack's deliverable is the
                # fewest-additions evader seen during the search
                ekey = (int(pop[i].sum()), float(fit[i]), pop[i].tobytes())
                if evader_key is None or ekey < evader_key:
                    evader_key, evader_row, evader_f1 = ekey, pop[i].copy(), float(f1[i])
        stall = 0 if improved else stall + 1
        trajectory.append(best_key[0])

        if evaluator.budget_exhausted:
            break
        if evader_key is not None and stall >= config.early_stop_patience:
            break
        if gen == config.max_iterations - 1:
            break

        # next generation: elite slot 0, tournament winners after it
        inf_key = (np.inf, 0, b"")
        keys = [k if k is not None else inf_key for k in keys]
        elite = pop[min(range(pop.shape[0]), key=keys.__getitem__)].copy()
        winners = np.empty_like(pop[1:])
        for j in range(winners.shape[0]):
            contenders = rng.integers(0, pop.shape[0], size=3)
            winners[j] = pop[min(contenders, key=lambda i: keys[int(i)])]
        if config.use_crossover:
            for j in range(0, winners.shape[0] - 1, 2):
                take = rng.random(elig.size) < 0.5
                a = np.where(take, winners[j], winners[j + 1]).astype(np.uint8)
                b = np.where(take, winners[j + 1], winners[j]).astype(np.uint8)
                winners[j], winners[j + 1] = a, b
        winners = _mutate_rows(winners, config.mutation_prob, rng)
        pop = np.vstack([elite[None, :], winners])

    success = evader_row is not None
    row, f1_val = (evader_row, evader_f1) if success else (best_row, best_f1)
    best = _to_individual(row, elig, x.shape[0])
    best.fitness = evader_key[1] if success else best_key[0]
    best.evades = success
    return AttackResult(
        success=success,
        best=best,
        num_added=best.num_added,
        generations_run=generations,
        query_count=evaluator.query_count,
        fitness_trajectory=trajectory,
        final_proba=(1.0 - f1_val, f1_val),
        budget_exhausted=evaluator.budget_exhausted,
    )


def brute_force_min_perturbation(model, x, mask, excluded=None, max_bits: int = 20):
    """Ground-truth minimum perturbation by exhaustive enumeration.

    Masks are tried in order of increasing popcount (lexicographic within
    equal popcount); the first one with F1 < 0.5 is returned, or None if
    every mask stays malware.  Refuses eligible sets larger than max_bits.
    """
    x = np.asarray(x, dtype=np.uint8)
    cfg_excluded = None if excluded is None else np.asarray(excluded, dtype=np.int64)
    ok = np.asarray(mask, dtype=bool) & (x == 0)
    if cfg_excluded is not None:
        ok[cfg_excluded] = False
    elig = np.flatnonzero(ok)
    if elig.size > max_bits:
        raise OracleTooLargeError(f"oracle too large: {elig.size} eligible bits > {max_bits}")

    if float(model.predict_proba(x)[1]) < 0.5:
        return np.zeros_like(x)

    for k in range(1, elig.size + 1):
        combos = list(itertools.combinations(range(elig.size), k))
        for chunk_start in range(0, len(combos), 4096):
            chunk = combos[chunk_start:chunk_start + 4096]
            Xp = np.repeat(x[None, :], len(chunk), axis=0)
            for r, combo in enumerate(chunk):
                Xp[r, elig[list(combo)]] = 1
            f1 = model.predict_proba(Xp)[:, 1]
            hits = np.flatnonzero(f1 < 0.5)
            if hits.size:
                delta = np.zeros_like(x)
                delta[elig[list(chunk[hits[0]])]] = 1
                return delta
    return None
