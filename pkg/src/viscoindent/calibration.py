"""Real-coded genetic algorithm for surrogate-based parameter identification."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .contact import LDCurve
from .errors import InitializationError, InvalidInputError
from .surrogate import SurrogateModel, predict

log = logging.getLogger(__name__)

STALL_GENERATIONS = 50
ELITE_FRACTION = 0.05
EVAL_CHUNK = 32
HISTORY_HEADER = "generation,best_objective,mean_objective"


@dataclass(frozen=True)
class GaConfig:
    rng_seed: int
    population: int = 200
    tournament_size: int = 2
    crossover_fraction: float = 0.8
    crossover_ratio: float = 1.0
    mutation_scale: float = 1.0
    mutation_shrink: float = 1.0
    migration_fraction: float = 0.2
    migration_interval: int = 20
    migration_direction: str = "forward"
    max_generations: int | None = None
    fitness_tolerance: float = 1e-4
    subpopulations: int = 4
    threads: int = 1

    def __post_init__(self):
        if self.rng_seed is None:
            raise InvalidInputError("an explicit rng_seed is required")
        if not 0 <= self.crossover_fraction <= 1:
            raise InvalidInputError("crossover_fraction must lie in [0, 1]")
        if self.subpopulations < 1 or self.population % self.subpopulations:
            raise InvalidInputError("population must split evenly into subpopulations")
        if self.population // self.subpopulations < 2 * self.tournament_size:
            raise InvalidInputError("each subpopulation needs at least 2 * tournament_size members")
        if not self.fitness_tolerance > 0:
            raise InvalidInputError("fitness_tolerance must be positive")
        if self.migration_direction not in ("forward", "both"):
            raise InvalidInputError("migration_direction must be 'forward' or 'both'")
        if not 0 <= self.migration_fraction <= 1:
            raise InvalidInputError("migration_fraction must lie in [0, 1]")

    def generations_for(self, n_params):
        return self.max_generations if self.max_generations is not None else 100 * n_params


# ---------------------------------------------------------------------------
# Operators
# ---------------------------------------------------------------------------

def intermediate_crossover(parent1, parent2, ratio, rng):
    p1 = np.asarray(parent1, dtype=float)
    p2 = np.asarray(parent2, dtype=float)
    if p1.shape != p2.shape:
        raise InvalidInputError("parents differ in dimension")
    return p1 + rng.random(p1.shape) * ratio * (p2 - p1)


def _bounds_arrays(bounds):
    b = np.asarray(bounds, dtype=float)
    return b[:, 0], b[:, 1]


def gaussian_mutation(individual, generation, config: GaConfig, bounds, rng, max_generations=None):
    x = np.asarray(individual, dtype=float)
    lo, hi = _bounds_arrays(bounds)
    G = max_generations or config.generations_for(x.size)
    if generation > G:
        raise InvalidInputError("generation exceeds max_generations")
    sd = config.mutation_scale * (1.0 - config.mutation_shrink * generation / G)
    if sd <= 0:
        return x.copy()
    return np.clip(x + rng.normal(0.0, 1.0, x.shape) * sd * (hi - lo), lo, hi)


def tournament_select(population, fitnesses, size, rng):
    """Index of the best among ``size`` distinct uniformly drawn candidates (minimization)."""
    f = np.asarray(fitnesses, dtype=float)
    if size > len(f):
        raise InvalidInputError("tournament larger than the population")
    cand = rng.choice(len(f), size, replace=False)
    best = min(cand, key=lambda i: (f[i], i))
    return int(best)


def migrate(subpopulations, fitnesses, config: GaConfig, generation):
    """Forward migration: the best of subpopulation n replace the worst of n+1.

    Returns new ``(subpopulations, fitnesses)`` lists; inputs are untouched.
    """
    pops = [np.array(p, dtype=float) for p in subpopulations]
    fits = [np.array(f, dtype=float) for f in fitnesses]
    if len(pops) < 2 or generation == 0 or generation % config.migration_interval:
        return pops, fits
    n_mig = int(math.floor(config.migration_fraction * len(pops[0]) + 1e-9))
    if n_mig == 0:
        return pops, fits
    src_pops = [p.copy() for p in pops]
    src_fits = [f.copy() for f in fits]
    moves = [(k, (k + 1) % len(pops)) for k in range(len(pops))]
    if config.migration_direction == "both":
        moves += [(k, (k - 1) % len(pops)) for k in range(len(pops))]
    for src, dst in moves:
        best = np.lexsort((np.arange(len(src_fits[src])), src_fits[src]))[:n_mig]
        worst = np.lexsort((-np.arange(len(fits[dst])), -fits[dst]))[:n_mig]
        pops[dst][worst] = src_pops[src][best]
        fits[dst][worst] = src_fits[src][best]
    return pops, fits


# ---------------------------------------------------------------------------
# Problem
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition:
    descriptor: str
    target: np.ndarray
    surrogate: SurrogateModel

    def __post_init__(self):
        h = self.target.h if isinstance(self.target, LDCurve) else self.target
        h = np.asarray(h, dtype=float)
        object.__setattr__(self, "target", h)
        if h.shape != (self.surrogate.basis.phi.shape[0],):
            raise InvalidInputError(
                f"condition {self.descriptor}: target has {h.size} samples, surrogate predicts "
                f"{self.surrogate.basis.phi.shape[0]}"
            )


@dataclass(frozen=True)
class CalibrationProblem:
    bounds: tuple
    conditions: tuple
    names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple((float(a), float(b)) for a, b in self.bounds))
        object.__setattr__(self, "conditions", tuple(self.conditions))
        if not self.conditions:
            raise InvalidInputError("at least one condition is required")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise InvalidInputError("every search bound needs lo < hi")
        for c in self.conditions:
            sb = c.surrogate.param_bounds
            if len(sb) != len(self.bounds):
                raise InvalidInputError(f"condition {c.descriptor}: surrogate dimension differs from search space")
            for (lo, hi), (slo, shi) in zip(self.bounds, sb):
                if lo < slo - 1e-12 or hi > shi + 1e-12:
                    raise InvalidInputError(f"condition {c.descriptor}: search bounds exceed surrogate bounds")

    @property
    def n_params(self):
        return len(self.bounds)


def objective_batch(problem: CalibrationProblem, X):
    """Aggregate objective for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    total = np.zeros(len(X))
    for c in problem.conditions:
        pred = predict(c.surrogate, X)
        total += np.mean((pred - c.target) ** 2, axis=1)
    out = total / len(problem.conditions)
    return np.where(np.isfinite(out), out, np.inf)


def aggregate_objective(problem: CalibrationProblem, p):
    """Mean over conditions of the squared-depth MSE between surrogate and target."""
    return float(objective_batch(problem, np.asarray(p, dtype=float)[None, :])[0])


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class GaResult:
    best_params: np.ndarray
    best_objective: float
    history: list = field(default_factory=list)
    generations: int = 0
    stop_reason: str = ""

    def __iter__(self):
        return iter((self.best_params, self.best_objective, self.history))

    def history_csv(self, names=()):
        names = list(names) or [f"p{j}" for j in range(len(self.best_params))]
        lines = [HISTORY_HEADER + "," + ",".join(f"best_{n}" for n in names)]
        for g, best, mean, x in self.history:
            lines.append(f"{g},{best!r},{mean!r}," + ",".join(repr(float(v)) for v in x))
        return "\n".join(lines) + "\n"


def _evaluate(objective, X, threads):
    # fixed chunk boundaries: batched BLAS results can depend on the batch
    # shape, so the split must not follow the thread count
    chunks = [slice(i, i + EVAL_CHUNK) for i in range(0, len(X), EVAL_CHUNK)]
    if threads <= 1 or len(chunks) < 2:
        parts = [objective(X[c]) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: objective(X[c]), chunks))
    return np.concatenate(parts)


def ga_minimize(objective, bounds, config: GaConfig):
    """Minimize a row-batched ``objective`` over a box.

    Every child draws from its own stream seeded by (seed, generation,
    subpopulation, slot), so results do not depend on evaluation order or
    thread count.
    """
    lo, hi = _bounds_arrays(bounds)
    d = lo.size
    G = config.generations_for(d)
    S = config.subpopulations
    n = config.population // S
    n_elite = max(1, int(math.ceil(ELITE_FRACTION * n)))
    n_cross = int(round(config.crossover_fraction * (n - n_elite)))

    init_rng = np.random.default_rng([config.rng_seed, 0])
    pops = [lo + init_rng.random((n, d)) * (hi - lo) for _ in range(S)]
    fit_all = _evaluate(objective, np.vstack(pops), config.threads)
    if not np.any(np.isfinite(fit_all)):
        raise InitializationError("no individual of the initial population has a finite objective")
    fits = list(np.split(fit_all, S))

    history = []

    def record(g):
        allf = np.concatenate(fits)
        k = int(np.argmin(allf))
        finite = allf[np.isfinite(allf)]
        history.append((g, float(allf[k]), float(finite.mean()), np.vstack(pops)[k].copy()))

    record(0)
    stop = "max_generations"
    g = 0
    for g in range(1, G + 1):
        children = []
        for s in range(S):
            pop, fit = pops[s], fits[s]
            order = np.lexsort((np.arange(n), fit))
            kids = [pop[i].copy() for i in order[:n_elite]]
            for slot in range(n_elite, n):
                rng = np.random.default_rng([config.rng_seed, g, s, slot])
                a = tournament_select(pop, fit, config.tournament_size, rng)
                if slot < n_elite + n_cross:
                    b = tournament_select(pop, fit, config.tournament_size, rng)
                    kids.append(np.clip(intermediate_crossover(pop[a], pop[b], config.crossover_ratio, rng), lo, hi))
                else:
                    kids.append(gaussian_mutation(pop[a], g, config, bounds, rng, G))
            children.append(np.array(kids))
        # elites keep their known fitness; only new individuals are evaluated
        new_X = np.vstack([c[n_elite:] for c in children])
        new_f = np.split(_evaluate(objective, new_X, config.threads), S)
        for s in range(S):
            elite_f = np.sort(fits[s], kind="stable")[:n_elite]
            fits[s] = np.concatenate([elite_f, new_f[s]])
            pops[s] = children[s]
        pops, fits = migrate(pops, fits, config, g)
        record(g)
        if g >= STALL_GENERATIONS and history[g - STALL_GENERATIONS][1] - history[g][1] < config.fitness_tolerance:
            stop = "stall"
            break
    _, best_f, _, best_x = min(history, key=lambda h: (h[1], h[0]))
    return GaResult(best_x, best_f, history, g, stop)


def ga_run(problem: CalibrationProblem, config: GaConfig):
    """Returns ``(best_params, best_objective, history)``."""
    return ga_minimize(lambda X: objective_batch(problem, X), problem.bounds, config)


# ---------------------------------------------------------------------------
# Fit quality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitMetrics:
    rmse: float
    r2: float
    avg_err: float
    pct_err: float

    def as_dict(self):
        return {"rmse": self.rmse, "r2": self.r2, "avg_err": self.avg_err, "pct_err": self.pct_err}


def fit_metrics(a, b) -> FitMetrics:
    """Agreement of ``b`` with reference ``a`` on a shared grid (depths in nm)."""
    ha = np.asarray(a.h if isinstance(a, LDCurve) else a, dtype=float)
    hb = np.asarray(b.h if isinstance(b, LDCurve) else b, dtype=float)
    if ha.shape != hb.shape:
        raise InvalidInputError("curves must share a grid")
    diff = hb - ha
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    ss_tot = float(np.sum((ha - ha.mean()) ** 2))
    ss_res = float(np.sum(diff ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else -math.inf)
    nz = ha != 0
    pct = float(np.mean(np.abs(diff[nz]) / np.abs(ha[nz])) * 100) if np.any(nz) else math.nan
    return FitMetrics(rmse, r2, float(np.mean(np.abs(diff))), pct)
