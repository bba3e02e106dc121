"""Unified multi-strategy population optimizer.

One velocity/position update rule blends five displacement operators (DBO,
PSO, GA, GSA, RDA), each weighted by an adaptive coefficient that decays
linearly to zero over the run, under a linearly decaying inertia. The five
operators are canonical small-form versions of their namesakes, all behind
one interface so alternates can be swapped in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

__all__ = [
    "STRATEGIES",
    "UammoError",
    "Dim",
    "SearchSpace",
    "Candidate",
    "OptimizerConfig",
    "IterationRecord",
    "strategy_displacement",
    "adaptive_weight",
    "inertia",
    "step",
    "optimize",
    "write_history_csv",
    "export_best",
]

STRATEGIES = ("DBO", "PSO", "GA", "GSA", "RDA")

_KINDS = ("continuous", "integer", "categorical")


class UammoError(ValueError):
    pass


@dataclass(frozen=True)
class Dim:
    """One search dimension. Integer and categorical dims are represented
    continuously inside the optimizer and snapped only at evaluation."""

    name: str
    lower: float
    upper: float
    kind: str = "continuous"

    def __post_init__(self):
        kind = self.kind
        if kind == "categorical-index":
            kind = "categorical"
            object.__setattr__(self, "kind", kind)
        if kind not in _KINDS:
            raise UammoError(f"unknown dim kind {self.kind!r}; "
                             f"expected one of {_KINDS}")
        if not self.lower < self.upper:
            raise UammoError(f"dim {self.name!r}: lower bound {self.lower} "
                             f"must be < upper bound {self.upper}")


@dataclass(frozen=True)
class SearchSpace:
    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not self.dims:
            raise UammoError("search space needs at least one dimension")
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise UammoError(f"duplicate dimension names in {names}")

    def __len__(self) -> int:
        return len(self.dims)

    @property
    def lower(self) -> np.ndarray:
        return np.array([d.lower for d in self.dims], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([d.upper for d in self.dims], dtype=float)

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def snap(self, x: np.ndarray) -> np.ndarray:
        """Round integer/categorical coordinates; used at evaluation only."""
        out = self.clamp(np.asarray(x, dtype=float)).copy()
        for i, d in enumerate(self.dims):
            if d.kind != "continuous":
                out[i] = np.clip(np.rint(out[i]), d.lower, d.upper)
        return out

    def as_dict(self, x: np.ndarray) -> dict:
        snapped = self.snap(x)
        out = {}
        for i, d in enumerate(self.dims):
            out[d.name] = (float(snapped[i]) if d.kind == "continuous"
                           else int(snapped[i]))
        return out


@dataclass
class Candidate:
    """Position, velocity, fitness and the personal best seen so far."""

    position: np.ndarray
    velocity: np.ndarray
    fitness: float | None = None
    best_position: np.ndarray | None = None
    best_fitness: float = np.inf

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.position.shape != self.velocity.shape:
            raise UammoError("position and velocity must share a shape")
        if self.best_position is None:
            self.best_position = self.position.copy()


@dataclass(frozen=True)
class OptimizerConfig:
    """Population settings. ``alpha_max`` runs parallel to STRATEGIES."""

    population: int = 30
    max_iterations: int = 50
    inertia_start: float = 0.9
    inertia_end: float = 0.4
    alpha_max: tuple = (0.2, 0.2, 0.2, 0.2, 0.2)
    epsilon: float = 1e-3
    pso_cognitive: float = 1.5
    pso_social: float = 1.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha_max", tuple(self.alpha_max))
        if self.population < 2:
            raise UammoError("population must be >= 2")
        if self.max_iterations < 1:
            raise UammoError("max_iterations must be >= 1")
        if self.epsilon <= 0:
            raise UammoError("epsilon must be > 0")
        if len(self.alpha_max) != len(STRATEGIES):
            raise UammoError(f"alpha_max needs {len(STRATEGIES)} entries "
                             f"(order {STRATEGIES})")
        if any(a < 0 for a in self.alpha_max):
            raise UammoError("alpha_max entries must be >= 0")
        if not any(a > 0 for a in self.alpha_max):
            raise UammoError("at least one alpha_max entry must be > 0")

    def alpha_for(self, strategy: str) -> float:
        return self.alpha_max[STRATEGIES.index(strategy)]


class IterationRecord(NamedTuple):
    iteration: int
    best_j: float
    mean_j: float


def adaptive_weight(strategy: str, t: int, config: OptimizerConfig) -> float:
    """alpha_j(t) = alpha_j_max * (1 - t/T): full trust at t=0, zero at t=T."""
    if not 0 <= t <= config.max_iterations:
        raise UammoError(f"iteration {t} outside [0, {config.max_iterations}]")
    return config.alpha_for(strategy) * (1.0 - t / config.max_iterations)


def inertia(t: int, config: OptimizerConfig) -> float:
    frac = t / config.max_iterations
    return config.inertia_start + (config.inertia_end
                                   - config.inertia_start) * frac


def _fitness_array(population) -> np.ndarray:
    fits = np.array([np.inf if c.fitness is None else c.fitness
                     for c in population])
    return fits


def strategy_displacement(strategy: str, cand: Candidate, population,
                          best: Candidate, t: int, space: SearchSpace,
                          config: OptimizerConfig,
                          rng: np.random.Generator) -> np.ndarray:
    """Displacement Phi_j for one candidate, per-dim clamped to 20% of range."""
    n = len(space)
    ranges = space.ranges
    x = cand.position

    if strategy == "PSO":
        r1 = rng.random(n)
        r2 = rng.random(n)
        phi = (config.pso_cognitive * r1 * (cand.best_position - x)
               + config.pso_social * r2 * (best.position - x))
    elif strategy == "GA":
        idx = rng.choice(len(population), size=2, replace=False)
        a, b = population[idx[0]], population[idx[1]]
        fits = _fitness_array(population)
        mate = a if fits[idx[0]] <= fits[idx[1]] else b
        mask = rng.random(n) < 0.5
        noise = rng.normal(0.0, 0.05 * ranges)
        mutate = rng.random(n) < 0.1
        phi = mask * (mate.position - x) + mutate * noise
    elif strategy == "DBO":
        fits = _fitness_array(population)
        worst = population[int(np.argmax(fits))]
        phi = 0.1 * (x - worst.position) + rng.normal(0.0, 0.02 * ranges)
    elif strategy == "GSA":
        fits = _fitness_array(population)
        finite = fits[np.isfinite(fits)]
        spread = finite.max() - finite.min() if finite.size else 0.0
        phi = np.zeros(n)
        if spread > 0:
            g_const = 1.0 * (1.0 - t / config.max_iterations)
            masses = np.zeros(len(fits))
            ok = np.isfinite(fits)
            masses[ok] = (finite.max() - fits[ok]) / spread
            for m, other in zip(masses, population):
                if other is cand or m == 0.0:
                    continue
                delta = other.position - x
                dist = np.linalg.norm(delta)
                phi += m * delta / (dist + 1e-9)
            phi *= g_const
    elif strategy == "RDA":
        fits = _fitness_array(population)
        n_cmd = int(np.ceil(len(population) / 4))
        commanders = [population[i] for i in np.argsort(fits,
                                                       kind="stable")[:n_cmd]]
        if any(c is cand for c in commanders):
            phi = rng.normal(0.0, 0.05 * ranges)
        else:
            leader = commanders[int(rng.integers(n_cmd))]
            phi = 0.5 * (leader.position - x)
    else:
        raise UammoError(f"unknown strategy {strategy!r}; "
                         f"expected one of {STRATEGIES}")

    limit = 0.2 * ranges
    return np.clip(phi, -limit, limit)


def step(population, best: Candidate, t: int, config: OptimizerConfig,
         space: SearchSpace, rng: np.random.Generator) -> list:
    """One synchronous update: blended velocities, positions clamped."""
    omega = inertia(t, config)
    snapshot = list(population)
    out = []
    for cand in snapshot:
        phi_total = np.zeros(len(space))
        for strategy in STRATEGIES:
            weight = adaptive_weight(strategy, t, config)
            if weight == 0.0:
                continue
            phi_total += weight * strategy_displacement(
                strategy, cand, snapshot, best, t, space, config, rng)
        velocity = omega * cand.velocity + phi_total
        position = space.clamp(cand.position + velocity)
        out.append(Candidate(position, velocity, None,
                             cand.best_position.copy(), cand.best_fitness))
    return out


def _evaluate(fitness: Callable, population, space: SearchSpace,
              context: str) -> None:
    for i, cand in enumerate(population):
        snapped = space.snap(cand.position)
        try:
            value = float(fitness(snapped))
        except Exception as exc:
            raise UammoError(
                f"fitness evaluation failed at {context} "
                f"(candidate {i}, position {snapped}): {exc}") from exc
        if not np.isfinite(value):
            value = np.inf
        cand.fitness = value
        if value < cand.best_fitness:
            cand.best_fitness = value
            cand.best_position = cand.position.copy()


def optimize(fitness: Callable, space: SearchSpace,
             config: OptimizerConfig | None = None) -> tuple:
    """Minimize a black-box function over the search space.

    Uniform-random initial positions and velocities (velocity scale 10% of
    each dim's range), then up to ``max_iterations`` blended steps. Stops
    early when the relative improvement of the best fitness falls below
    ``epsilon`` (a previous best of exactly 0 counts as converged). Returns
    ``(best position snapped, best fitness, history)`` with one
    :class:`IterationRecord` per completed evaluation wave; deterministic
    under the config seed.
    """
    config = config or OptimizerConfig()
    rng = np.random.default_rng(config.seed)
    population = []
    for _ in range(config.population):
        position = space.sample(rng)
        velocity = rng.uniform(-0.1 * space.ranges, 0.1 * space.ranges)
        population.append(Candidate(position, velocity))

    _evaluate(fitness, population, space, "initialization")
    fits = _fitness_array(population)
    best_idx = int(np.argmin(fits))
    best = Candidate(population[best_idx].position.copy(),
                     np.zeros(len(space)),
                     population[best_idx].fitness)
    history = [IterationRecord(0, best.fitness, float(np.mean(fits)))]
    prev_wave_best = float(fits[best_idx])

    for t in range(1, config.max_iterations + 1):
        population = step(population, best, t, config, space, rng)
        _evaluate(fitness, population, space, f"iteration {t}")
        fits = _fitness_array(population)
        idx = int(np.argmin(fits))
        wave_best = float(fits[idx])
        if wave_best < best.fitness:
            best = Candidate(population[idx].position.copy(),
                             np.zeros(len(space)), wave_best)
        history.append(IterationRecord(t, best.fitness, float(np.mean(fits))))

        # Eq.-16-style stop on the per-wave best: the run has converged when
        # one evaluation wave to the next improves by less than epsilon
        # relative (a previous best of exactly 0 counts as converged)
        if prev_wave_best == 0.0:
            break
        if (np.isfinite(prev_wave_best)
                and abs(wave_best - prev_wave_best) / abs(prev_wave_best)
                < config.epsilon):
            break
        prev_wave_best = wave_best

    return space.snap(best.position), best.fitness, history


def write_history_csv(path, history) -> None:
    """Convergence history as CSV: iteration, best_J, mean_J."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,best_J,mean_J\n")
        for rec in history:
            fh.write(f"{rec.iteration},{rec.best_j:.10g},{rec.mean_j:.10g}\n")


def export_best(path, space: SearchSpace, x: np.ndarray) -> None:
    """Best candidate as name=value lines, ready for a config file."""
    values = space.as_dict(x)
    with open(path, "w", encoding="utf-8") as fh:
        for name, value in values.items():
            fh.write(f"{name}={value}\n")
