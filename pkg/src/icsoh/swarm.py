"""Particle swarm search over BiLSTM hyperparameters.

The swarm runs in a continuous 2-D box: hidden-unit count on a linear axis
(rounded to an integer at evaluation time) and learning rate on a log10
axis. Constants follow the usual tuning for this problem family: population
20, cognitive weight 1.2, social weight 1.8, inertia annealed from 1.1 down
to 0.2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError
from .network import TrainConfig, train_bilstm
from .validation import require

VELOCITY_CLAMP_FRACTION = 0.2


@dataclass(frozen=True)
class PsoConfig:
    population: int = 20
    c1: float = 1.2
    c2: float = 1.8
    inertia_start: float = 1.1
    inertia_end: float = 0.2
    max_iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        require(self.population >= 1, "population must be >= 1")
        require(self.inertia_start >= self.inertia_end > 0, "inertia range invalid")
        require(self.c1 > 0 and self.c2 > 0, "c1 and c2 must be positive")
        require(self.max_iterations >= 1, "max_iterations must be >= 1")


@dataclass(frozen=True)
class SearchSpace:
    """Hyperparameter box: hidden units (integer) and learning rate (log)."""

    hidden_lo: int = 16
    hidden_hi: int = 128
    lr_lo: float = 1e-4
    lr_hi: float = 1e-1

    def __post_init__(self):
        # Degenerate (lo == hi) axes are allowed and pin that coordinate.
        require(self.hidden_lo <= self.hidden_hi, "hidden bounds inverted")
        require(0 < self.lr_lo <= self.lr_hi, "learning-rate bounds invalid")

    def bounds(self) -> list[tuple[float, float]]:
        return [
            (float(self.hidden_lo), float(self.hidden_hi)),
            (math.log10(self.lr_lo), math.log10(self.lr_hi)),
        ]

    def decode(self, position: np.ndarray) -> tuple[int, float]:
        hidden = int(round(float(position[0])))
        hidden = min(max(hidden, self.hidden_lo), self.hidden_hi)
        lr = 10.0 ** float(position[1])
        lr = min(max(lr, self.lr_lo), self.lr_hi)
        return hidden, lr


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float


@dataclass(frozen=True)
class PsoResult:
    best_position: np.ndarray
    best_fitness: float
    trace: tuple[float, ...]  # global best after init and each iteration
    evaluations: tuple = field(default_factory=tuple)  # (iter, particle, pos, fitness)


def pso_velocity_update(
    velocity: np.ndarray,
    position: np.ndarray,
    pbest: np.ndarray,
    gbest: np.ndarray,
    inertia: float,
    c1: float,
    c2: float,
    r1: np.ndarray,
    r2: np.ndarray,
) -> np.ndarray:
    """Canonical update: w*v + c1*r1*(pbest - x) + c2*r2*(gbest - x)."""
    return inertia * velocity + c1 * r1 * (pbest - position) + c2 * r2 * (gbest - position)


def _inertia_at(cfg: PsoConfig, iteration: int) -> float:
    if cfg.max_iterations <= 1:
        return cfg.inertia_end
    frac = iteration / (cfg.max_iterations - 1)
    return cfg.inertia_start + (cfg.inertia_end - cfg.inertia_start) * frac


def pso_minimize(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    cfg: PsoConfig = PsoConfig(),
) -> PsoResult:
    """Minimize a black-box function over a box.

    Positions are clamped to the bounds and velocities to 20% of each axis
    range. Each particle draws from its own seeded stream, so evaluation
    order cannot change the trajectory. Non-finite objective values are
    treated as +inf and can never become the global best of a finite swarm.
    """
    lows = np.array([b[0] for b in bounds], dtype=float)
    highs = np.array([b[1] for b in bounds], dtype=float)
    require(bool(np.all(highs >= lows)), "bounds inverted")
    spans = highs - lows
    v_max = VELOCITY_CLAMP_FRACTION * spans

    def safe_eval(x: np.ndarray) -> float:
        value = float(objective(x))
        return value if math.isfinite(value) else math.inf

    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.population)
    rngs = [np.random.default_rng(s) for s in streams]
    particles: list[Particle] = []
    evaluations = []
    for k, rng in enumerate(rngs):
        position = lows + rng.uniform(0.0, 1.0, size=len(bounds)) * spans
        fitness = safe_eval(position)
        evaluations.append((0, k, tuple(position), fitness))
        particles.append(
            Particle(
                position=position,
                velocity=np.zeros(len(bounds)),
                pbest_position=position.copy(),
                pbest_fitness=fitness,
            )
        )

    best = min(particles, key=lambda p: p.pbest_fitness)
    gbest_position = best.pbest_position.copy()
    gbest_fitness = best.pbest_fitness
    trace = [gbest_fitness]

    for iteration in range(cfg.max_iterations):
        inertia = _inertia_at(cfg, iteration)
        for k, (particle, rng) in enumerate(zip(particles, rngs)):
            r1 = rng.uniform(0.0, 1.0, size=len(bounds))
            r2 = rng.uniform(0.0, 1.0, size=len(bounds))
            velocity = pso_velocity_update(
                particle.velocity,
                particle.position,
                particle.pbest_position,
                gbest_position,
                inertia,
                cfg.c1,
                cfg.c2,
                r1,
                r2,
            )
            particle.velocity = np.clip(velocity, -v_max, v_max)
            particle.position = np.clip(
                particle.position + particle.velocity, lows, highs
            )
            fitness = safe_eval(particle.position)
            evaluations.append((iteration + 1, k, tuple(particle.position), fitness))
            if fitness < particle.pbest_fitness:
                particle.pbest_fitness = fitness
                particle.pbest_position = particle.position.copy()
        best = min(particles, key=lambda p: p.pbest_fitness)
        if best.pbest_fitness < gbest_fitness:
            gbest_fitness = best.pbest_fitness
            gbest_position = best.pbest_position.copy()
        trace.append(gbest_fitness)

    return PsoResult(
        best_position=gbest_position,
        best_fitness=gbest_fitness,
        trace=tuple(trace),
        evaluations=tuple(evaluations),
    )


@dataclass(frozen=True)
class TuningResult:
    best_hidden: int
    best_lr: float
    best_fitness: float
    trace: tuple[float, ...]
    history: tuple = field(default_factory=tuple)  # (iter, particle, hidden, lr, fitness)


def pso_optimize(
    objective: Callable[[int, float], float],
    space: SearchSpace = SearchSpace(),
    cfg: PsoConfig = PsoConfig(),
) -> TuningResult:
    """Search the hyperparameter box for the lowest objective value.

    The objective receives decoded values: an integer hidden-unit count and
    a learning rate. It must be total over the space, returning +inf rather
    than raising when a configuration fails.
    """
    result = pso_minimize(lambda x: objective(*space.decode(x)), space.bounds(), cfg)
    hidden, lr = space.decode(result.best_position)
    history = tuple(
        (it, k, *space.decode(np.asarray(pos)), fit)
        for it, k, pos, fit in result.evaluations
    )
    return TuningResult(
        best_hidden=hidden,
        best_lr=lr,
        best_fitness=result.best_fitness,
        trace=result.trace,
        history=history,
    )


def split_fitness_pairs(sequences, targets, fit_fraction: float = 0.8):
    """Chronological fit/validation split of the training pairs."""
    X = np.asarray(sequences, dtype=float)
    y = np.asarray(targets, dtype=float)
    require(0 < fit_fraction < 1, "fit fraction must be in (0, 1)")
    cut = int(len(y) * fit_fraction)
    cut = min(max(cut, 1), len(y) - 1)
    return X[:cut], y[:cut], X[cut:], y[cut:]


def fitness_of_config(
    hidden: int,
    lr: float,
    train_sequences,
    train_targets,
    val_sequences,
    val_targets,
    budget_epochs: int = 60,
    seed: int = 0,
    base_config: TrainConfig = TrainConfig(),
    init_net=None,
) -> float:
    """Validation RMSE of a BiLSTM trained under a shortened budget.

    Failures (divergence, non-finite predictions) map to +inf so the swarm
    simply routes around them.
    """
    require(len(np.asarray(val_targets)) > 0, "validation set must be non-empty")
    cfg = replace(base_config, max_epochs=budget_epochs, seed=seed)
    try:
        net, _ = train_bilstm(train_sequences, train_targets, hidden, lr, cfg, init_net)
        preds = net.predict_many(val_sequences)
    except NumericalError:
        return math.inf
    rmse = float(np.sqrt(np.mean((preds - np.asarray(val_targets, dtype=float)) ** 2)))
    return rmse if math.isfinite(rmse) else math.inf
