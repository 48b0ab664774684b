"""Particle swarm mechanics, hyperparameter decoding, fitness seam."""

import math

import numpy as np
import pytest

from icsoh.errors import DataError
from icsoh.network import TrainConfig, initialize_network
from icsoh.swarm import (
    PsoConfig,
    SearchSpace,
    fitness_of_config,
    pso_minimize,
    pso_optimize,
    pso_velocity_update,
    split_fitness_pairs,
)


def sphere(x: np.ndarray) -> float:
    return float(x @ x)


class TestPsoMinimize:
    def test_sphere_converges(self):
        cfg = PsoConfig(population=20, max_iterations=50, seed=0)
        result = pso_minimize(sphere, [(-5.0, 5.0), (-5.0, 5.0)], cfg)
        assert result.best_fitness < 1e-3

    def test_trace_non_increasing(self):
        cfg = PsoConfig(population=10, max_iterations=30, seed=2)
        result = pso_minimize(sphere, [(-5.0, 5.0), (-5.0, 5.0)], cfg)
        trace = np.array(result.trace)
        assert len(trace) == 31
        assert np.all(np.diff(trace) <= 0.0)

    def test_single_particle_at_rest_never_moves(self):
        cfg = PsoConfig(population=1, max_iterations=25, seed=7)
        result = pso_minimize(sphere, [(-5.0, 5.0), (-5.0, 5.0)], cfg)
        positions = {pos for _, _, pos, _ in result.evaluations}
        assert len(positions) == 1  # pbest == gbest == position: a fixed point
        assert result.best_position == pytest.approx(next(iter(positions)))

    def test_deterministic_given_seed(self):
        cfg = PsoConfig(population=8, max_iterations=15, seed=5)
        a = pso_minimize(sphere, [(-5.0, 5.0), (-5.0, 5.0)], cfg)
        b = pso_minimize(sphere, [(-5.0, 5.0), (-5.0, 5.0)], cfg)
        assert a.trace == b.trace
        assert a.evaluations == b.evaluations

    def test_nan_objective_treated_as_inf(self):
        def sometimes_nan(x):
            return float("nan") if x[0] > 0 else sphere(x)

        cfg = PsoConfig(population=6, max_iterations=10, seed=3)
        result = pso_minimize(sometimes_nan, [(-5.0, 5.0), (-5.0, 5.0)], cfg)
        assert math.isfinite(result.best_fitness)

    def test_positions_stay_in_bounds(self):
        cfg = PsoConfig(population=12, max_iterations=20, seed=9)
        result = pso_minimize(sphere, [(-1.0, 2.0), (3.0, 8.0)], cfg)
        for _, _, pos, _ in result.evaluations:
            assert -1.0 <= pos[0] <= 2.0
            assert 3.0 <= pos[1] <= 8.0


class TestVelocityUpdate:
    def test_geometric_decay_without_attraction(self):
        velocity = np.array([1.5, -2.0])
        x = np.zeros(2)
        for _ in range(40):
            velocity = pso_velocity_update(
                velocity, x, x, x, inertia=0.6, c1=0.0, c2=0.0,
                r1=np.zeros(2), r2=np.zeros(2),
            )
        assert np.max(np.abs(velocity)) < 1e-6

    def test_stationary_fixed_point(self):
        x = np.array([0.3, -0.7])
        velocity = pso_velocity_update(
            np.zeros(2), x, x, x, inertia=0.9, c1=1.2, c2=1.8,
            r1=np.full(2, 0.5), r2=np.full(2, 0.5),
        )
        np.testing.assert_array_equal(velocity, 0.0)


class TestSearchSpace:
    def test_decode_rounds_and_exponentiates(self):
        space = SearchSpace(hidden_lo=16, hidden_hi=128, lr_lo=1e-4, lr_hi=1e-1)
        hidden, lr = space.decode(np.array([63.7, -2.0]))
        assert hidden == 64
        assert lr == pytest.approx(1e-2)

    def test_decode_clamps(self):
        space = SearchSpace(hidden_lo=16, hidden_hi=128, lr_lo=1e-4, lr_hi=1e-1)
        hidden, lr = space.decode(np.array([15.4, -9.0]))
        assert hidden == 16
        assert lr == 1e-4

    def test_degenerate_hidden_axis(self):
        space = SearchSpace(hidden_lo=32, hidden_hi=32, lr_lo=1e-3, lr_hi=1e-2)

        def objective(hidden, lr):
            return (math.log10(lr) + 2.5) ** 2

        cfg = PsoConfig(population=5, max_iterations=10, seed=1)
        result = pso_optimize(objective, space, cfg)
        assert result.best_hidden == 32

    def test_inverted_bounds_rejected(self):
        with pytest.raises(DataError):
            SearchSpace(hidden_lo=64, hidden_hi=32)


class TestPsoOptimize:
    def test_decoded_history_within_bounds(self):
        space = SearchSpace(hidden_lo=8, hidden_hi=24, lr_lo=1e-3, lr_hi=1e-1)

        def objective(hidden, lr):
            return (hidden - 10) ** 2 + (math.log10(lr) + 2.0) ** 2

        result = pso_optimize(objective, space, PsoConfig(population=8, max_iterations=12, seed=4))
        for _, _, hidden, lr, _ in result.history:
            assert 8 <= hidden <= 24
            assert 1e-3 <= lr <= 1e-1
        assert result.best_hidden == 10

    def test_infinite_fitness_never_gbest(self):
        space = SearchSpace(hidden_lo=8, hidden_hi=24, lr_lo=1e-3, lr_hi=1e-1)

        def objective(hidden, lr):
            return math.inf if hidden > 12 else float(hidden)

        result = pso_optimize(objective, space, PsoConfig(population=10, max_iterations=10, seed=0))
        assert result.best_hidden <= 12
        assert math.isfinite(result.best_fitness)


class TestFitness:
    @pytest.fixture(scope="class")
    def pairs(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(50, 4, 3))
        y = 0.7 + 0.2 * X[:, -1, 1]
        return split_fitness_pairs(X, y, fit_fraction=0.8)

    def test_deterministic(self, pairs):
        fit_x, fit_y, val_x, val_y = pairs
        a = fitness_of_config(8, 0.01, fit_x, fit_y, val_x, val_y, budget_epochs=10, seed=1)
        b = fitness_of_config(8, 0.01, fit_x, fit_y, val_x, val_y, budget_epochs=10, seed=1)
        assert a == b and math.isfinite(a)

    def test_absurd_rate_maps_to_inf(self, pairs):
        fit_x, fit_y, val_x, val_y = pairs
        bad = fitness_of_config(8, 1e3, fit_x, fit_y, val_x, val_y, budget_epochs=40, seed=0)
        assert bad == math.inf

    def test_zero_error_edge(self, pairs):
        # an untrained all-zero network on all-zero targets scores exactly 0
        fit_x, fit_y, val_x, _ = pairs
        net = initialize_network(4, 3, 0)
        for arr in net.parameter_arrays():
            arr[:] = 0.0
        score = fitness_of_config(
            4, 0.01, fit_x, fit_y, val_x, np.zeros(len(val_x)),
            budget_epochs=0, seed=0, init_net=net,
        )
        assert score == 0.0

    def test_empty_validation_rejected(self, pairs):
        fit_x, fit_y, _, _ = pairs
        with pytest.raises(DataError):
            fitness_of_config(4, 0.01, fit_x, fit_y, fit_x[:0], fit_y[:0], budget_epochs=1)

    def test_split_is_chronological(self):
        X = np.arange(40, dtype=float).reshape(10, 2, 2)
        y = np.arange(10, dtype=float)
        fit_x, fit_y, val_x, val_y = split_fitness_pairs(X, y, fit_fraction=0.8)
        assert len(fit_y) == 8 and len(val_y) == 2
        assert fit_y.max() < val_y.min()
