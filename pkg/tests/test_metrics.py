"""Error-metric definitions and their algebraic properties."""

import math

import numpy as np
import pytest

from icsoh.errors import DataError
from icsoh.metrics import compute_metrics


class TestHandCases:
    def test_perfect_prediction(self):
        report = compute_metrics([0.9, 0.8, 0.7], [0.9, 0.8, 0.7])
        assert (report.rmse, report.mae, report.mse) == (0.0, 0.0, 0.0)
        assert report.mape_percent == 0.0
        assert report.n == 3

    def test_unit_errors(self):
        report = compute_metrics([1.0, 1.0], [0.0, 2.0])
        assert report.mse == pytest.approx(1.0, abs=1e-15)
        assert report.rmse == pytest.approx(1.0, abs=1e-15)
        assert report.mae == pytest.approx(1.0, abs=1e-15)
        assert report.mape_percent == pytest.approx(100.0, abs=1e-12)

    def test_half_errors(self):
        report = compute_metrics([2.0, 4.0], [1.0, 4.0])
        assert report.mae == pytest.approx(0.5, abs=1e-15)
        assert report.mse == pytest.approx(0.5, abs=1e-15)
        assert report.rmse == pytest.approx(math.sqrt(0.5), abs=1e-12)
        assert report.mape_percent == pytest.approx(25.0, abs=1e-12)


class TestEdges:
    def test_length_mismatch(self):
        with pytest.raises(DataError):
            compute_metrics([1.0, 2.0], [1.0])

    def test_empty(self):
        with pytest.raises(DataError):
            compute_metrics([], [])

    def test_zero_truth_drops_mape_only(self):
        report = compute_metrics([0.0, 1.0], [0.5, 1.0])
        assert report.mape_percent is None
        assert report.mse == pytest.approx(0.125)


class TestProperties:
    def test_rmse_squared_is_mse(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            x = rng.uniform(0.5, 1.2, size=30)
            xhat = x + rng.normal(scale=0.05, size=30)
            report = compute_metrics(x, xhat)
            assert report.rmse**2 == pytest.approx(report.mse, rel=1e-12)

    def test_mae_never_exceeds_rmse(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            x = rng.uniform(0.5, 1.2, size=17)
            xhat = x + rng.normal(scale=0.1, size=17)
            report = compute_metrics(x, xhat)
            assert report.mae <= report.rmse + 1e-15

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0.5, 1.2, size=20)
        xhat = x + rng.normal(scale=0.1, size=20)
        perm = rng.permutation(20)
        a = compute_metrics(x, xhat)
        b = compute_metrics(x[perm], xhat[perm])
        assert a.rmse == pytest.approx(b.rmse, rel=1e-12)
        assert a.mae == pytest.approx(b.mae, rel=1e-12)
        assert a.mape_percent == pytest.approx(b.mape_percent, rel=1e-12)

    def test_scaling(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0.5, 1.2, size=20)
        xhat = x + rng.normal(scale=0.1, size=20)
        lam = 4.5
        base = compute_metrics(x, xhat)
        scaled = compute_metrics(lam * x, lam * xhat)
        assert scaled.rmse == pytest.approx(lam * base.rmse, rel=1e-12)
        assert scaled.mae == pytest.approx(lam * base.mae, rel=1e-12)
        assert scaled.mape_percent == pytest.approx(base.mape_percent, rel=1e-12)
