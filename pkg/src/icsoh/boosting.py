"""AdaBoost.R2 fusion of weak regressors with weighted-median combination.

Each round draws a weighted bootstrap resample, fits a fresh clone of the
base estimator on it, and scores every training sample: linear loss
l_i = |err_i| / max_j |err_j|, average loss Lbar = sum(w_i * l_i),
beta = Lbar / (1 - Lbar). Sample weights update as w_i *= beta^(1 - l_i)
(then renormalize) and the learner joins the committee with weight
ln(1/beta). A round with Lbar >= 0.5 stops boosting and is discarded; a
near-perfect round (Lbar < 1e-10) joins with weight ln(1e10) and stops.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, clone

from ._io import atomic_write_text
from .errors import DataError
from .network import BiLstmNetwork, load_network, save_network
from .validation import require

logger = logging.getLogger(__name__)

PERFECT_LOSS_EPS = 1e-10
PERFECT_WEIGHT = float(np.log(1e10))


def weighted_median(values, weights) -> float:
    """First value (in sorted order) whose cumulative weight reaches half
    the total."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    require(len(values) == len(weights) and len(values) > 0, "empty or mismatched input")
    order = np.argsort(values, kind="stable")
    cdf = np.cumsum(weights[order])
    idx = int(np.searchsorted(cdf, 0.5 * cdf[-1]))
    return float(values[order][idx])


def _median_predict(per_learner: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Column-wise weighted median of an (n_learners, n_samples) matrix."""
    order = np.argsort(per_learner, axis=0, kind="stable")
    cdf = np.cumsum(weights[order], axis=0)
    half = 0.5 * cdf[-1, :]
    pick = (cdf >= half[None, :]).argmax(axis=0)
    cols = np.arange(per_learner.shape[1])
    return per_learner[order[pick, cols], cols]


class AdaBoostR2(BaseEstimator, RegressorMixin):
    """Boosted committee of clones of ``estimator``.

    The base estimator needs fit/predict; if it exposes a ``random_state``
    parameter each round's clone gets a fresh seed derived from this
    estimator's ``random_state``.
    """

    def __init__(self, estimator, n_estimators: int = 10, random_state: int = 0):
        self.estimator = estimator
        self.n_estimators = n_estimators
        self.random_state = random_state

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n = len(y)
        require(n >= 1, "training set must be non-empty")
        require(self.n_estimators >= 1, "n_estimators must be >= 1")

        root = np.random.SeedSequence(self.random_state)
        resample_rng = np.random.default_rng(root.spawn(1)[0])
        round_seeds = root.generate_state(self.n_estimators)

        weights = np.full(n, 1.0 / n)
        self.estimators_ = []
        self.estimator_weights_ = []
        self.estimator_errors_ = []
        self.fallback_used_ = False
        trained: list[tuple[float, object]] = []

        for t in range(self.n_estimators):
            idx = resample_rng.choice(n, size=n, replace=True, p=weights)
            learner = clone(self.estimator)
            if "random_state" in learner.get_params():
                learner.set_params(random_state=int(round_seeds[t]))
            learner.fit(X[idx], y[idx])

            err = np.abs(np.asarray(learner.predict(X), dtype=float) - y)
            err_max = float(err.max())
            losses = err / err_max if err_max > 0 else np.zeros(n)
            avg_loss = float(np.sum(weights * losses))
            trained.append((avg_loss, learner))

            if avg_loss < PERFECT_LOSS_EPS:
                self.estimators_.append(learner)
                self.estimator_weights_.append(PERFECT_WEIGHT)
                self.estimator_errors_.append(avg_loss)
                break
            if avg_loss >= 0.5:
                break  # discard this round and stop boosting

            beta = avg_loss / (1.0 - avg_loss)
            self.estimators_.append(learner)
            self.estimator_weights_.append(float(np.log(1.0 / beta)))
            self.estimator_errors_.append(avg_loss)

            weights = weights * beta ** (1.0 - losses)
            total = weights.sum()
            require(total > 0 and np.isfinite(total), "degenerate sample weights")
            weights = weights / total

        if not self.estimators_:
            self.fallback_used_ = True
            best_loss, best = min(trained, key=lambda pair: pair[0])
            logger.warning(
                "all boosting rounds discarded (best average loss %.3f); "
                "falling back to the single best learner",
                best_loss,
            )
            self.estimators_ = [best]
            self.estimator_weights_ = [1.0]
            self.estimator_errors_ = [best_loss]

        self.estimator_weights_ = np.asarray(self.estimator_weights_)
        self.estimator_errors_ = np.asarray(self.estimator_errors_)
        return self

    def predict(self, X):
        if not getattr(self, "estimators_", None):
            raise DataError("AdaBoostR2 is not fitted")
        per_learner = np.vstack(
            [np.asarray(est.predict(X), dtype=float) for est in self.estimators_]
        )
        return _median_predict(per_learner, self.estimator_weights_)


@dataclass(frozen=True)
class EnsembleModel:
    """Weighted committee of trained BiLSTM networks."""

    networks: tuple[BiLstmNetwork, ...]
    learner_weights: np.ndarray

    def __post_init__(self):
        require(len(self.networks) >= 1, "ensemble needs at least one learner")
        require(
            len(self.networks) == len(self.learner_weights),
            "learner/weight count mismatch",
        )
        require(
            bool(np.all(np.isfinite(self.learner_weights)))
            and bool(np.all(np.asarray(self.learner_weights) > 0)),
            "learner weights must be finite and positive",
        )

    @property
    def count(self) -> int:
        return len(self.networks)

    def predict(self, sequence) -> float:
        preds = [net.predict(sequence) for net in self.networks]
        return weighted_median(preds, self.learner_weights)

    def predict_many(self, sequences) -> np.ndarray:
        per_learner = np.vstack([net.predict_many(sequences) for net in self.networks])
        return _median_predict(per_learner, np.asarray(self.learner_weights))


def ensemble_from_boost(boost: AdaBoostR2) -> EnsembleModel:
    """Extract the trained networks from a fitted AdaBoostR2 over
    BiLstmRegressor learners."""
    networks = []
    for est in boost.estimators_:
        net = getattr(est, "network_", None)
        if net is None:
            raise DataError("ensemble learners carry no trained network")
        networks.append(net)
    return EnsembleModel(
        networks=tuple(networks),
        learner_weights=np.asarray(boost.estimator_weights_, dtype=float),
    )


def ensemble_predict(model, sequence) -> float:
    """Weighted-median prediction of one sequence.

    Accepts an :class:`EnsembleModel` or a fitted :class:`AdaBoostR2`.
    """
    if isinstance(model, EnsembleModel):
        return model.predict(sequence)
    preds = [float(np.asarray(est.predict(np.asarray(sequence)[None]))[0])
             for est in model.estimators_]
    return weighted_median(preds, model.estimator_weights_)


def save_ensemble(
    model: EnsembleModel,
    directory: str | Path,
    normalization: dict | None = None,
    config_hash: str | None = None,
    extra: dict | None = None,
) -> None:
    """Persist as one JSON file per learner plus a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for k, net in enumerate(model.networks):
        name = f"learner_{k:02d}.json"
        save_network(net, directory / name)
        files.append(name)
    manifest = {
        "learner_files": files,
        "learner_weights": [float(w) for w in model.learner_weights],
        "normalization": normalization,
        "config_hash": config_hash,
    }
    if extra:
        manifest.update(extra)
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=1))


def load_ensemble(directory: str | Path) -> tuple[EnsembleModel, dict]:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"no ensemble manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    networks = tuple(
        load_network(directory / name)[0] for name in manifest["learner_files"]
    )
    model = EnsembleModel(
        networks=networks,
        learner_weights=np.asarray(manifest["learner_weights"], dtype=float),
    )
    return model, manifest
