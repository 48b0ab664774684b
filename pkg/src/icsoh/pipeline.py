"""End-to-end workflow behind the CLI subcommands.

Stages communicate through CSV/JSON files in the output directory:

    ingest   -> dataset.csv, capacity_soh.csv, parse_report.txt
    features -> features.csv, pearson.csv, pca_model.json,
                pca_components.csv [, ic_curves.csv]
    train    -> model/ensemble/*, model/baseline.json, model/pso_trace.csv,
                model/train_meta.json
    predict / eval -> predictions.csv [, metrics.csv]

The split is chronological at ``train_fraction``; every fitted statistic
(min-max ranges, PCA, PSO fitness split) derives from the training portion
only, and persisted artifacts carry a provenance tag recording that.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ._io import atomic_write_df, atomic_write_text
from .boosting import AdaBoostR2, ensemble_from_boost, load_ensemble, save_ensemble
from .cycling import (
    CyclingDataset,
    MinMaxNormalizer,
    parse_cycling_csv,
    serialize_dataset_csv,
)
from .errors import DataError, UsageError
from .features import (
    FEATURE_NAMES,
    AreaConfig,
    CorrelationPca,
    DiffConfig,
    build_feature_table,
    hi_matrix,
    kept_feature_names,
    select_features,
)
from .ic import SgConfig
from .metrics import compute_metrics
from .network import BiLstmRegressor, TrainConfig, load_network, save_network
from .swarm import (
    PsoConfig,
    SearchSpace,
    fitness_of_config,
    pso_optimize,
    split_fitness_pairs,
)
from .synth import SynthConfig, generate_dataset
from .validation import require

INPUT_MODES = ("pca_only", "pca_plus_common")
COMMON_HI_COLUMNS = ("ccct_s", "cvct_s", "ccdt_s")


@dataclass
class PipelineConfig:
    """Flat run configuration; config-file keys mirror these field names."""

    # data source: a CSV path, or the synthetic generator when absent
    data_csv: str = ""
    battery_id: str = ""
    nominal_capacity_ah: float = 1.1
    charge_cutoff_v: float = 4.2
    synth_n_cycles: int = 900
    synth_fade_linear: float = 3.5e-4
    synth_fade_accel_onset: int = 600
    synth_fade_accel_rate: float = 6.0e-4
    synth_recovery_every: int = 120
    synth_recovery_magnitude: float = 0.008
    synth_noise_sigma: float = 0.003
    # feature extraction
    grid_step_v: float = 0.005
    sg_window: int = 9
    sg_poly_order: int = 3
    area_upper_offset_v: float = 0.42
    area_lower_offset_v: float = -0.38
    diff_position3_v: float = 3.70
    diff_position2_v: float = 3.10
    peak_search_lo_v: float = 3.6
    peak_search_hi_v: float = 4.0
    drop_list: str = "mps,pf,cf,kur"
    pca_dims: int = 3
    input_mode: str = "pca_plus_common"
    dump_ic_curves: bool = False
    # windowing and training schedule
    window_length: int = 5
    train_fraction: float = 0.5
    max_epochs: int = 500
    batch_size: int = 32
    lr_drop_period: int = 350
    lr_drop_factor: float = 0.01
    baseline_hidden: int = 60
    baseline_lr: float = 0.01
    # particle swarm search
    pso_population: int = 20
    pso_iterations: int = 10
    pso_c1: float = 1.2
    pso_c2: float = 1.8
    pso_inertia_start: float = 1.1
    pso_inertia_end: float = 0.2
    pso_budget_epochs: int = 60
    hidden_lo: int = 16
    hidden_hi: int = 128
    lr_lo: float = 1e-4
    lr_hi: float = 1e-1
    # fusion
    ensemble_count: int = 10
    # run control
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        require(0.0 < self.train_fraction < 1.0, "train_fraction must be in (0, 1)")
        require(self.pca_dims >= 1, "pca_dims must be >= 1")
        n_kept = len(kept_feature_names(self.drop_names()))
        require(self.pca_dims <= n_kept, f"pca_dims must be <= {n_kept} kept features")
        if self.input_mode not in INPUT_MODES:
            raise UsageError(
                f"input_mode must be one of {INPUT_MODES}, got '{self.input_mode}'"
            )
        require(self.window_length >= 1, "window_length must be >= 1")

    # -- config-file round trip --------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise UsageError(f"no such config file: {path}")
        values: dict[str, object] = {}
        field_types = {f.name: f.type for f in dataclasses.fields(cls)}
        defaults = cls.__dataclass_fields__
        for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in field_types:
                raise UsageError(f"{path}:{lineno}: unknown config key '{key}'")
            values[key] = _coerce(value, type(defaults[key].default))
        return cls(**values)

    def to_text(self) -> str:
        lines = [
            f"{f.name} = {getattr(self, f.name)}"
            for f in dataclasses.fields(self)
        ]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- sub-configs ----------------------------------------------------------

    def drop_names(self) -> list[str]:
        return [name.strip() for name in self.drop_list.split(",") if name.strip()]

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            n_cycles=self.synth_n_cycles,
            nominal_Ah=self.nominal_capacity_ah,
            fade_linear=self.synth_fade_linear,
            fade_accel_onset=self.synth_fade_accel_onset,
            fade_accel_rate=self.synth_fade_accel_rate,
            recovery_every=self.synth_recovery_every,
            recovery_magnitude=self.synth_recovery_magnitude,
            noise_sigma=self.synth_noise_sigma,
            seed=self.seed,
        )

    def sg_config(self) -> SgConfig:
        return SgConfig(window=self.sg_window, poly_order=self.sg_poly_order)

    def area_config(self) -> AreaConfig:
        return AreaConfig(
            upper_offset_V=self.area_upper_offset_v,
            lower_offset_V=self.area_lower_offset_v,
        )

    def diff_config(self) -> DiffConfig:
        return DiffConfig(
            position3_V=self.diff_position3_v, position2_V=self.diff_position2_v
        )

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            max_epochs=self.max_epochs,
            batch_size=self.batch_size,
            lr_drop_period=self.lr_drop_period,
            lr_drop_factor=self.lr_drop_factor,
            seed=seed,
            window_length=self.window_length,
        )

    def pso_config(self, seed: int) -> PsoConfig:
        return PsoConfig(
            population=self.pso_population,
            c1=self.pso_c1,
            c2=self.pso_c2,
            inertia_start=self.pso_inertia_start,
            inertia_end=self.pso_inertia_end,
            max_iterations=self.pso_iterations,
            seed=seed,
        )

    def search_space(self) -> SearchSpace:
        return SearchSpace(
            hidden_lo=self.hidden_lo,
            hidden_hi=self.hidden_hi,
            lr_lo=self.lr_lo,
            lr_hi=self.lr_hi,
        )

    def paths(self) -> "OutputPaths":
        return OutputPaths(Path(self.out_dir))


def _coerce(text: str, kind: type):
    if kind is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise UsageError(f"expected boolean, got '{text}'")
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise UsageError(f"expected {kind.__name__}, got '{text}'") from None
    return text


@dataclass(frozen=True)
class OutputPaths:
    root: Path

    @property
    def dataset_csv(self) -> Path:
        return self.root / "dataset.csv"

    @property
    def capacity_soh_csv(self) -> Path:
        return self.root / "capacity_soh.csv"

    @property
    def parse_report_txt(self) -> Path:
        return self.root / "parse_report.txt"

    @property
    def features_csv(self) -> Path:
        return self.root / "features.csv"

    @property
    def pearson_csv(self) -> Path:
        return self.root / "pearson.csv"

    @property
    def pca_model_json(self) -> Path:
        return self.root / "pca_model.json"

    @property
    def pca_components_csv(self) -> Path:
        return self.root / "pca_components.csv"

    @property
    def ic_curves_csv(self) -> Path:
        return self.root / "ic_curves.csv"

    @property
    def model_dir(self) -> Path:
        return self.root / "model"

    @property
    def ensemble_dir(self) -> Path:
        return self.model_dir / "ensemble"

    @property
    def baseline_json(self) -> Path:
        return self.model_dir / "baseline.json"

    @property
    def pso_trace_csv(self) -> Path:
        return self.model_dir / "pso_trace.csv"

    @property
    def train_meta_json(self) -> Path:
        return self.model_dir / "train_meta.json"

    @property
    def predictions_csv(self) -> Path:
        return self.root / "predictions.csv"

    @property
    def metrics_csv(self) -> Path:
        return self.root / "metrics.csv"


def _derived_seeds(config: PipelineConfig) -> dict[str, int]:
    state = np.random.SeedSequence(config.seed).generate_state(4)
    return {
        "pso": int(state[0]),
        "boost": int(state[1]),
        "baseline": int(state[2]),
        "fitness": int(state[3]),
    }


# ---------------------------------------------------------------------------
# Stage 1: ingest
# ---------------------------------------------------------------------------


def load_or_generate(config: PipelineConfig) -> tuple[CyclingDataset, str]:
    """Dataset from the configured CSV, or synthesized when no path is set."""
    if config.data_csv:
        dataset, report = parse_cycling_csv(
            config.data_csv,
            battery_id=config.battery_id,
            nominal_capacity_Ah=config.nominal_capacity_ah,
            charge_cutoff_V=config.charge_cutoff_v,
        )
        return dataset, str(report)
    dataset = generate_dataset(config.synth_config())
    return dataset, f"source: synthetic (seed {config.seed})\nrows skipped: 0"


def cmd_ingest(config: PipelineConfig, force_synth: bool = False) -> dict:
    """Parse or generate the dataset and write the canonical files."""
    if force_synth:
        dataset = generate_dataset(config.synth_config())
        report_text = f"source: synthetic (seed {config.seed})\nrows skipped: 0"
    else:
        dataset, report_text = load_or_generate(config)
    paths = config.paths()
    serialize_dataset_csv(dataset, paths.dataset_csv)
    atomic_write_df(
        paths.capacity_soh_csv,
        pd.DataFrame(
            {
                "cycle": dataset.cycle_indices,
                "capacity_ah": dataset.capacities_Ah,
                "soh": dataset.soh,
            }
        ),
    )
    atomic_write_text(paths.parse_report_txt, report_text + "\n")
    return {
        "battery_id": dataset.battery_id,
        "n_cycles": len(dataset),
        "capacity_min_ah": float(dataset.capacities_Ah.min()),
        "capacity_max_ah": float(dataset.capacities_Ah.max()),
    }


def _read_ingested(config: PipelineConfig) -> CyclingDataset:
    paths = config.paths()
    if not paths.dataset_csv.exists():
        raise DataError(f"no ingested dataset at {paths.dataset_csv}; run ingest first")
    dataset, _ = parse_cycling_csv(
        paths.dataset_csv,
        battery_id=config.battery_id or "dataset",
        nominal_capacity_Ah=config.nominal_capacity_ah,
        charge_cutoff_V=config.charge_cutoff_v,
    )
    return dataset


# ---------------------------------------------------------------------------
# Stage 2: features
# ---------------------------------------------------------------------------


def cmd_features(config: PipelineConfig) -> dict:
    """Compute IC curves, the HI table, the screening report and the PCA."""
    dataset = _read_ingested(config)
    paths = config.paths()
    his, common, curves = build_feature_table(
        dataset,
        grid_step_V=config.grid_step_v,
        sg_cfg=config.sg_config(),
        area_cfg=config.area_config(),
        diff_cfg=config.diff_config(),
        search_lo_V=config.peak_search_lo_v,
        search_hi_V=config.peak_search_hi_v,
        keep_curves=config.dump_ic_curves,
    )

    table = hi_matrix(his)
    frame = pd.DataFrame(table, columns=list(FEATURE_NAMES))
    frame.insert(0, "cycle", dataset.cycle_indices)
    for j, name in enumerate(COMMON_HI_COLUMNS):
        frame[name] = [c.as_array()[j] for c in common]
    frame["capacity_ah"] = dataset.capacities_Ah
    frame["soh"] = dataset.soh
    atomic_write_df(paths.features_csv, frame)

    drop = config.drop_names()
    kept_matrix, correlations = select_features(table, dataset.capacities_Ah, drop)
    atomic_write_df(
        paths.pearson_csv,
        pd.DataFrame(
            {
                "feature": list(FEATURE_NAMES),
                "pearson_vs_capacity": [correlations[n] for n in FEATURE_NAMES],
                "dropped": [n in drop for n in FEATURE_NAMES],
            }
        ),
    )

    n_train = _train_row_count(len(dataset), config.train_fraction)
    pca = CorrelationPca(n_components=config.pca_dims).fit(kept_matrix[:n_train])
    payload = pca.to_dict()
    payload["provenance"] = {
        "fitted_on": "training split",
        "train_rows": n_train,
        "train_fraction": config.train_fraction,
    }
    atomic_write_text(paths.pca_model_json, json.dumps(payload, indent=1))

    components = pca.transform(kept_matrix)
    comp_frame = pd.DataFrame(
        components, columns=[f"pc{k + 1}" for k in range(config.pca_dims)]
    )
    comp_frame.insert(0, "cycle", dataset.cycle_indices)
    atomic_write_df(paths.pca_components_csv, comp_frame)

    if config.dump_ic_curves:
        rows = []
        for curve in curves:
            rows.append(
                pd.DataFrame(
                    {
                        "cycle": np.full(len(curve), curve.cycle_index),
                        "voltage_V": curve.voltage_grid_V,
                        "ic_AhPerV": curve.ic_AhPerV,
                    }
                )
            )
        atomic_write_df(paths.ic_curves_csv, pd.concat(rows, ignore_index=True))

    return {
        "n_cycles": len(dataset),
        "dropped_features": sorted(drop),
        "contribution_rates": [float(r) for r in pca.contribution_rates_],
    }


def _train_row_count(n: int, train_fraction: float) -> int:
    return int(np.floor(n * train_fraction))


# ---------------------------------------------------------------------------
# Stage 3: train
# ---------------------------------------------------------------------------


def build_windows(inputs: np.ndarray, targets: np.ndarray, window: int):
    """Sliding windows of ``window`` consecutive cycles; the target is the
    SOH at each window's last cycle. Returns (sequences, targets, ends)."""
    n = len(targets)
    require(n >= window, "fewer cycles than the window length")
    ends = np.arange(window - 1, n)
    sequences = np.stack([inputs[e - window + 1 : e + 1] for e in ends])
    return sequences, targets[ends], ends


def _assemble_inputs(config: PipelineConfig, features: pd.DataFrame, pca: CorrelationPca):
    """PCA components (plus normalized common HIs) as the raw input matrix."""
    kept = features[kept_feature_names(config.drop_names())].to_numpy(dtype=float)
    components = pca.transform(kept)
    if config.input_mode == "pca_only":
        return components
    common = features[list(COMMON_HI_COLUMNS)].to_numpy(dtype=float)
    return np.hstack([components, common])


def _load_feature_artifacts(config: PipelineConfig) -> tuple[pd.DataFrame, CorrelationPca]:
    paths = config.paths()
    if not paths.features_csv.exists():
        raise DataError(f"no feature table at {paths.features_csv}; run features first")
    if not paths.pca_model_json.exists():
        raise DataError(f"no PCA model at {paths.pca_model_json}; run features first")
    features = pd.read_csv(paths.features_csv)
    pca = CorrelationPca.from_dict(json.loads(paths.pca_model_json.read_text()))
    return features, pca


def cmd_train(config: PipelineConfig) -> dict:
    """PSO-search hyperparameters, boost the committee, train the baseline."""
    features, pca = _load_feature_artifacts(config)
    paths = config.paths()
    seeds = _derived_seeds(config)

    n = len(features)
    n_train = _train_row_count(n, config.train_fraction)
    if n_train < config.window_length:
        raise DataError(
            f"training portion ({n_train} cycles) too small for one "
            f"window of length {config.window_length}"
        )
    require(n_train < n, "empty test portion")

    raw_inputs = _assemble_inputs(config, features, pca)
    soh = features["soh"].to_numpy(dtype=float)

    scaler = MinMaxNormalizer().fit(raw_inputs[:n_train])
    inputs = scaler.transform(raw_inputs)

    sequences, targets, ends = build_windows(inputs, soh, config.window_length)
    train_mask = ends < n_train
    train_seqs, train_targets = sequences[train_mask], targets[train_mask]

    fit_seqs, fit_targets, val_seqs, val_targets = split_fitness_pairs(
        train_seqs, train_targets
    )
    train_cfg = config.train_config(seed=seeds["fitness"])

    def objective(hidden: int, lr: float) -> float:
        return fitness_of_config(
            hidden,
            lr,
            fit_seqs,
            fit_targets,
            val_seqs,
            val_targets,
            budget_epochs=config.pso_budget_epochs,
            seed=seeds["fitness"],
            base_config=train_cfg,
        )

    tuning = pso_optimize(objective, config.search_space(), config.pso_config(seeds["pso"]))

    atomic_write_df(
        paths.pso_trace_csv,
        pd.DataFrame(
            tuning.history,
            columns=["iteration", "particle", "hidden", "lr", "fitness"],
        ),
    )

    boost = AdaBoostR2(
        estimator=BiLstmRegressor(
            hidden_size=tuning.best_hidden,
            learning_rate=tuning.best_lr,
            train_config=train_cfg,
        ),
        n_estimators=config.ensemble_count,
        random_state=seeds["boost"],
    ).fit(train_seqs, train_targets)
    ensemble = ensemble_from_boost(boost)

    baseline = BiLstmRegressor(
        hidden_size=config.baseline_hidden,
        learning_rate=config.baseline_lr,
        train_config=train_cfg,
        random_state=seeds["baseline"],
    ).fit(train_seqs, train_targets)

    provenance = {
        "fitted_on": "training split",
        "train_rows": n_train,
        "train_fraction": config.train_fraction,
        "train_cycle_max": int(features["cycle"].iloc[n_train - 1]),
        "test_cycle_min": int(features["cycle"].iloc[n_train]),
    }
    normalization = {"input_ranges": scaler.ranges(), "provenance": provenance}
    save_ensemble(
        ensemble,
        paths.ensemble_dir,
        normalization=normalization,
        config_hash=config.config_hash(),
        extra={
            "best_hidden": tuning.best_hidden,
            "best_lr": tuning.best_lr,
            "best_fitness": tuning.best_fitness,
        },
    )
    save_network(
        baseline.network_,
        paths.baseline_json,
        normalization=normalization,
        config={"hidden_size": config.baseline_hidden, "lr": config.baseline_lr},
    )
    meta = {
        "config_hash": config.config_hash(),
        "n_cycles": n,
        "n_train_cycles": n_train,
        "n_train_pairs": int(train_mask.sum()),
        "window_length": config.window_length,
        "best_hidden": tuning.best_hidden,
        "best_lr": tuning.best_lr,
        "best_fitness": tuning.best_fitness,
        "provenance": provenance,
    }
    atomic_write_text(paths.train_meta_json, json.dumps(meta, indent=1))
    return meta


# ---------------------------------------------------------------------------
# Stage 4: predict / evaluate
# ---------------------------------------------------------------------------


def cmd_predict_eval(config: PipelineConfig, write_metrics: bool = True) -> dict:
    """Predict the test portion with ensemble and baseline; report metrics."""
    features, pca = _load_feature_artifacts(config)
    paths = config.paths()
    if not paths.train_meta_json.exists():
        raise DataError(f"no trained model at {paths.model_dir}; run train first")
    meta = json.loads(paths.train_meta_json.read_text())
    ensemble, manifest = load_ensemble(paths.ensemble_dir)
    baseline_net, _ = load_network(paths.baseline_json)

    n = len(features)
    n_train = int(meta["n_train_cycles"])
    require(n == int(meta["n_cycles"]), "feature table changed since training")

    raw_inputs = _assemble_inputs(config, features, pca)
    ranges = manifest["normalization"]["input_ranges"]
    lows = np.array([lo for lo, _ in ranges])
    highs = np.array([hi for _, hi in ranges])
    inputs = np.clip((raw_inputs - lows) / (highs - lows), 0.0, 1.0)
    soh = features["soh"].to_numpy(dtype=float)

    sequences, targets, ends = build_windows(inputs, soh, int(meta["window_length"]))
    test_mask = ends >= n_train
    test_seqs, test_truth, test_ends = (
        sequences[test_mask],
        targets[test_mask],
        ends[test_mask],
    )
    require(len(test_truth) > 0, "no test cycles beyond the training portion")

    pred_ensemble = ensemble.predict_many(test_seqs)
    pred_baseline = baseline_net.predict_many(test_seqs)

    cycles = features["cycle"].to_numpy()[test_ends]
    atomic_write_df(
        paths.predictions_csv,
        pd.DataFrame(
            {
                "cycle": cycles,
                "soh_true": test_truth,
                "soh_pred_ensemble": pred_ensemble,
                "soh_pred_baseline": pred_baseline,
            }
        ),
    )

    summary: dict = {"n_test": int(len(test_truth))}
    if write_metrics:
        battery = config.battery_id or "synthetic"
        rows = []
        for model_name, preds in (
            ("pso_bilstm_adaboost", pred_ensemble),
            ("bilstm_baseline", pred_baseline),
        ):
            report = compute_metrics(test_truth, preds)
            rows.append(
                {
                    "battery": battery,
                    "train_fraction": config.train_fraction,
                    "model": model_name,
                    "rmse": report.rmse,
                    "mae": report.mae,
                    "mape_percent": report.mape_percent,
                    "mse": report.mse,
                    "n": report.n,
                }
            )
            summary[model_name] = report
        atomic_write_df(paths.metrics_csv, pd.DataFrame(rows))
    return summary


def cmd_all(config: PipelineConfig) -> dict:
    """Run ingest, features, train and eval in sequence."""
    summary = {"ingest": cmd_ingest(config)}
    summary["features"] = cmd_features(config)
    summary["train"] = cmd_train(config)
    summary["eval"] = cmd_predict_eval(config)
    return summary
