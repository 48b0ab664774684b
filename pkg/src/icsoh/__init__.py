"""Battery state-of-health prediction from incremental-capacity features.

The pipeline ingests cycling logs, extracts dQ/dV health indicators,
reduces them with a correlation-matrix PCA, and regresses SOH with a
swarm-tuned bidirectional LSTM fused through AdaBoost.R2.
"""

from .boosting import AdaBoostR2, EnsembleModel, ensemble_predict, weighted_median
from .cycling import (
    CommonHis,
    CycleRecord,
    CyclingDataset,
    MinMaxNormalizer,
    compute_cycle_capacity,
    compute_soh,
    extract_common_his,
    normalize_minmax,
    parse_cycling_csv,
)
from .errors import DataError, IcsohError, NumericalError, UsageError
from .features import (
    AreaConfig,
    CorrelationPca,
    DiffConfig,
    HiVector,
    area_hi,
    dimensionless_his,
    ic_difference,
    pearson,
    select_features,
    shape_his,
)
from .ic import IcCurve, SgConfig, compute_ic_curve, detect_peak, savitzky_golay_smooth
from .metrics import MetricReport, compute_metrics
from .network import (
    BiLstmNetwork,
    BiLstmRegressor,
    LstmParams,
    LstmState,
    TrainConfig,
    bilstm_forward,
    gradient_check,
    lstm_step,
    train_bilstm,
)
from .pipeline import PipelineConfig
from .swarm import PsoConfig, SearchSpace, fitness_of_config, pso_minimize, pso_optimize
from .synth import SynthConfig, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "AdaBoostR2",
    "AreaConfig",
    "BiLstmNetwork",
    "BiLstmRegressor",
    "CommonHis",
    "CorrelationPca",
    "CycleRecord",
    "CyclingDataset",
    "DataError",
    "DiffConfig",
    "EnsembleModel",
    "HiVector",
    "IcCurve",
    "IcsohError",
    "LstmParams",
    "LstmState",
    "MetricReport",
    "MinMaxNormalizer",
    "NumericalError",
    "PipelineConfig",
    "PsoConfig",
    "SearchSpace",
    "SgConfig",
    "SynthConfig",
    "TrainConfig",
    "UsageError",
    "area_hi",
    "bilstm_forward",
    "compute_cycle_capacity",
    "compute_ic_curve",
    "compute_metrics",
    "compute_soh",
    "detect_peak",
    "dimensionless_his",
    "ensemble_predict",
    "extract_common_his",
    "fitness_of_config",
    "generate_dataset",
    "gradient_check",
    "ic_difference",
    "lstm_step",
    "normalize_minmax",
    "parse_cycling_csv",
    "pearson",
    "pso_minimize",
    "pso_optimize",
    "savitzky_golay_smooth",
    "select_features",
    "shape_his",
    "train_bilstm",
    "weighted_median",
]
