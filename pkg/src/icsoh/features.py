"""Per-cycle health indicators derived from the discharge IC curve.

Thirteen indicators are computed per cycle:

* ``area``      — charge under the curve between peak-anchored bounds
                  (peak voltage - 0.38 V to peak voltage + 0.42 V), in Ah;
* ``a4``        — ic(3.70 V) - ic(3.10 V), the best-correlated of the fixed
                  two-point differences (alternatives selectable via
                  :class:`DiffConfig` presets), in Ah/V;
* ``cf, pf, mf, wf, kur`` — dimensionless statistics of the ic sequence
                  (crest, pulse, margin and waveform factors, kurtosis
                  excess);
* ``dmv``       — mean ic minus the first cycle's mean ic;
* ``p, pcv, ppv`` — peak value, its voltage, and their ratio;
* ``mps``       — largest adjacent-bin upward slope;
* ``arc``       — mean absolute adjacent-bin slope.

Screening drops mps/pf/cf/kur by default; the surviving nine go through a
correlation-matrix PCA fitted on the training split.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .cycling import CommonHis, CyclingDataset, extract_common_his
from .errors import DataError
from .ic import (
    PEAK_SEARCH_HI_V,
    PEAK_SEARCH_LO_V,
    IcCurve,
    SgConfig,
    compute_ic_curve,
    detect_peak,
    smooth_curve,
)
from .validation import as_float_1d, as_float_2d, check_equal_length, require

FEATURE_NAMES = (
    "area",
    "a4",
    "cf",
    "pf",
    "mf",
    "wf",
    "kur",
    "dmv",
    "p",
    "mps",
    "ppv",
    "arc",
    "pcv",
)

DEFAULT_DROP = frozenset({"mps", "pf", "cf", "kur"})

# Fixed voltage pairs (position3, position2) for the two-point difference,
# keyed by variant name; a4 is the default.
DIFF_PRESETS: Mapping[str, tuple[float, float]] = {
    "a1": (3.90, 3.40),
    "a2": (3.80, 3.20),
    "a3": (3.74, 3.16),
    "a4": (3.70, 3.10),
    "a5": (3.68, 3.12),
    "a6": (3.52, 3.48),
}


@dataclass(frozen=True)
class AreaConfig:
    """Integration bounds relative to the detected peak voltage."""

    upper_offset_V: float = 0.42
    lower_offset_V: float = -0.38

    def __post_init__(self):
        require(self.upper_offset_V > self.lower_offset_V, "upper offset must exceed lower")


@dataclass(frozen=True)
class DiffConfig:
    """Fixed voltages for the two-point IC difference."""

    position3_V: float = 3.70
    position2_V: float = 3.10

    def __post_init__(self):
        require(self.position3_V > self.position2_V, "position3 must exceed position2")

    @classmethod
    def preset(cls, name: str) -> "DiffConfig":
        if name not in DIFF_PRESETS:
            raise DataError(f"unknown difference preset '{name}'")
        p3, p2 = DIFF_PRESETS[name]
        return cls(position3_V=p3, position2_V=p2)


@dataclass(frozen=True)
class HiVector:
    """One cycle's thirteen IC-derived health indicators."""

    cycle_index: int
    area: float
    a4: float
    cf: float
    pf: float
    mf: float
    wf: float
    kur: float
    dmv: float
    p: float
    mps: float
    ppv: float
    arc: float
    pcv: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


def area_hi(curve: IcCurve, position1_V: float, cfg: AreaConfig = AreaConfig()) -> float:
    """Trapezoidal integral of ic between the peak-anchored bounds, clipped
    to the grid span. Endpoint values are interpolated."""
    grid = curve.voltage_grid_V
    lo = max(position1_V + cfg.lower_offset_V, float(grid[0]))
    hi = min(position1_V + cfg.upper_offset_V, float(grid[-1]))
    if hi <= lo or int(((grid >= lo) & (grid <= hi)).sum()) < 2:
        raise DataError("integration bounds do not overlap the curve grid in 2+ points")
    inside = (grid > lo) & (grid < hi)
    nodes = np.concatenate(([lo], grid[inside], [hi]))
    values = np.interp(nodes, grid, curve.ic_AhPerV)
    return float(np.trapezoid(values, nodes))


def ic_difference(curve: IcCurve, cfg: DiffConfig = DiffConfig()) -> float:
    """ic(position3) - ic(position2), both linearly interpolated."""
    grid = curve.voltage_grid_V
    for v in (cfg.position3_V, cfg.position2_V):
        if v < grid[0] or v > grid[-1]:
            raise DataError(f"voltage {v} V outside grid span [{grid[0]}, {grid[-1]}]")
    at3 = float(np.interp(cfg.position3_V, grid, curve.ic_AhPerV))
    at2 = float(np.interp(cfg.position2_V, grid, curve.ic_AhPerV))
    return at3 - at2


def dimensionless_his(ic_values) -> tuple[float, float, float, float, float]:
    """Crest, pulse, margin, waveform factors and kurtosis excess."""
    a = as_float_1d(ic_values, "ic_values")
    abs_a = np.abs(a)
    peak = float(abs_a.max())
    if peak == 0.0:
        raise DataError("all-zero sequence has no dimensionless statistics")
    mean_sq = float(np.mean(a**2))
    rms = mean_sq**0.5
    mean_abs = float(np.mean(abs_a))
    root_mean = float(np.mean(np.sqrt(abs_a))) ** 2
    cf = peak / rms
    pf = peak / mean_abs
    mf = peak / root_mean
    wf = rms / mean_abs
    kur = float(np.mean(a**4)) / mean_sq**2 - 3.0
    return cf, pf, mf, wf, kur


def shape_his(
    curve: IcCurve, first_cycle_curve: IcCurve
) -> tuple[float, float, float, float, float, float]:
    """(dmv, p, mps, ppv, arc, pcv) relative to the first usable cycle."""
    ic = curve.ic_AhPerV
    step = curve.grid_step_V
    best = int(np.argmax(ic))  # first maximum = lowest voltage on ties
    p = float(ic[best])
    pcv = float(curve.voltage_grid_V[best])
    slopes = np.diff(ic) / step
    mps = float(slopes.max())
    arc = float(np.mean(np.abs(slopes)))
    dmv = float(np.mean(ic)) - float(np.mean(first_cycle_curve.ic_AhPerV))
    ppv = p / pcv
    return dmv, p, mps, ppv, arc, pcv


def compute_hi_vector(
    curve: IcCurve,
    first_cycle_curve: IcCurve,
    area_cfg: AreaConfig = AreaConfig(),
    diff_cfg: DiffConfig = DiffConfig(),
    search_lo_V: float = PEAK_SEARCH_LO_V,
    search_hi_V: float = PEAK_SEARCH_HI_V,
) -> HiVector:
    """All thirteen indicators for one (already smoothed) curve."""
    position1, _ = detect_peak(curve, search_lo_V, search_hi_V)
    area = area_hi(curve, position1, area_cfg)
    a4 = ic_difference(curve, diff_cfg)
    cf, pf, mf, wf, kur = dimensionless_his(curve.ic_AhPerV)
    dmv, p, mps, ppv, arc, pcv = shape_his(curve, first_cycle_curve)
    return HiVector(
        cycle_index=curve.cycle_index,
        area=area, a4=a4, cf=cf, pf=pf, mf=mf, wf=wf, kur=kur,
        dmv=dmv, p=p, mps=mps, ppv=ppv, arc=arc, pcv=pcv,
    )


def build_feature_table(
    dataset: CyclingDataset,
    grid_step_V: float = 0.005,
    sg_cfg: SgConfig = SgConfig(),
    area_cfg: AreaConfig = AreaConfig(),
    diff_cfg: DiffConfig = DiffConfig(),
    search_lo_V: float = PEAK_SEARCH_LO_V,
    search_hi_V: float = PEAK_SEARCH_HI_V,
    keep_curves: bool = False,
) -> tuple[list[HiVector], list[CommonHis], list[IcCurve]]:
    """Per-cycle HI vectors and common HIs for a whole dataset.

    Curves are smoothed before feature extraction; the first cycle's curve
    anchors the mean-difference indicator.
    """
    smoothed = [
        smooth_curve(compute_ic_curve(cycle, grid_step_V), sg_cfg)
        for cycle in dataset.cycles
    ]
    first = smoothed[0]
    his = [
        compute_hi_vector(c, first, area_cfg, diff_cfg, search_lo_V, search_hi_V)
        for c in smoothed
    ]
    common = [extract_common_his(cycle) for cycle in dataset.cycles]
    return his, common, smoothed if keep_curves else []


def hi_matrix(his: Sequence[HiVector]) -> np.ndarray:
    """Stack HI vectors into an (n_cycles, 13) matrix in FEATURE_NAMES order."""
    require(len(his) > 0, "empty HI table")
    return np.vstack([h.as_array() for h in his])


def pearson(x, y) -> float:
    """Sample Pearson correlation coefficient."""
    x = as_float_1d(x, "x")
    y = as_float_1d(y, "y")
    check_equal_length(x, y)
    require(len(x) >= 3, "pearson needs at least 3 paired samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sqrt(np.sum(dx * dx)))
    sy = float(np.sqrt(np.sum(dy * dy)))
    if sx == 0.0 or sy == 0.0:
        raise DataError("pearson undefined for zero-variance input")
    return float(np.sum(dx * dy) / (sx * sy))


def select_features(
    his: Sequence[HiVector] | np.ndarray,
    capacity,
    drop_list: Iterable[str] | None = None,
) -> tuple[np.ndarray, dict[str, float]]:
    """Screen the 13-column HI table down to the retained columns.

    Returns the retained matrix (default nine columns: area, a4, mf, wf,
    dmv, p, ppv, arc, pcv) and the full 13-entry Pearson-vs-capacity map
    for reporting.
    """
    table = his if isinstance(his, np.ndarray) else hi_matrix(his)
    table = as_float_2d(table, "hi table")
    require(table.shape[1] == len(FEATURE_NAMES), "HI table must have 13 columns")
    capacity = as_float_1d(capacity, "capacity")
    check_equal_length(table, capacity, "hi table", "capacity")

    drop = DEFAULT_DROP if drop_list is None else frozenset(drop_list)
    unknown = drop - set(FEATURE_NAMES)
    if unknown:
        raise DataError(f"unknown feature name(s) in drop list: {sorted(unknown)}")

    correlations = {
        name: pearson(table[:, j], capacity) for j, name in enumerate(FEATURE_NAMES)
    }
    kept = [j for j, name in enumerate(FEATURE_NAMES) if name not in drop]
    return table[:, kept], correlations


def kept_feature_names(drop_list: Iterable[str] | None = None) -> list[str]:
    drop = DEFAULT_DROP if drop_list is None else frozenset(drop_list)
    return [name for name in FEATURE_NAMES if name not in drop]


class CorrelationPca(BaseEstimator, TransformerMixin):
    """PCA on the correlation matrix of the input columns.

    Columns are standardized (mean removed, divided by the sample standard
    deviation) before the eigendecomposition, so indicators with wildly
    different units contribute comparably. Eigenvalues and contribution
    rates cover all input columns; ``transform`` projects onto the leading
    ``n_components`` eigenvectors.
    """

    def __init__(self, n_components: int = 3):
        self.n_components = n_components

    def fit(self, X, y=None):
        X = as_float_2d(X, "features")
        n, d = X.shape
        require(n >= 10, f"PCA needs at least 10 rows, got {n}")
        require(1 <= self.n_components <= d, "n_components out of range")
        mean = X.mean(axis=0)
        scale = X.std(axis=0, ddof=1)
        dead = np.flatnonzero(scale == 0.0)
        if dead.size:
            raise DataError(
                "zero-variance column(s): " + ", ".join(str(int(j)) for j in dead)
            )
        z = (X - mean) / scale
        corr = (z.T @ z) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(corr)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.clip(eigvals[order], 0.0, None)
        eigvecs = eigvecs[:, order]
        # Deterministic sign: largest-magnitude entry of each component >= 0.
        for k in range(d):
            col = eigvecs[:, k]
            if col[np.argmax(np.abs(col))] < 0:
                eigvecs[:, k] = -col
        self.n_features_in_ = d
        self.mean_ = mean
        self.scale_ = scale
        self.eigenvalues_ = eigvals
        self.contribution_rates_ = eigvals / eigvals.sum()
        self.components_ = eigvecs[:, : self.n_components].T.copy()
        return self

    def transform(self, X):
        if getattr(self, "components_", None) is None:
            raise DataError("CorrelationPca is not fitted")
        X = as_float_2d(X, "features")
        if X.shape[1] != self.n_features_in_:
            raise DataError(
                f"expected {self.n_features_in_} columns, got {X.shape[1]}"
            )
        return ((X - self.mean_) / self.scale_) @ self.components_.T

    def to_dict(self) -> dict:
        return {
            "n_components": self.n_components,
            "mean": self.mean_.tolist(),
            "scale": self.scale_.tolist(),
            "components": self.components_.tolist(),
            "eigenvalues": self.eigenvalues_.tolist(),
            "contribution_rates": self.contribution_rates_.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "CorrelationPca":
        model = cls(n_components=int(payload["n_components"]))
        model.mean_ = np.array(payload["mean"])
        model.scale_ = np.array(payload["scale"])
        model.components_ = np.array(payload["components"])
        model.eigenvalues_ = np.array(payload["eigenvalues"])
        model.contribution_rates_ = np.array(payload["contribution_rates"])
        model.n_features_in_ = len(model.mean_)
        return model
