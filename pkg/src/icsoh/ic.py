"""Incremental-capacity (dQ/dV) curves of the discharge phase.

Each usable cycle yields one curve: cumulative discharged charge Q is
accumulated against time, voltage is forced monotone with a running-minimum
envelope (raw logs jitter), Q is interpolated onto a uniform voltage grid,
and the per-bin |dQ|/dV magnitudes are reported at the bin centers.

Smoothing is a Savitzky-Golay filter (default window 9, polynomial order 3)
applied to the dQ/dV values with mirror-padded edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cycling import CycleRecord, _contiguous_runs
from .errors import DataError
from .validation import as_float_1d, require

DEFAULT_GRID_STEP_V = 0.005
PEAK_SEARCH_LO_V = 3.6
PEAK_SEARCH_HI_V = 4.0


@dataclass(frozen=True)
class SgConfig:
    """Savitzky-Golay settings: odd window length and polynomial order."""

    window: int = 9
    poly_order: int = 3

    def __post_init__(self):
        require(self.window > 0 and self.window % 2 == 1, "window must be odd and positive")
        require(0 <= self.poly_order < self.window, "poly_order must be < window")


@dataclass(frozen=True)
class IcCurve:
    """dQ/dV magnitudes on a uniform ascending voltage grid (bin centers)."""

    cycle_index: int
    voltage_grid_V: np.ndarray
    ic_AhPerV: np.ndarray

    def __post_init__(self):
        require(len(self.voltage_grid_V) == len(self.ic_AhPerV), "grid/ic length mismatch")
        require(len(self.voltage_grid_V) >= 2, "curve needs at least 2 grid points")
        steps = np.diff(self.voltage_grid_V)
        require(bool(np.all(steps > 0)), "voltage grid must be strictly increasing")
        require(
            float(np.max(np.abs(steps - steps[0]))) <= 1e-9,
            "voltage grid spacing must be uniform",
        )
        require(bool(np.all(np.isfinite(self.ic_AhPerV))), "ic values must be finite")
        for arr in (self.voltage_grid_V, self.ic_AhPerV):
            arr.flags.writeable = False

    @property
    def grid_step_V(self) -> float:
        return float(self.voltage_grid_V[1] - self.voltage_grid_V[0])

    def __len__(self) -> int:
        return len(self.voltage_grid_V)


def compute_ic_curve(
    cycle: CycleRecord, grid_step_V: float = DEFAULT_GRID_STEP_V
) -> IcCurve:
    """Build the raw (unsmoothed) discharge IC curve of one cycle.

    Q(V) is taken from trapezoidal coulomb counting over the longest
    constant-current discharge run, with V replaced by its running-minimum
    envelope so the Q-vs-V relation is single-valued. Grid edges are aligned
    to multiples of ``grid_step_V``; ic[j] is the charge moved in bin j over
    the bin width.
    """
    require(grid_step_V > 0, "grid_step_V must be positive")
    runs = _contiguous_runs(cycle.mask("cc_discharge"))
    if not runs:
        raise DataError(f"cycle {cycle.cycle_index}: zero discharge samples")
    start, stop = max(runs, key=lambda r: r[1] - r[0])
    if stop - start < 2:
        raise DataError(f"cycle {cycle.cycle_index}: discharge run too short")

    t = cycle.time_s[start:stop]
    i_abs = np.abs(cycle.current_A[start:stop])
    v = cycle.voltage_V[start:stop]

    # Cumulative discharged charge in Ah against raw time.
    dq = 0.5 * (i_abs[1:] + i_abs[:-1]) * np.diff(t) / 3600.0
    q = np.concatenate(([0.0], np.cumsum(dq)))

    # Monotone envelope; for repeated envelope voltages keep the largest Q.
    v_env = np.minimum.accumulate(v)
    v_asc = v_env[::-1]
    q_at_v = q[::-1]
    distinct, first_pos = np.unique(v_asc, return_index=True)
    q_distinct = q_at_v[first_pos]  # first occurrence in ascending order = max Q

    v_min, v_max = float(distinct[0]), float(distinct[-1])
    lo_idx = math.ceil(v_min / grid_step_V - 1e-9)
    hi_idx = math.floor(v_max / grid_step_V + 1e-9)
    n_bins = hi_idx - lo_idx
    if n_bins < 5:
        raise DataError(
            f"cycle {cycle.cycle_index}: discharge voltage span too small "
            f"({v_max - v_min:.4f} V < 5 grid steps)"
        )
    edges = np.arange(lo_idx, hi_idx + 1) * grid_step_V
    q_edges = np.interp(edges, distinct, q_distinct)
    ic = np.abs(np.diff(q_edges)) / grid_step_V
    centers = edges[:-1] + 0.5 * grid_step_V
    return IcCurve(cycle_index=cycle.cycle_index, voltage_grid_V=centers, ic_AhPerV=ic)


def savitzky_golay_coefficients(cfg: SgConfig) -> np.ndarray:
    """Convolution weights: center value of the least-squares polynomial."""
    half = (cfg.window - 1) // 2
    x = np.arange(-half, half + 1, dtype=float)
    design = np.vander(x, cfg.poly_order + 1, increasing=True)
    # Row 0 of the pseudo-inverse evaluates the fitted polynomial at x = 0.
    return np.linalg.pinv(design)[0]


def savitzky_golay_smooth(values, cfg: SgConfig = SgConfig()) -> np.ndarray:
    """Smooth a sequence with the configured Savitzky-Golay filter.

    Edges use mirror padding (reflection about the boundary sample, edge
    value not repeated). Output has the same length as the input.
    """
    arr = as_float_1d(values, "values")
    if len(arr) < cfg.window:
        raise DataError(f"sequence length {len(arr)} < window {cfg.window}")
    half = (cfg.window - 1) // 2
    padded = np.pad(arr, half, mode="reflect")
    weights = savitzky_golay_coefficients(cfg)
    return np.convolve(padded, weights[::-1], mode="valid")


def smooth_curve(curve: IcCurve, cfg: SgConfig = SgConfig()) -> IcCurve:
    """Return a copy of the curve with smoothed ic values."""
    return IcCurve(
        cycle_index=curve.cycle_index,
        voltage_grid_V=np.array(curve.voltage_grid_V),
        ic_AhPerV=savitzky_golay_smooth(curve.ic_AhPerV, cfg),
    )


def detect_peak(
    curve: IcCurve,
    search_lo_V: float = PEAK_SEARCH_LO_V,
    search_hi_V: float = PEAK_SEARCH_HI_V,
) -> tuple[float, float]:
    """Grid voltage and value of the largest ic sample inside the window.

    Ties go to the lower voltage.
    """
    mask = (curve.voltage_grid_V >= search_lo_V) & (curve.voltage_grid_V <= search_hi_V)
    if mask.sum() < 3:
        raise DataError(
            f"peak search window [{search_lo_V}, {search_hi_V}] V intersects "
            f"the grid in fewer than 3 points"
        )
    values = curve.ic_AhPerV[mask]
    grid = curve.voltage_grid_V[mask]
    best = int(np.argmax(values))  # argmax returns the first (lowest-V) maximum
    return float(grid[best]), float(values[best])
