"""Deterministic synthetic degradation data plus brute-force test oracles.

The generator produces labeled CC/CV charge, rest and CC discharge traces
whose integrated discharge capacity matches a configured fade trajectory
exactly. The discharge voltage follows a logistic-shaped V(Q) map, so each
cycle has a single-peaked dQ/dV curve whose peak drifts toward lower
voltage as the cell ages.

The oracles (per-window least-squares smoothing, direct-formula Pearson,
power-iteration eigenvalues) deliberately avoid the code paths of the
implementations they cross-check; they exist for the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cycling import CycleRecord, CyclingDataset, build_dataset
from .errors import DataError
from .validation import require

CHARGE_CUTOFF_V = 4.2
DISCHARGE_CUTOFF_V = 2.7
CC_CHARGE_RATE = 0.5  # C
DISCHARGE_RATE = 1.0  # C


@dataclass(frozen=True)
class SynthConfig:
    """Fade trajectory and trace-synthesis settings."""

    n_cycles: int = 900
    nominal_Ah: float = 1.1
    fade_linear: float = 3.5e-4
    fade_accel_onset: int = 600
    fade_accel_rate: float = 6.0e-4
    recovery_every: int = 120
    recovery_magnitude: float = 0.008
    noise_sigma: float = 0.003
    seed: int = 0

    def __post_init__(self):
        for name in ("fade_linear", "fade_accel_rate", "recovery_magnitude", "noise_sigma"):
            value = getattr(self, name)
            require(0.0 <= value <= 0.05, f"{name} must lie in [0, 0.05]")
        require(self.fade_accel_onset <= self.n_cycles, "accel onset beyond n_cycles")
        require(self.nominal_Ah > 0, "nominal capacity must be positive")


def _aging_state(cfg: SynthConfig) -> np.ndarray:
    """Monotone irreversible fade fraction per cycle (1.0 = fresh)."""
    k = np.arange(cfg.n_cycles)
    base = (1.0 - cfg.fade_linear) ** k
    extra = np.maximum(k - cfg.fade_accel_onset, 0)
    return base * (1.0 - cfg.fade_accel_rate) ** extra


def capacity_trajectory(cfg: SynthConfig) -> np.ndarray:
    """Per-cycle capacity in Ah: fade plus recovery bumps plus noise."""
    state = _aging_state(cfg)
    caps = cfg.nominal_Ah * state
    if cfg.recovery_every > 0 and cfg.recovery_magnitude > 0:
        k = np.arange(cfg.n_cycles)
        since_bump = k % cfg.recovery_every
        bump = cfg.recovery_magnitude * 0.5**since_bump
        bump[k < cfg.recovery_every] = 0.0
        caps = caps * (1.0 + bump)
    if cfg.noise_sigma > 0:
        rng = np.random.default_rng(cfg.seed)
        caps = caps * (1.0 + cfg.noise_sigma * rng.standard_normal(cfg.n_cycles))
    return caps


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=float)))


def _logit(s):
    s = np.asarray(s, dtype=float)
    return np.log(s / (1.0 - s))


def _discharge_voltage(u: np.ndarray, center_V: float, width_V: float) -> np.ndarray:
    """Voltage after discharging fraction u of the cycle's capacity.

    Inverse of a logistic Q(V): V spans the cut-offs exactly at u = 0 and
    u = 1 and has its steepest-capacity point (the IC peak) at center_V.
    """
    s_hi = _sigmoid((CHARGE_CUTOFF_V - center_V) / width_V)
    s_lo = _sigmoid((DISCHARGE_CUTOFF_V - center_V) / width_V)
    s = s_hi - u * (s_hi - s_lo)
    return center_V + width_V * _logit(s)


def generate_dataset(cfg: SynthConfig) -> CyclingDataset:
    """Synthesize a full cycling dataset; bitwise deterministic per seed."""
    require(cfg.n_cycles >= 20, "need at least 20 cycles")
    caps = capacity_trajectory(cfg)
    state = _aging_state(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    duration_noise = 1.0 + 0.3 * cfg.noise_sigma * rng.standard_normal((cfg.n_cycles, 2))

    i_charge = CC_CHARGE_RATE * cfg.nominal_Ah
    i_discharge = DISCHARGE_RATE * cfg.nominal_Ah
    cycles = []
    for k in range(cfg.n_cycles):
        cap = caps[k]
        peak_center = 3.62 + 0.18 * state[k]
        peak_width = 0.085 * (1.0 + 0.35 * (1.0 - state[k]))

        ccct = 3600.0 * (0.92 * cap) / i_charge * duration_noise[k, 0]
        cvct = 1200.0 * (1.0 + 0.8 * (1.0 - state[k])) * duration_noise[k, 1]
        ccdt = 3600.0 * cap / i_discharge

        t_cc = _timeline(0.0, ccct, 20.0)
        tau = t_cc / ccct
        seg_cc = (t_cc, np.full(len(t_cc), i_charge), 3.0 + 1.2 * tau**0.9, "cc_charge")

        t_cv = _timeline(0.0, cvct, 20.0)[1:]  # skip duplicate boundary instant
        seg_cv = (
            ccct + t_cv,
            i_charge * np.exp(-3.0 * t_cv / cvct),
            np.full(len(t_cv), CHARGE_CUTOFF_V),
            "cv_charge",
        )

        rest_t = np.array([10.0, 20.0, 30.0])
        seg_rest = (
            ccct + cvct + rest_t,
            np.zeros(3),
            np.array([4.19, 4.188, 4.187]),
            "rest",
        )

        t_dis = _timeline(0.0, ccdt, 10.0)
        u = t_dis / ccdt
        seg_dis = (
            ccct + cvct + 30.0 + 10.0 + t_dis,
            np.full(len(t_dis), -i_discharge),
            _discharge_voltage(u, peak_center, peak_width),
            "cc_discharge",
        )

        times, currents, voltages, steps = [], [], [], []
        for t, i, v, kind in (seg_cc, seg_cv, seg_rest, seg_dis):
            times.append(t)
            currents.append(i)
            voltages.append(v)
            steps.append(np.full(len(t), kind, dtype="<U12"))
        cycles.append(
            CycleRecord(
                cycle_index=k + 1,
                time_s=np.concatenate(times),
                current_A=np.concatenate(currents),
                voltage_V=np.concatenate(voltages),
                step=np.concatenate(steps),
            )
        )
    return build_dataset(f"synthetic-{cfg.seed}", cfg.nominal_Ah, cycles)


def _timeline(start: float, duration: float, step: float) -> np.ndarray:
    """Samples every ``step`` seconds plus the exact end instant."""
    t = np.arange(0.0, duration, step)
    if len(t) == 0 or t[-1] < duration:
        t = np.concatenate([t, [duration]])
    return start + t


# ---------------------------------------------------------------------------
# Brute-force oracles (tests only)
# ---------------------------------------------------------------------------


def oracle_sg(values, window: int, order: int) -> np.ndarray:
    """Per-window polynomial least squares via explicit normal equations.

    Mirror padding (reflection about the edge, edge sample not repeated)
    matches the production filter's contract; everything else is solved
    from scratch per window.
    """
    y = np.asarray(values, dtype=float)
    if len(y) < window:
        raise DataError("sequence shorter than window")
    half = (window - 1) // 2
    left = y[1 : half + 1][::-1]
    right = y[-half - 1 : -1][::-1]
    padded = np.concatenate([left, y, right])
    x = np.arange(-half, half + 1, dtype=float)
    design = np.vander(x, order + 1, increasing=True)
    normal = design.T @ design
    out = np.empty(len(y))
    for j in range(len(y)):
        segment = padded[j : j + window]
        coeffs = np.linalg.solve(normal, design.T @ segment)
        out[j] = coeffs[0]
    return out


def oracle_pearson(x, y) -> float:
    """Direct-formula Pearson using raw sums."""
    xs = [float(v) for v in x]
    ys = [float(v) for v in y]
    if len(xs) != len(ys) or len(xs) < 3:
        raise DataError("oracle_pearson needs equal-length input, n >= 3")
    n = len(xs)
    sum_x = math.fsum(xs)
    sum_y = math.fsum(ys)
    sum_xy = math.fsum(a * b for a, b in zip(xs, ys))
    sum_x2 = math.fsum(a * a for a in xs)
    sum_y2 = math.fsum(b * b for b in ys)
    num = n * sum_xy - sum_x * sum_y
    den = math.sqrt((n * sum_x2 - sum_x**2) * (n * sum_y2 - sum_y**2))
    if den == 0.0:
        raise DataError("oracle_pearson undefined for zero variance")
    return num / den


def oracle_pca_eigs(
    matrix, max_iterations: int = 200_000, tol: float = 1e-14
) -> np.ndarray:
    """Eigenvalues of a symmetric PSD matrix by power iteration + deflation.

    Returns all eigenvalues in descending order.
    """
    a = np.array(matrix, dtype=float)
    require(a.ndim == 2 and a.shape[0] == a.shape[1], "matrix must be square")
    d = a.shape[0]
    rng = np.random.default_rng(12345)
    eigenvalues = []
    for _ in range(d):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        value = float(v @ a @ v)
        for _ in range(max_iterations):
            w = a @ v
            norm = np.linalg.norm(w)
            if norm < 1e-30:
                value = 0.0
                break
            v = w / norm
            new_value = float(v @ a @ v)
            if abs(new_value - value) <= tol * max(1.0, abs(new_value)):
                value = new_value
                break
            value = new_value
        eigenvalues.append(value)
        a = a - value * np.outer(v, v)
    return np.array(sorted(eigenvalues, reverse=True))
