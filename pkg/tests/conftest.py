"""Shared fixtures and fixture builders."""

import numpy as np
import pytest

from icsoh.cycling import CycleRecord
from icsoh.ic import IcCurve
from icsoh.synth import SynthConfig, generate_dataset


def make_discharge_cycle(
    duration_s: float = 3600.0,
    current_A: float = 1.0,
    v_start: float = 4.1,
    v_end: float = 3.0,
    dt_s: float = 1.0,
    cycle_index: int = 1,
) -> CycleRecord:
    """Constant-current discharge with linearly falling voltage."""
    t = np.arange(0.0, duration_s + 0.5 * dt_s, dt_s)
    v = v_start + (v_end - v_start) * t / duration_s
    return CycleRecord(
        cycle_index=cycle_index,
        time_s=t,
        current_A=np.full(len(t), -abs(current_A)),
        voltage_V=v,
        step=np.full(len(t), "cc_discharge", dtype="<U12"),
    )


def make_ic_curve(values, v_lo=3.0, step=0.005, cycle_index=1) -> IcCurve:
    values = np.asarray(values, dtype=float)
    base = round(v_lo / step)
    grid = (base + np.arange(len(values))) * step
    return IcCurve(cycle_index=cycle_index, voltage_grid_V=grid, ic_AhPerV=values)


@pytest.fixture(scope="session")
def small_dataset():
    """40 noisy cycles with acceleration and recovery, deterministic."""
    cfg = SynthConfig(
        n_cycles=40,
        fade_linear=2e-3,
        fade_accel_onset=25,
        fade_accel_rate=2e-3,
        recovery_every=15,
        recovery_magnitude=0.004,
        noise_sigma=0.002,
        seed=11,
    )
    return generate_dataset(cfg)


@pytest.fixture(scope="session")
def clean_dataset():
    """30 noiseless cycles without recovery: monotone capacity fade."""
    cfg = SynthConfig(
        n_cycles=30,
        fade_linear=4e-3,
        fade_accel_onset=30,
        fade_accel_rate=0.0,
        recovery_every=0,
        recovery_magnitude=0.0,
        noise_sigma=0.0,
        seed=5,
    )
    return generate_dataset(cfg)
