"""Cycling-log ingestion and per-cycle bookkeeping.

Raw charge/discharge logs are segmented into cycles; each usable cycle gets
a discharge capacity (trapezoidal coulomb counting), a state of health
(capacity over nominal), and the three duration-based health indicators:
constant-current charge time (CCCT), constant-voltage charge time (CVCT)
and constant-current discharge time (CCDT).

Sign convention: discharge current is negative in storage; integration uses
its absolute value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from ._io import atomic_write_df
from .errors import DataError
from .validation import as_float_1d, require

STEP_KINDS = ("cc_charge", "cv_charge", "cc_discharge", "rest", "other")

# Canonical CSV column names; a schema maps these keys to actual file columns.
CANONICAL_COLUMNS = ("cycle", "time_s", "current_A", "voltage_V", "step")

# Drop rules for spurious partial cycles in real exports.
MAX_CAPACITY_RATIO = 1.2
MIN_CAPACITY_RATIO = 0.1

DEFAULT_CHARGE_CUTOFF_V = 4.2


@dataclass(frozen=True)
class CycleRecord:
    """Samples of one charge/discharge cycle, sorted by time.

    Attributes:
        cycle_index: 1-based cycle number from the source log.
        time_s: Strictly increasing sample times in seconds.
        current_A: Signed current (discharge negative).
        voltage_V: Terminal voltage.
        step: Step kind per sample, one of STEP_KINDS.
    """

    cycle_index: int
    time_s: np.ndarray
    current_A: np.ndarray
    voltage_V: np.ndarray
    step: np.ndarray

    def __post_init__(self):
        n = len(self.time_s)
        if not (len(self.current_A) == len(self.voltage_V) == len(self.step) == n):
            raise DataError(f"cycle {self.cycle_index}: channel lengths differ")
        if n == 0:
            raise DataError(f"cycle {self.cycle_index}: no samples")
        if np.any(np.diff(self.time_s) <= 0):
            raise DataError(f"cycle {self.cycle_index}: time not strictly increasing")
        if not np.all(np.isfinite(self.current_A)):
            raise DataError(f"cycle {self.cycle_index}: non-finite current")
        if np.any(self.voltage_V < 0.0) or np.any(self.voltage_V > 10.0):
            raise DataError(f"cycle {self.cycle_index}: voltage outside [0, 10] V")
        for arr in (self.time_s, self.current_A, self.voltage_V, self.step):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.time_s)

    def mask(self, kind: str) -> np.ndarray:
        return self.step == kind


@dataclass(frozen=True)
class CyclingDataset:
    """Ordered cycles of one battery plus per-cycle capacity and SOH."""

    battery_id: str
    nominal_capacity_Ah: float
    cycles: tuple[CycleRecord, ...]
    capacities_Ah: np.ndarray
    soh: np.ndarray

    def __post_init__(self):
        require(self.nominal_capacity_Ah > 0, "nominal capacity must be positive")
        require(
            len(self.capacities_Ah) == len(self.cycles),
            "capacities length must equal cycle count",
        )
        require(len(self.soh) == len(self.cycles), "soh length must equal cycle count")
        for arr in (self.capacities_Ah, self.soh):
            arr.flags.writeable = False

    def __len__(self) -> int:
        return len(self.cycles)

    @property
    def cycle_indices(self) -> np.ndarray:
        return np.array([c.cycle_index for c in self.cycles])


@dataclass(frozen=True)
class CommonHis:
    """CCCT / CVCT / CCDT durations in seconds; absent steps are flagged."""

    ccct_s: float
    cvct_s: float
    ccdt_s: float
    missing: frozenset[str] = field(default_factory=frozenset)

    def as_array(self) -> np.ndarray:
        return np.array([self.ccct_s, self.cvct_s, self.ccdt_s])


@dataclass
class ParseReport:
    """Plain-text accounting of what parsing kept, skipped and dropped."""

    source: str = ""
    rows_total: int = 0
    rows_kept: int = 0
    rows_skipped: int = 0
    skipped_notes: list[str] = field(default_factory=list)
    dropped_cycles: list[tuple[int, str]] = field(default_factory=list)

    def lines(self) -> list[str]:
        out = [
            f"source: {self.source}",
            f"rows total: {self.rows_total}",
            f"rows kept: {self.rows_kept}",
            f"rows skipped: {self.rows_skipped}",
        ]
        out.extend(f"skipped: {note}" for note in self.skipped_notes)
        out.extend(
            f"dropped cycle {idx}: {reason}" for idx, reason in self.dropped_cycles
        )
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def compute_cycle_capacity(cycle: CycleRecord) -> float:
    """Discharged capacity in Ah: trapezoidal integral of |I| dt over the
    constant-current discharge samples.

    Contiguous discharge runs are integrated separately so that gaps
    (charge or rest in between) contribute nothing.
    """
    mask = cycle.mask("cc_discharge")
    if not mask.any():
        raise DataError(f"cycle {cycle.cycle_index}: no cc_discharge segment")
    total = 0.0
    for start, stop in _contiguous_runs(mask):
        if stop - start < 2:
            continue
        t = cycle.time_s[start:stop]
        i = np.abs(cycle.current_A[start:stop])
        total += float(np.trapezoid(i, t))
    return total / 3600.0


def compute_soh(reality_Ah: float, nominal_Ah: float) -> float:
    """State of health: actual capacity over nominal capacity."""
    if nominal_Ah <= 0:
        raise DataError(f"nominal capacity must be positive, got {nominal_Ah}")
    return reality_Ah / nominal_Ah


def extract_common_his(cycle: CycleRecord) -> CommonHis:
    """Durations of the CC-charge, CV-charge and CC-discharge steps.

    Each duration is last minus first time of the longest contiguous run of
    that step kind. An absent step yields 0 and lands in ``missing``.
    """
    durations = {}
    missing = set()
    for kind, name in (
        ("cc_charge", "ccct_s"),
        ("cv_charge", "cvct_s"),
        ("cc_discharge", "ccdt_s"),
    ):
        runs = _contiguous_runs(cycle.mask(kind))
        if not runs:
            durations[name] = 0.0
            missing.add(kind)
            continue
        best = 0.0
        for start, stop in runs:
            best = max(best, float(cycle.time_s[stop - 1] - cycle.time_s[start]))
        durations[name] = best
    return CommonHis(missing=frozenset(missing), **durations)


def normalize_minmax(
    values, fit_range: tuple[float, float] | None = None
) -> tuple[np.ndarray, tuple[float, float]]:
    """Map values onto [0, 1] linearly; returns the scaled array and the range.

    With ``fit_range`` supplied (e.g. from a training split) the range is
    applied as-is and outputs are clamped to [0, 1]. Without it the range is
    fitted from the data, which must contain at least two distinct entries.
    """
    arr = as_float_1d(values, "values")
    if fit_range is None:
        lo, hi = float(arr.min()), float(arr.max())
        if hi <= lo:
            raise DataError("cannot fit a min-max range on all-equal values")
        return (arr - lo) / (hi - lo), (lo, hi)
    lo, hi = float(fit_range[0]), float(fit_range[1])
    require(hi > lo, f"invalid range ({lo}, {hi})")
    return np.clip((arr - lo) / (hi - lo), 0.0, 1.0), (lo, hi)


def denormalize_minmax(values, fit_range: tuple[float, float]) -> np.ndarray:
    """Inverse of :func:`normalize_minmax` for unclamped values."""
    lo, hi = fit_range
    return np.asarray(values, dtype=float) * (hi - lo) + lo


class MinMaxNormalizer(BaseEstimator, TransformerMixin):
    """Column-wise min-max scaler fitted on the training split only.

    Unlike sklearn's MinMaxScaler it clamps out-of-range values at transform
    time, matching how test-split features are handled downstream.
    """

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        self.data_min_ = X.min(axis=0)
        self.data_max_ = X.max(axis=0)
        spans = self.data_max_ - self.data_min_
        if np.any(spans <= 0):
            bad = [int(j) for j in np.flatnonzero(spans <= 0)]
            raise DataError(f"columns {bad} have no spread; cannot fit min-max range")
        return self

    def transform(self, X):
        if getattr(self, "data_min_", None) is None:
            raise DataError("MinMaxNormalizer is not fitted")
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[:, None]
        out = (X - self.data_min_) / (self.data_max_ - self.data_min_)
        out = np.clip(out, 0.0, 1.0)
        return out[:, 0] if squeeze else out

    def inverse_transform(self, X):
        X = np.asarray(X, dtype=float)
        return X * (self.data_max_ - self.data_min_) + self.data_min_

    def ranges(self) -> list[tuple[float, float]]:
        return [
            (float(lo), float(hi)) for lo, hi in zip(self.data_min_, self.data_max_)
        ]


def infer_step_kinds(
    time_s: np.ndarray,
    current_A: np.ndarray,
    voltage_V: np.ndarray,
    charge_cutoff_V: float = DEFAULT_CHARGE_CUTOFF_V,
) -> np.ndarray:
    """Label samples with step kinds when the source log carries none.

    Thresholds: CC charge is current within 2% of its positive plateau with
    voltage below cut-off; CV charge is voltage within 5 mV of cut-off with
    positive (decaying) current; CC discharge is current within 2% of its
    negative plateau. Near-zero current is rest; the remainder is other.
    """
    i = np.asarray(current_A, dtype=float)
    v = np.asarray(voltage_V, dtype=float)
    kinds = np.full(len(i), "other", dtype="<U12")

    i_abs_max = np.abs(i).max() if len(i) else 0.0
    rest_eps = max(1e-3, 0.005 * i_abs_max)
    kinds[np.abs(i) <= rest_eps] = "rest"

    pos = i > rest_eps
    if pos.any():
        plateau = i[pos].max()
        cc_band = pos & (np.abs(i - plateau) <= 0.02 * plateau)
        kinds[cc_band & (v < charge_cutoff_V - 0.005)] = "cc_charge"
        cv = pos & (np.abs(v - charge_cutoff_V) <= 0.005) & ~(
            cc_band & (v < charge_cutoff_V - 0.005)
        )
        kinds[cv] = "cv_charge"

    neg = i < -rest_eps
    if neg.any():
        plateau = i[neg].min()
        kinds[neg & (np.abs(i - plateau) <= 0.02 * abs(plateau))] = "cc_discharge"
    return kinds


def build_dataset(
    battery_id: str,
    nominal_capacity_Ah: float,
    cycles: Sequence[CycleRecord],
    report: ParseReport | None = None,
) -> CyclingDataset:
    """Assemble a dataset, dropping unusable cycles per the capacity rules."""
    report = report if report is not None else ParseReport()
    kept: list[CycleRecord] = []
    capacities: list[float] = []
    for cycle in cycles:
        if not cycle.mask("cc_discharge").any():
            report.dropped_cycles.append((cycle.cycle_index, "no discharge segment"))
            continue
        cap = compute_cycle_capacity(cycle)
        if cap > MAX_CAPACITY_RATIO * nominal_capacity_Ah:
            report.dropped_cycles.append(
                (cycle.cycle_index, f"capacity {cap:.4f} Ah above 120% of nominal")
            )
            continue
        if cap < MIN_CAPACITY_RATIO * nominal_capacity_Ah:
            report.dropped_cycles.append(
                (cycle.cycle_index, f"capacity {cap:.4f} Ah below 10% of nominal")
            )
            continue
        kept.append(cycle)
        capacities.append(cap)
    if not kept:
        raise DataError("zero usable cycles")
    caps = np.array(capacities)
    soh = caps / nominal_capacity_Ah
    return CyclingDataset(
        battery_id=battery_id,
        nominal_capacity_Ah=float(nominal_capacity_Ah),
        cycles=tuple(kept),
        capacities_Ah=caps,
        soh=soh,
    )


def parse_cycling_csv(
    path: str | Path,
    schema: Mapping[str, str] | None = None,
    *,
    battery_id: str = "",
    nominal_capacity_Ah: float = 1.1,
    charge_cutoff_V: float = DEFAULT_CHARGE_CUTOFF_V,
) -> tuple[CyclingDataset, ParseReport]:
    """Parse a cycling CSV into a dataset plus a parse report.

    Parameters
    ----------
    path : file path
        CSV with one row per sample.
    schema : mapping
        Maps canonical keys (cycle, time_s, current_A, voltage_V, step) to
        the file's column names. Defaults to the canonical names. The step
        entry may be omitted or map to a missing column; step kinds are then
        inferred from current/voltage thresholds.

    Malformed rows (non-numeric required fields, duplicate timestamps) are
    skipped and counted in the report rather than failing the parse.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    schema = dict(schema) if schema else {}
    colmap = {key: schema.get(key, key) for key in CANONICAL_COLUMNS}

    try:
        frame = pd.read_csv(path, dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        raise DataError("zero usable cycles (empty file)") from None

    report = ParseReport(source=str(path), rows_total=len(frame))

    for key in ("cycle", "time_s", "current_A", "voltage_V"):
        if colmap[key] not in frame.columns:
            raise DataError(f"missing mapped column '{colmap[key]}' (for {key})")

    # pd.to_numeric flags malformed entries but is not correctly rounded;
    # the kept values are re-parsed with numpy so CSV round trips bit-exactly.
    cyc = _numeric_column(frame[colmap["cycle"]])
    t = _numeric_column(frame[colmap["time_s"]])
    i = _numeric_column(frame[colmap["current_A"]])
    v = _numeric_column(frame[colmap["voltage_V"]])

    valid = np.isfinite(cyc) & np.isfinite(t) & np.isfinite(i) & np.isfinite(v)
    n_bad = int((~valid).sum())
    if n_bad:
        report.rows_skipped += n_bad
        report.skipped_notes.append(f"{n_bad} rows with non-numeric required fields")

    has_step = colmap["step"] in frame.columns
    step_raw = frame[colmap["step"]].astype(str) if has_step else None

    cycles: list[CycleRecord] = []
    order = np.flatnonzero(valid)
    cyc_ids = cyc[order].astype(int)
    for cycle_id in np.unique(cyc_ids):
        rows = order[cyc_ids == cycle_id]
        tt = t[rows]
        sort = np.argsort(tt, kind="stable")
        rows = rows[sort]
        tt = tt[sort]
        keep = np.ones(len(rows), dtype=bool)
        keep[1:] = np.diff(tt) > 0
        n_dup = int((~keep).sum())
        if n_dup:
            report.rows_skipped += n_dup
            report.skipped_notes.append(
                f"{n_dup} duplicate-timestamp rows in cycle {cycle_id}"
            )
        rows = rows[keep]
        tt = tt[keep]
        if len(rows) == 0:
            continue
        ii = i[rows]
        vv = v[rows]
        if has_step:
            labels = step_raw.to_numpy()[rows]
            kinds = np.array(
                [s if s in STEP_KINDS else "other" for s in labels], dtype="<U12"
            )
        else:
            kinds = infer_step_kinds(tt, ii, vv, charge_cutoff_V)
        cycles.append(
            CycleRecord(
                cycle_index=int(cycle_id),
                time_s=tt,
                current_A=ii,
                voltage_V=vv,
                step=kinds,
            )
        )

    report.rows_kept = report.rows_total - report.rows_skipped
    if not cycles:
        raise DataError("zero usable cycles")
    dataset = build_dataset(
        battery_id or path.stem, nominal_capacity_Ah, cycles, report
    )
    return dataset, report


def serialize_dataset_csv(dataset: CyclingDataset, path: str | Path) -> None:
    """Write the canonical sample-level CSV (cycle, time_s, current_A,
    voltage_V, step)."""
    parts = []
    for cycle in dataset.cycles:
        parts.append(
            pd.DataFrame(
                {
                    "cycle": np.full(len(cycle), cycle.cycle_index),
                    "time_s": cycle.time_s,
                    "current_A": cycle.current_A,
                    "voltage_V": cycle.voltage_V,
                    "step": cycle.step,
                }
            )
        )
    atomic_write_df(path, pd.concat(parts, ignore_index=True))


def _numeric_column(series: pd.Series) -> np.ndarray:
    """Float values with NaN where unparseable.

    pandas' fast numeric parser is not correctly rounded (off by one ulp on
    some inputs), so it only supplies the validity mask; the kept strings
    are converted by numpy, which round-trips repr output exactly.
    """
    mask = pd.to_numeric(series, errors="coerce").notna().to_numpy()
    out = np.full(len(series), np.nan)
    if mask.any():
        out[mask] = np.asarray(series.to_numpy()[mask], dtype=float)
    return out


def _contiguous_runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """[start, stop) index pairs of each run of True values."""
    if not mask.any():
        return []
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    return [(int(edges[k]), int(edges[k + 1])) for k in range(0, len(edges), 2)]
