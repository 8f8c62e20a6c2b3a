"""Data pipeline: CSV ingestion, uniform resampling with gap masking,
sliding-window extraction with a chronological train/test split,
z-score normalization, and the synthetic sine-triple generator.

Ingestion CSV schema (header row required): a timestamp column
(ISO-8601), a glucose column (mg/dL), optionally further numeric
channels, optionally a series-id column to carry several series in one
file.  Empty value cells mean "no reading"; empty cells in non-glucose
channels are read as 0 (event channels such as insulin doses).

Missing steps in a TimeSeries are NaN in `values` and False in `mask`;
observed slots always carry an input reading verbatim (the resampler
never interpolates).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta

import numpy as np

from .numeric import SeededRng

DEFAULT_STEP = timedelta(minutes=5)
SYNTH_EPOCH = datetime(2024, 1, 1, 0, 0, 0)
SYNTH_PERIODS = (12.0, 6.0, 4.0)
SYNTH_GAP_STEPS = 60
GLUCOSE_MIN, GLUCOSE_MAX = 0.0, 1000.0


@dataclass
class TimeSeries:
    """Uniformly sampled multichannel series with a per-step observed mask."""

    series_id: str
    start_time: datetime
    step: timedelta
    values: np.ndarray        # (n, d); NaN at masked steps
    mask: np.ndarray          # (n,) bool, True = observed
    channels: tuple[str, ...] = ("glucose",)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim == 1:
            self.values = self.values[:, None]
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.values.shape[0] != self.mask.shape[0]:
            raise ValueError("values and mask lengths differ")
        if self.step <= timedelta(0):
            raise ValueError("step must be positive")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass
class RawReadings:
    """Irregular timestamped readings prior to resampling."""

    series_id: str
    times: list[datetime]
    values: np.ndarray        # (n, d)
    channels: tuple[str, ...] = ("glucose",)


@dataclass
class CsvSchema:
    timestamp_column: str = "timestamp"
    glucose_column: str = "glucose"
    series_column: str = "series_id"   # used only when present in the header
    extra_channels: tuple[str, ...] = ()
    step: timedelta = DEFAULT_STEP


@dataclass
class WindowedDataset:
    """Sliding windows over one or more series, split chronologically.

    X holds window inputs with masked entries zero-filled as
    placeholders (X_mask says which steps are real); Y holds fully
    observed targets.  train/test indices never overlap in time within
    a series: windows straddling the split boundary are discarded.
    """

    X: np.ndarray             # (N, T, d)
    X_mask: np.ndarray        # (N, T) bool
    Y: np.ndarray             # (N, w, d)
    origin_series: np.ndarray  # (N,) index into series_ids
    origin_start: np.ndarray   # (N,) start step within the series
    series_ids: tuple[str, ...]
    channels: tuple[str, ...]
    T: int
    w: int
    stride: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    dropped_invalid: int = 0
    dropped_boundary: int = 0
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    normalized: bool = False

    def __len__(self) -> int:
        return self.X.shape[0]


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_float(text: str, line_no: int, col: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"line {line_no}: cannot parse {col}={text!r} as a number") from None


def load_csv(path: str, schema: CsvSchema | None = None) -> list[TimeSeries]:
    """Read one CSV of timestamped readings into resampled TimeSeries.

    One TimeSeries per series id (single anonymous series when the file
    has no series column).  Timestamps must be strictly increasing per
    series; rows with an empty glucose cell are treated as absent
    readings and the gap appears as masked steps after resampling.
    """
    schema = schema or CsvSchema()
    per_series: dict[str, list] = {}
    order: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty file: missing header row") from None
        header = [h.strip() for h in header]
        for col in (schema.timestamp_column, schema.glucose_column):
            if col not in header:
                raise ValueError(f"missing required column {col!r}")
        for col in schema.extra_channels:
            if col not in header:
                raise ValueError(f"missing configured channel column {col!r}")
        t_ix = header.index(schema.timestamp_column)
        g_ix = header.index(schema.glucose_column)
        s_ix = header.index(schema.series_column) if schema.series_column in header else None
        extra_ix = [header.index(c) for c in schema.extra_channels]

        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"line {line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[t_ix].strip())
            except ValueError:
                raise ValueError(f"line {line_no}: bad timestamp {row[t_ix]!r}") from None
            sid = row[s_ix].strip() if s_ix is not None else "series"
            glucose_text = row[g_ix].strip()
            if not glucose_text:
                continue  # absent reading; the gap becomes masked steps
            glucose = _parse_float(glucose_text, line_no, schema.glucose_column)
            if not (GLUCOSE_MIN < glucose < GLUCOSE_MAX):
                raise ValueError(f"line {line_no}: glucose {glucose} outside ({GLUCOSE_MIN}, {GLUCOSE_MAX})")
            extras = [(_parse_float(row[ix].strip(), line_no, header[ix]) if row[ix].strip() else 0.0)
                      for ix in extra_ix]
            if sid not in per_series:
                per_series[sid] = []
                order.append(sid)
            rows = per_series[sid]
            if rows:
                prev_ts = rows[-1][0]
                if ts == prev_ts:
                    raise ValueError(f"line {line_no}: duplicate timestamp {ts.isoformat()} in series {sid!r}")
                if ts < prev_ts:
                    raise ValueError(f"line {line_no}: non-monotone timestamp {ts.isoformat()} in series {sid!r}")
            rows.append((ts, [glucose] + extras))

    channels = ("glucose",) + tuple(schema.extra_channels)
    out = []
    for sid in order:
        rows = per_series[sid]
        raw = RawReadings(sid, [r[0] for r in rows],
                          np.array([r[1] for r in rows], dtype=np.float64), channels)
        out.append(resample_uniform(raw, schema.step))
    return out


def resample_uniform(raw: RawReadings, step: timedelta) -> TimeSeries:
    """Snap irregular readings onto a uniform grid anchored at the first one.

    Each grid slot takes the nearest reading within step/2 (verbatim, no
    interpolation; ties resolve to the earlier reading), otherwise the
    slot is masked.  The grid extends to the first slot at or past the
    last reading.
    """
    if step <= timedelta(0):
        raise ValueError("step must be positive")
    n_in = len(raw.times)
    if n_in == 0:
        return TimeSeries(raw.series_id, SYNTH_EPOCH, step,
                          np.empty((0, len(raw.channels))), np.empty(0, dtype=bool), raw.channels)
    step_s = step.total_seconds()
    t0 = raw.times[0]
    rel = np.array([(t - t0).total_seconds() for t in raw.times])
    n_slots = int(np.ceil(rel[-1] / step_s)) + 1 if n_in > 1 else 1
    grid = np.arange(n_slots) * step_s
    idx = np.searchsorted(rel, grid)
    values = np.full((n_slots, raw.values.shape[1]), np.nan)
    mask = np.zeros(n_slots, dtype=bool)
    for k in range(n_slots):
        best = -1
        best_dist = np.inf
        for cand in (idx[k] - 1, idx[k]):
            if 0 <= cand < n_in:
                dist = abs(rel[cand] - grid[k])
                if dist < best_dist:  # strict: ties go to the earlier reading
                    best, best_dist = cand, dist
        if best >= 0 and best_dist <= step_s / 2:
            values[k] = raw.values[best]
            mask[k] = True
    return TimeSeries(raw.series_id, t0, step, values, mask, raw.channels)


def write_series_csv(ts: TimeSeries, path: str) -> None:
    """Write a TimeSeries as CSV; masked steps get empty value cells."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["timestamp"] + list(ts.channels))
        for k in range(len(ts)):
            stamp = (ts.start_time + k * ts.step).isoformat()
            if ts.mask[k]:
                writer.writerow([stamp] + [repr(float(v)) for v in ts.values[k]])
            else:
                writer.writerow([stamp] + [""] * ts.n_channels)


# ---------------------------------------------------------------------------
# Windowing and normalization


def make_windows(series: list[TimeSeries], T: int, w: int, stride: int = 1,
                 min_observed_frac: float = 0.5, split_frac: float = 0.8) -> WindowedDataset:
    """Sliding (input, horizon) windows with a per-series time split.

    Windows whose target horizon has any missing step or whose input is
    observed on fewer than min_observed_frac of its steps are dropped
    and counted.  The chronological split puts a window in the training
    set only if it ends before the series' split boundary and in the
    test set only if it starts at or after it, so the two sets never
    overlap in time.
    """
    if T < 1 or w < 1 or stride < 1:
        raise ValueError("T, w, and stride must be >= 1")
    if not series:
        raise ValueError("no input series")
    d = series[0].n_channels
    xs, masks, ys, o_series, o_start = [], [], [], [], []
    split_tag = []
    dropped_invalid = 0
    dropped_boundary = 0
    for s_ix, ts in enumerate(series):
        if ts.n_channels != d:
            raise ValueError("all series must share the channel layout")
        n = len(ts)
        boundary = int(np.floor(split_frac * n))
        vals = np.nan_to_num(ts.values, nan=0.0)
        for start in range(0, n - T - w + 1, stride):
            x_mask = ts.mask[start:start + T]
            y_mask = ts.mask[start + T:start + T + w]
            if not y_mask.all() or x_mask.mean() < min_observed_frac:
                dropped_invalid += 1
                continue
            if start + T + w <= boundary:
                tag = 0
            elif start >= boundary:
                tag = 1
            else:
                dropped_boundary += 1
                continue
            xs.append(vals[start:start + T])
            masks.append(x_mask)
            ys.append(vals[start + T:start + T + w])
            o_series.append(s_ix)
            o_start.append(start)
            split_tag.append(tag)
    N = len(xs)
    X = np.array(xs) if N else np.empty((0, T, d))
    Xm = np.array(masks, dtype=bool) if N else np.empty((0, T), dtype=bool)
    Y = np.array(ys) if N else np.empty((0, w, d))
    tags = np.array(split_tag, dtype=int) if N else np.empty(0, dtype=int)
    return WindowedDataset(
        X=X, X_mask=Xm, Y=Y,
        origin_series=np.array(o_series, dtype=int),
        origin_start=np.array(o_start, dtype=int),
        series_ids=tuple(ts.series_id for ts in series),
        channels=series[0].channels,
        T=T, w=w, stride=stride,
        train_idx=np.flatnonzero(tags == 0),
        test_idx=np.flatnonzero(tags == 1),
        dropped_invalid=dropped_invalid,
        dropped_boundary=dropped_boundary,
    )


def normalize(ds: WindowedDataset) -> WindowedDataset:
    """Z-score every channel using training-split statistics only.

    Statistics come from the observed input entries of training
    windows; a zero-variance channel is an error.  Placeholder entries
    under the mask are transformed too but never read by models.
    """
    if ds.normalized:
        raise ValueError("dataset is already normalized")
    if ds.train_idx.size == 0:
        raise ValueError("empty training split")
    x_train = ds.X[ds.train_idx]
    m_train = ds.X_mask[ds.train_idx]
    mean = np.empty(ds.X.shape[2])
    std = np.empty(ds.X.shape[2])
    for c in range(ds.X.shape[2]):
        obs = x_train[..., c][m_train]
        mean[c] = obs.mean()
        std[c] = obs.std()
        if std[c] == 0.0:
            raise ValueError(f"channel {ds.channels[c]!r} has zero variance in the training split")
    return replace(
        ds,
        X=(ds.X - mean) / std,
        Y=(ds.Y - mean) / std,
        norm_mean=mean,
        norm_std=std,
        normalized=True,
    )


def denormalize(values: np.ndarray, ds: WindowedDataset) -> np.ndarray:
    """Inverse of normalize() for arrays whose last axis is the channel axis."""
    if not ds.normalized:
        raise ValueError("dataset carries no normalization statistics")
    return values * ds.norm_std + ds.norm_mean


# ---------------------------------------------------------------------------
# Synthetic data


@dataclass
class SyntheticTriple:
    """The three-sine demo dataset; ts3 has a contiguous masked gap."""

    series: list[TimeSeries]
    ts3_truth: np.ndarray     # (n,) ground truth under and outside the gap
    gap_start: int
    gap_length: int = SYNTH_GAP_STEPS


def synth_generate(n_samples: int, seed: int, noise_scale: float = 0.5) -> SyntheticTriple:
    """Three noisy sines (periods 12, 6, 4 steps); the third is masked
    for a contiguous 60-step interval at a seeded position.
    """
    if n_samples < 2 * SYNTH_GAP_STEPS:
        raise ValueError(f"n_samples must be >= {2 * SYNTH_GAP_STEPS}")
    rng = SeededRng(seed)
    t = np.arange(n_samples, dtype=np.float64)
    signals = [np.sin(2.0 * np.pi * t / period) + noise_scale * rng.normal(n_samples)
               for period in SYNTH_PERIODS]
    margin = 30
    span = n_samples - SYNTH_GAP_STEPS - 2 * margin
    gap_start = margin + (rng.integer(span + 1) if span > 0 else 0)

    series = []
    for i, sig in enumerate(signals):
        values = sig.copy()
        mask = np.ones(n_samples, dtype=bool)
        if i == 2:
            values[gap_start:gap_start + SYNTH_GAP_STEPS] = np.nan
            mask[gap_start:gap_start + SYNTH_GAP_STEPS] = False
        series.append(TimeSeries(f"ts{i + 1}", SYNTH_EPOCH, DEFAULT_STEP, values, mask))
    return SyntheticTriple(series, signals[2], gap_start)


def calibrate_to_glucose(ts: TimeSeries, level: float = 150.0, scale: float = 40.0) -> TimeSeries:
    """Affine map of a dimensionless series into a plausible mg/dL range."""
    values = ts.values * scale + level
    return replace(ts, values=values, mask=ts.mask.copy())
