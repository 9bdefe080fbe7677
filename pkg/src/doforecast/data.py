"""Series ingestion, zero-record cleaning, chronological splitting, windowing
and synthetic generators."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from .errors import DataError
from .numeric import make_rng

logger = logging.getLogger(__name__)

SAMPLE_INTERVAL = timedelta(minutes=30)
SYNTH_START = datetime(2012, 8, 1)
SYNTH_KINDS = ("sine", "ar1", "composite")


@dataclass
class TimeSeries:
    values: np.ndarray
    timestamps: np.ndarray | None = None  # datetime64[s]
    sample_interval: timedelta = SAMPLE_INTERVAL

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise DataError("series values must be one-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise DataError("series contains non-finite values")
        if self.timestamps is not None:
            self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
            if self.timestamps.shape != self.values.shape:
                raise DataError("timestamps and values differ in length")
            if self.timestamps.size > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0)):
                raise DataError("timestamps must be strictly increasing")

    def __len__(self):
        return self.values.size

    def slice(self, start: int, stop: int) -> "TimeSeries":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return TimeSeries(self.values[start:stop], ts, self.sample_interval)


@dataclass
class CleanReport:
    removed_count: int
    removed_rate: float
    original_length: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


@dataclass
class WindowedDataset:
    inputs: np.ndarray   # [num_windows, in_len, 1]
    targets: np.ndarray  # [num_windows, out_len]
    starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return self.inputs.shape[0]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_csv(path, value_column: int | str = -1, timestamp_column: int | str | None = "auto",
             strict: bool = True) -> TimeSeries:
    """Read a UTF-8 comma-separated series.

    A first row whose value field is non-numeric is treated as a header, which
    also makes string column names usable. ``timestamp_column="auto"`` picks
    a header column named ``timestamp`` when there is one. With ``strict=False`` malformed rows
    are skipped and logged with their line numbers instead of raising.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} has no rows")

    header = None
    first_line, first = rows[0]
    vi = value_column if isinstance(value_column, int) else None
    probe = first[vi] if vi is not None and -len(first) <= vi < len(first) else None
    if isinstance(value_column, str) or probe is None or not _is_number(probe.strip()):
        header = [c.strip() for c in first]
        rows = rows[1:]

    def resolve(col):
        if col is None or isinstance(col, int):
            return col
        if header is None or col not in header:
            raise DataError(f"column {col!r} not found in header of {path}")
        return header.index(col)

    if timestamp_column == "auto":
        timestamp_column = "timestamp" if header is not None and "timestamp" in header else None
    vi, ti = resolve(value_column), resolve(timestamp_column)
    values, stamps, bad = [], [], []
    for line, row in rows:
        try:
            v = float(row[vi].strip())
            if not math.isfinite(v):
                raise ValueError("non-finite")
            t = np.datetime64(datetime.fromisoformat(row[ti].strip()), "s") if ti is not None else None
        except (ValueError, IndexError) as exc:
            if strict:
                raise DataError(f"{path}:{line}: malformed row {row!r} ({exc})") from None
            bad.append(line)
            continue
        values.append(v)
        stamps.append(t)
    if bad:
        logger.warning("%s: skipped %d malformed rows (lines %s)", path, len(bad),
                       ", ".join(map(str, bad[:20])))
    if not values:
        raise DataError(f"{path} has no parseable rows")
    return TimeSeries(np.array(values), np.array(stamps, dtype="datetime64[s]") if ti is not None else None)


def write_csv(series: TimeSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if series.timestamps is not None:
            w.writerow(["timestamp", "value"])
            for t, v in zip(series.timestamps, series.values):
                w.writerow([str(t), repr(float(v))])
        else:
            w.writerow(["value"])
            for v in series.values:
                w.writerow([repr(float(v))])


def clean_zeros(series: TimeSeries):
    """Drop exact-zero readings (sensor faults), joining the remaining points."""
    n = len(series)
    if n == 0:
        raise DataError("cannot clean an empty series")
    keep = series.values != 0.0
    removed = int(n - keep.sum())
    if removed == n:
        raise DataError("series is entirely zeros; nothing left after cleaning")
    ts = None if series.timestamps is None else series.timestamps[keep]
    cleaned = TimeSeries(series.values[keep], ts, series.sample_interval)
    return cleaned, CleanReport(removed, removed / n, n)


def split(series: TimeSeries, train_frac: float = 0.9, min_len: int = 20):
    """Chronological split; train gets the first ``floor(train_frac * N)`` points."""
    if not 0.0 < train_frac < 1.0:
        raise DataError(f"train_frac must lie strictly between 0 and 1, got {train_frac}")
    n = len(series)
    cut = int(math.floor(train_frac * n))
    if cut < min_len or n - cut < min_len:
        raise DataError(f"series of {n} points is too short for a {train_frac:g} split "
                        f"with windows of {min_len} points")
    return series.slice(0, cut), series.slice(cut, n)


def num_windows(length: int, in_len: int, out_len: int, stride: int = 1) -> int:
    if length < in_len + out_len:
        return 0
    return (length - in_len - out_len) // stride + 1


def make_windows(series, in_len: int = 10, out_len: int = 10, stride: int = 1) -> WindowedDataset:
    values = np.asarray(getattr(series, "values", series), dtype=np.float64)
    if in_len < 1 or out_len < 1 or stride < 1:
        raise ValueError("in_len, out_len and stride must be positive")
    n = num_windows(values.size, in_len, out_len, stride)
    if n == 0:
        raise DataError(f"series of {values.size} points cannot hold one "
                        f"{in_len}+{out_len} window")
    starts = np.arange(n, dtype=np.int64) * stride
    span = np.lib.stride_tricks.sliding_window_view(values, in_len + out_len)[starts]
    inputs = np.ascontiguousarray(span[:, :in_len, None])
    targets = np.ascontiguousarray(span[:, in_len:])
    return WindowedDataset(inputs, targets, starts)


def synth_series(kind: str, length: int, seed: int = 0, amplitude: float = 1.0,
                 period: float = 48.0, offset: float = 8.0, phi: float = 0.95,
                 sigma: float = 0.1, zeros: int = 0) -> TimeSeries:
    """Deterministic test series on a 30-minute grid.

    ``sine``: ``amplitude*sin(2*pi*t/period) + offset``; ``ar1``:
    ``x_t = phi*x_{t-1} + N(0, sigma^2)`` (plus ``offset``); ``composite``: their
    sum. ``zeros`` readings are then overwritten with exact 0.0 at seeded
    positions, mimicking sensor dropouts.
    """
    if kind not in SYNTH_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; expected one of {SYNTH_KINDS}")
    if length <= 0:
        raise DataError("length must be positive")
    if kind != "sine" and not abs(phi) < 1.0:
        raise DataError(f"AR(1) coefficient must satisfy |phi| < 1 for stationarity, got {phi}")
    if period <= 0 or sigma < 0:
        raise DataError("period must be positive and sigma non-negative")
    if not 0 <= zeros <= length:
        raise DataError("zeros must lie in [0, length]")
    rng = make_rng(seed)
    t = np.arange(length, dtype=np.float64)
    values = np.full(length, float(offset))
    if kind in ("sine", "composite"):
        values += amplitude * np.sin(2.0 * np.pi * t / period)
    if kind in ("ar1", "composite"):
        eps = rng.normal(0.0, sigma, size=length)
        noise = np.empty(length)
        # Start from the stationary distribution.
        noise[0] = eps[0] / math.sqrt(1.0 - phi * phi)
        for i in range(1, length):
            noise[i] = phi * noise[i - 1] + eps[i]
        values += noise
    if zeros:
        values[rng.choice(length, size=zeros, replace=False)] = 0.0
    stamps = np.datetime64(SYNTH_START, "s") + np.arange(length) * np.timedelta64(30 * 60, "s")
    return TimeSeries(values, stamps)
