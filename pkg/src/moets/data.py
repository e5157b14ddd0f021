"""Benchmark CSV ingestion, split borders, standardization and windowing."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BoundsError, CapacityError, ConfigError, FormatError, ParseError

log = logging.getLogger(__name__)

PROTOCOLS = ("ett-hour", "ett-minute", "ratio-70-10-20")
STD_FLOOR = 1e-8

# 12/4/4 months of 30 days
_ETT_BORDERS = {
    "ett-hour": (12 * 30 * 24, 16 * 30 * 24, 20 * 30 * 24),
    "ett-minute": (12 * 30 * 24 * 4, 16 * 30 * 24 * 4, 20 * 30 * 24 * 4),
}


@dataclass
class RawSeries:
    name: str
    timestamps: list[str]
    values: np.ndarray  # [Tt, m], float64
    columns: list[str] = field(default_factory=list)
    granularity: str = ""

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def variates(self) -> int:
        return self.values.shape[1]


def _parse_cell(text: str, line: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"line {line}, column {column!r}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ParseError(f"line {line}, column {column!r}: non-finite value {text!r}")
    return value


def load_csv(path, name: str | None = None, granularity: str = "") -> RawSeries:
    """Read ``timestamp,v1,...,vm`` with one header row; values are kept in float64."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if not header or not any(h.strip() for h in header):
            raise FormatError(f"{path}: empty file")
        if len(header) < 2:
            raise FormatError(f"{path}: need a timestamp column and at least one value column")
        columns = [h.strip() for h in header[1:]]
        stamps, values = [], []
        for line, row in enumerate(rows, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {line} has {len(row)} fields, expected {len(header)}")
            stamps.append(row[0])
            values.append([_parse_cell(c, line, col) for c, col in zip(row[1:], columns)])
    if not values:
        raise FormatError(f"{path}: header but no data rows")
    return RawSeries(name or path.stem, stamps, np.asarray(values, dtype=np.float64), columns, granularity)


@dataclass(frozen=True)
class SplitBorders:
    """Row ranges: train [0, a), val [a - L, b), test [b - L, c)."""

    a: int
    b: int
    c: int
    lookback: int

    @property
    def train(self) -> tuple[int, int]:
        return 0, self.a

    @property
    def val(self) -> tuple[int, int]:
        return self.a - self.lookback, self.b

    @property
    def test(self) -> tuple[int, int]:
        return self.b - self.lookback, self.c

    def range(self, part: str) -> tuple[int, int]:
        if part not in ("train", "val", "test"):
            raise ConfigError(f"unknown split part {part!r}")
        return getattr(self, part)


def split(series_or_length, protocol: str, lookback: int, horizon: int) -> SplitBorders:
    length = series_or_length if isinstance(series_or_length, int) else series_or_length.length
    if protocol in _ETT_BORDERS:
        a, b, c = _ETT_BORDERS[protocol]
        if length < c:
            raise CapacityError(f"{protocol} split needs at least {c} rows, series has {length}")
    elif protocol == "ratio-70-10-20":
        a, b, c = 7 * length // 10, 8 * length // 10, length  # exact floors
    else:
        raise ConfigError(f"unknown split protocol {protocol!r}; expected one of {PROTOCOLS}")
    borders = SplitBorders(a, b, c, lookback)
    need = lookback + horizon
    for part in ("train", "val", "test"):
        lo, hi = borders.range(part)
        if lo < 0 or hi - lo < need:
            minimum = _minimum_length(protocol, lookback, horizon)
            raise CapacityError(
                f"{part} range [{lo}, {hi}) cannot hold one window of L+T={need}; "
                f"{protocol} needs a series of at least {minimum} rows, got {length}")
    return borders


def _minimum_length(protocol: str, lookback: int, horizon: int) -> int:
    if protocol in _ETT_BORDERS:
        return _ETT_BORDERS[protocol][2]
    n = lookback + horizon
    while 7 * n // 10 < lookback + horizon or n - 8 * n // 10 < horizon or 8 * n // 10 - 7 * n // 10 < horizon:
        n += 1
    return n


@dataclass
class StandardizeStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.std + self.mean


def fit_stats(values: np.ndarray, borders: SplitBorders) -> StandardizeStats:
    train = np.asarray(values, dtype=np.float64)[: borders.a]
    if train.shape[0] == 0:
        raise CapacityError("train range is empty")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    flat = std < STD_FLOOR
    if flat.any():
        log.warning("constant train column(s) %s; std floored at %g", np.flatnonzero(flat).tolist(), STD_FLOOR)
        std = np.where(flat, STD_FLOOR, std)
    return StandardizeStats(mean, std)


def standardize(series, borders: SplitBorders) -> tuple[np.ndarray, StandardizeStats]:
    """Standardize every row with statistics from the train range only."""
    values = series.values if isinstance(series, RawSeries) else np.asarray(series, dtype=np.float64)
    stats = fit_stats(values, borders)
    return stats.apply(values), stats


@dataclass(frozen=True)
class WindowPair:
    x: np.ndarray
    y: np.ndarray
    origin: int


def window_count(length: int, lookback: int, horizon: int, stride: int = 1) -> int:
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if length < lookback + horizon:
        raise CapacityError(f"range of {length} rows is shorter than L+T={lookback + horizon}")
    return (length - lookback - horizon) // stride + 1


def window_origins(span: tuple[int, int], lookback: int, horizon: int, stride: int = 1) -> np.ndarray:
    lo, hi = span
    return lo + stride * np.arange(window_count(hi - lo, lookback, horizon, stride))


def make_windows(values: np.ndarray, span: tuple[int, int], lookback: int, horizon: int,
                 stride: int = 1) -> list[WindowPair]:
    """Windows drawn from ``values[span[0]:span[1]]``, ordered by origin."""
    return [WindowPair(values[o:o + lookback], values[o + lookback:o + lookback + horizon], int(o))
            for o in window_origins(span, lookback, horizon, stride)]


class WindowSet:
    """Batched access to windows without materializing every pair."""

    def __init__(self, values: np.ndarray, span: tuple[int, int], lookback: int, horizon: int,
                 stride: int = 1):
        self.values = np.asarray(values)
        self.lookback = lookback
        self.horizon = horizon
        self.origins = window_origins(span, lookback, horizon, stride)
        self._x = np.arange(lookback)
        self._y = np.arange(lookback, lookback + horizon)

    def __len__(self) -> int:
        return len(self.origins)

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray]:
        o = self.origins[np.asarray(idx)][:, None]
        return self.values[o + self._x], self.values[o + self._y]

    def batches(self, size: int, order=None):
        order = np.arange(len(self)) if order is None else order
        for start in range(0, len(order), size):
            yield self.batch(order[start:start + size])


def window_at(values: np.ndarray, origin: int, lookback: int, horizon: int) -> WindowPair:
    if not 0 <= origin <= len(values) - lookback - horizon:
        raise BoundsError(f"origin {origin} does not admit a window of L={lookback}, T={horizon} "
                          f"in {len(values)} rows (valid: 0..{len(values) - lookback - horizon})")
    return WindowPair(values[origin:origin + lookback], values[origin + lookback:origin + lookback + horizon],
                      origin)


@dataclass
class Dataset:
    """A loaded, split and standardized series, ready for windowing."""

    series: RawSeries
    borders: SplitBorders
    stats: StandardizeStats
    values: np.ndarray  # standardized
    lookback: int
    horizon: int

    def windows(self, part: str, stride: int = 1) -> WindowSet:
        return WindowSet(self.values, self.borders.range(part), self.lookback, self.horizon, stride)


def prepare(series: RawSeries, protocol: str, lookback: int, horizon: int) -> Dataset:
    borders = split(series, protocol, lookback, horizon)
    values, stats = standardize(series, borders)
    return Dataset(series, borders, stats, values, lookback, horizon)
