"""Regime-switching synthetic series for benchmarks and smoke tests.

The series cycles through three regimes in fixed order: a pure linear trend,
a pure seasonal oscillation, and a level-shift regime (piecewise-constant
levels plus white noise). Each segment starts where the previous one ended,
so there are no jumps at the boundaries other than the level shifts
themselves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import RawSeries

REGIMES = ("trend", "seasonal", "level")


@dataclass(frozen=True)
class RegimeSpec:
    length: int = 4000
    variates: int = 2
    segment: int = 200
    period: int = 24
    slope: float = 0.02
    amplitude: float = 1.0
    shift: float = 0.3
    shift_every: int = 40
    noise: float = 0.1
    seed: int = 0


def _segment(kind: str, n: int, start: float, spec: RegimeSpec, rng: np.random.Generator,
             phase: float, sign: float) -> np.ndarray:
    t = np.arange(1, n + 1)
    if kind == "trend":
        return start + sign * spec.slope * t
    if kind == "seasonal":
        wave = spec.amplitude * np.sin(2 * np.pi * t / spec.period + phase)
        return start + wave - spec.amplitude * np.sin(phase)
    jumps = rng.normal(0.0, spec.shift, size=-(-n // spec.shift_every))
    jumps[0] = 0.0
    levels = np.repeat(np.cumsum(jumps), spec.shift_every)[:n]
    return start + levels + rng.normal(0.0, spec.noise, size=n)


def regime_switching(spec: RegimeSpec = RegimeSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Return (values [length, variates], regime label per row)."""
    rng = np.random.default_rng(spec.seed)
    values = np.empty((spec.length, spec.variates))
    labels = np.empty(spec.length, dtype=np.int64)
    for j in range(spec.variates):
        level, pos, k = 0.0, 0, j  # variates start in different regimes
        while pos < spec.length:
            n = min(spec.segment, spec.length - pos)
            kind = REGIMES[k % 3]
            sign = 1.0 if (k // 3) % 2 == 0 else -1.0
            seg = _segment(kind, n, level, spec, rng, phase=rng.uniform(0, 2 * np.pi), sign=sign)
            values[pos:pos + n, j] = seg
            if j == 0:
                labels[pos:pos + n] = k % 3
            level, pos, k = seg[-1], pos + n, k + 1
    return values, labels


def to_series(values: np.ndarray, name: str = "synthetic") -> RawSeries:
    stamps = [f"t{i:06d}" for i in range(len(values))]
    return RawSeries(name, stamps, np.asarray(values, dtype=np.float64),
                     [f"v{j}" for j in range(values.shape[1])], "step")


def write_csv(path, values: np.ndarray, start: str = "2016-07-01") -> Path:
    """Write values as a benchmark-layout CSV (hourly timestamps, header row)."""
    path = Path(path)
    base = np.datetime64(f"{start}T00:00")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date"] + [f"v{j}" for j in range(values.shape[1])])
        for i, row in enumerate(values):
            stamp = str(base + np.timedelta64(i, "h")).replace("T", " ")
            w.writerow([stamp] + [repr(float(v)) for v in row])
    return path
