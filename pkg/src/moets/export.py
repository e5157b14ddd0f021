"""Deterministic CSV tables and a dependency-free stacked-area SVG."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

METRIC_COLUMNS = ["dataset", "horizon", "model", "mse", "mae", "params", "seconds"]
PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#ff9da7"]


def fmt(value) -> str:
    """Shortest round-trip text for floats; plain text for everything else."""
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_table(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            values = [row.get(col) for col in header] if isinstance(row, dict) else row
            w.writerow([fmt(v) for v in values])
    return path


def read_table(path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def forecast_rows(actual: np.ndarray, predicted: np.ndarray, experts: dict[str, np.ndarray]):
    """Long-format rows (t from 1) for arrays of shape [T, m]."""
    header = ["t", "variate", "actual", "predicted"] + [f"expert_{k}_predicted" for k in experts]
    rows = []
    for t in range(actual.shape[0]):
        for j in range(actual.shape[1]):
            rows.append([t + 1, j, actual[t, j], predicted[t, j]] + [out[t, j] for out in experts.values()])
    return header, rows


def gate_rows(weights: np.ndarray, names: list[str]):
    header = ["t"] + [f"w_{k}" for k in names]
    return header, [[t + 1] + list(w) for t, w in enumerate(weights)]


def stacked_area_svg(weights: np.ndarray, names: list[str], width: int = 800, height: int = 300,
                     title: str = "gating weights") -> str:
    """One closed path per expert; the viewBox spans the horizon on x and [0, 1] on y.

    Timestep t (1-based) occupies x in [t-1, t], drawn as a flat step.
    """
    weights = np.asarray(weights, dtype=np.float64)
    horizon = weights.shape[0]
    top = np.cumsum(weights, axis=1)
    bottom = top - weights
    xs = np.repeat(np.arange(horizon + 1), 2)[1:-1]  # 0,1,1,2,2,...,T

    def pts(col: np.ndarray) -> list[tuple[float, float]]:
        ys = np.repeat(1.0 - col, 2)
        return list(zip(xs.tolist(), ys.tolist()))

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {horizon} 1" preserveAspectRatio="none">',
        f"<title>{escape(title)}</title>",
    ]
    for i, name in enumerate(names):
        upper = pts(top[:, i])
        lower = pts(bottom[:, i])[::-1]
        d = "M" + " L".join(f"{x:g},{y:.6f}" for x, y in upper + lower) + " Z"
        color = PALETTE[i % len(PALETTE)]
        lines.append(f'<path d="{d}" fill="{color}" stroke="none" data-expert="{escape(name)}">'
                     f"<title>{escape(name)}</title></path>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def write_svg(path, weights: np.ndarray, names: list[str], **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(stacked_area_svg(weights, names, **kwargs), encoding="utf-8")
    return path
