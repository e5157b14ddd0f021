"""End-to-end runs behind the CLI: train, evaluate, forecast, export gates."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from .config import RunConfig, parse_config
from .data import Dataset, load_csv, prepare, window_at
from .errors import ConfigError, ContractError
from .export import METRIC_COLUMNS, forecast_rows, gate_rows, write_svg, write_table
from .gating import MixtureOfExperts, build_moe
from .tensor import Adam
from .training import evaluate, predict, train

log = logging.getLogger("moets")

CHECKPOINT_NAME = "checkpoint.emts"


def load_dataset(cfg: RunConfig) -> Dataset:
    if not cfg.dataset:
        raise ConfigError("dataset: no dataset path configured")
    series = load_csv(cfg.dataset)
    if cfg.name:
        series.name = cfg.name
    if cfg.variates and cfg.variates != series.variates:
        raise ContractError(f"config expects {cfg.variates} variates, {cfg.dataset} has {series.variates}")
    return prepare(series, cfg.protocol, cfg.lookback, cfg.horizon)


def build_model(cfg: RunConfig, variates: int | None = None) -> MixtureOfExperts:
    return build_moe(cfg.experts, cfg.expert_config(variates), cfg.gating_config(), cfg.seed)


def _stats_state(data: Dataset) -> dict[str, np.ndarray]:
    return {"mean": data.stats.mean, "std": data.stats.std}


def save_model(path, cfg: RunConfig, model: MixtureOfExperts, optimizer: Adam | None = None,
               data: Dataset | None = None) -> Path:
    bundle = ckpt_io.bundle(cfg.dumps(), model.state_dict(),
                            optimizer.state_arrays() if optimizer else None,
                            _stats_state(data) if data else None)
    return ckpt_io.save(path, bundle)


def load_model(path) -> tuple[RunConfig, MixtureOfExperts, ckpt_io.Checkpoint]:
    ckpt = ckpt_io.load(path)
    cfg = parse_config(ckpt.config_text)
    model = build_model(cfg)
    model.load_state_dict(ckpt.model_state())
    model.eval()
    return cfg, model, ckpt


@dataclass
class TrainOutcome:
    config: RunConfig
    model: MixtureOfExperts
    checkpoint: Path
    metrics: Path
    log: Path
    report: object


def _attach_log(path: Path) -> logging.Handler:
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("moets")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    return handler


def metric_rows(name: str, cfg: RunConfig, model: MixtureOfExperts, report, seconds: float | None):
    rows = [{"dataset": name, "horizon": cfg.horizon, "model": "moe", "mse": report.mse, "mae": report.mae,
             "params": model.num_parameters(), "seconds": seconds}]
    for expert in model.experts:
        e_mse, e_mae = report.expert_metrics[expert.kind]
        rows.append({"dataset": name, "horizon": cfg.horizon, "model": expert.kind, "mse": e_mse,
                     "mae": e_mae, "params": expert.num_parameters(), "seconds": None})
    return rows


def run_train(cfg: RunConfig, checkpoint: Path | None = None, metrics: Path | None = None) -> TrainOutcome:
    out = Path(cfg.out_dir)
    checkpoint = Path(checkpoint or out / CHECKPOINT_NAME)
    metrics = Path(metrics or out / "metrics.csv")
    log_path = out / "run.log"
    handler = _attach_log(log_path)
    try:
        start = time.perf_counter()
        data = load_dataset(cfg)
        cfg = cfg.replace(variates=data.series.variates)
        log.info("dataset %s: %d rows, %d variates, borders %s", data.series.name, data.series.length,
                 data.series.variates, (data.borders.a, data.borders.b, data.borders.c))
        model = build_model(cfg)
        log.info("model: %s, %d parameters", ",".join(cfg.experts), model.num_parameters())
        result = train(model, data.windows("train", cfg.train_stride), data.windows("val", cfg.eval_stride),
                       cfg.train_config())
        log.info("best epoch %d of %d, val mse %.6f", result.best_epoch, result.epochs_run, result.best_val)
        report = evaluate(model, data.windows("test", cfg.eval_stride))
        save_model(checkpoint, cfg, model, result.optimizer, data)
        seconds = time.perf_counter() - start
        log.info("test mse %.6f mae %.6f; gate means %s", report.mse, report.mae, report.gate_means)
        log.info("runtime %.2f s", seconds)
        write_table(metrics, METRIC_COLUMNS,
                    metric_rows(data.series.name, cfg, model, report, seconds if cfg.timing else None))
    finally:
        logging.getLogger("moets").removeHandler(handler)
        handler.close()
    return TrainOutcome(cfg, model, checkpoint, metrics, log_path, report)


def _resolve(checkpoint, cfg: RunConfig | None):
    trained_cfg, model, ckpt = load_model(checkpoint)
    cfg = cfg or trained_cfg
    data = load_dataset(cfg.replace(variates=0))
    got = (cfg.lookback, cfg.horizon, data.series.variates)
    want = (trained_cfg.lookback, trained_cfg.horizon, trained_cfg.variates)
    if got != want:
        raise ContractError(f"checkpoint was trained for (L, T, m)={want}, data gives {got}")
    return trained_cfg, model, data


def run_eval(checkpoint, out: Path, cfg: RunConfig | None = None) -> Path:
    trained, model, data = _resolve(checkpoint, cfg)
    eval_stride = cfg.eval_stride if cfg else trained.eval_stride
    report = evaluate(model, data.windows("test", eval_stride))
    gate_cols = [f"gate_mean_{k}" for k in model.expert_names]
    header = METRIC_COLUMNS[:5] + gate_cols
    moe = {"dataset": data.series.name, "horizon": trained.horizon, "model": "moe",
           "mse": report.mse, "mae": report.mae}
    moe.update({f"gate_mean_{k}": report.gate_means[k] for k in model.expert_names})
    rows = [moe] + [{"dataset": data.series.name, "horizon": trained.horizon, "model": k,
                     "mse": report.expert_metrics[k][0], "mae": report.expert_metrics[k][1]}
                    for k in model.expert_names]
    return write_table(out, header, rows)


def _window_output(model: MixtureOfExperts, data: Dataset, origin: int | None):
    if origin is None:
        origin = data.borders.test[0]
    window = window_at(data.values, origin, data.lookback, data.horizon)
    out = predict(model, window.x[None])
    return window, out


def run_forecast(checkpoint, out: Path, origin: int | None = None, cfg: RunConfig | None = None) -> Path:
    """Forecast CSV on the original scale for the window whose lookback starts at ``origin``."""
    _, model, data = _resolve(checkpoint, cfg)
    window, result = _window_output(model, data, origin)
    inverse = data.stats.inverse
    start = window.origin + data.lookback
    actual = data.series.values[start:start + data.horizon]
    experts = {k: inverse(o.data[0].astype(np.float64)) for k, o in zip(model.expert_names, result.expert_outputs)}
    header, rows = forecast_rows(actual, inverse(result.prediction.data[0].astype(np.float64)), experts)
    return write_table(out, header, rows)


def run_export_gates(checkpoint, out: Path, origin: int | None = None, svg: Path | None = None,
                     cfg: RunConfig | None = None) -> Path:
    _, model, data = _resolve(checkpoint, cfg)
    window, result = _window_output(model, data, origin)
    weights = result.weights.data[0].astype(np.float64)
    header, rows = gate_rows(weights, model.expert_names)
    path = write_table(out, header, rows)
    if svg is not None:
        write_svg(svg, weights, model.expert_names,
                  title=f"{data.series.name} gating weights, origin {window.origin}")
    return path

