"""Loss, metrics, the training loop with early stopping, and evaluation."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import WindowSet
from .errors import CapacityError, ConfigError, ContractError, DivergenceError
from .experts import Expert
from .gating import MixtureOfExperts, MixtureOutput, mix
from .nn import Module
from .tensor import Adam, Tape, Tensor, backward, get_dtype, no_record

log = logging.getLogger(__name__)

MODES = ("joint", "experts-then-gate")


def _pair(y, y_hat):
    y, y_hat = np.asarray(y), np.asarray(y_hat)
    if y.shape != y_hat.shape:
        raise ContractError(f"target {y.shape} and forecast {y_hat.shape} differ in shape")
    return y, y_hat


def mse(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean((np.float64(y) - y_hat) ** 2))


def mae(y, y_hat) -> float:
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(np.float64(y) - y_hat)))


def combined_loss(y, y_hat, alpha: float = 0.5):
    """alpha * mean squared error + (1 - alpha) * mean absolute error.

    Works on arrays (returns a float) or on a forecast tensor (returns a
    scalar tensor for backprop). The endpoints skip the unused term so that
    alpha=1 and alpha=0 reproduce mse and mae exactly.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    if isinstance(y_hat, Tensor):
        target = y.data if isinstance(y, Tensor) else np.asarray(y, dtype=y_hat.dtype)
        if target.shape != y_hat.shape:
            raise ContractError(f"target {target.shape} and forecast {y_hat.shape} differ in shape")
        r = y_hat - Tensor(target, dtype=y_hat.dtype)
        if alpha == 1.0:
            return (r * r).mean()
        if alpha == 0.0:
            return r.abs().mean()
        return alpha * (r * r).mean() + (1.0 - alpha) * r.abs().mean()
    if alpha == 1.0:
        return mse(y, y_hat)
    if alpha == 0.0:
        return mae(y, y_hat)
    return alpha * mse(y, y_hat) + (1.0 - alpha) * mae(y, y_hat)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch: int = 32
    epochs: int = 50
    patience: int = 5
    alpha: float = 0.5
    seed: int = 0
    mode: str = "joint"
    warmup_epochs: int = 0  # experts-then-gate: standalone epochs per expert (0 = epochs)
    finetune_lr: float = 0.0  # experts-then-gate: joint-phase learning rate (0 = lr)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.lr < 0 or self.finetune_lr < 0:
            raise ConfigError("learning rates must be >= 0")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.batch < 1 or self.epochs < 1:
            raise ConfigError("batch and epochs must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"unknown training mode {self.mode!r}; expected one of {MODES}")


def forecast(model: Module, x) -> Tensor:
    """Forecast tensor for a batch; unwraps the mixture output."""
    out = model(x if isinstance(x, Tensor) else Tensor(x))
    return out.prediction if isinstance(out, MixtureOutput) else out


def predict(model: Module, x: np.ndarray):
    """Inference pass in eval mode; returns the raw model output."""
    was = model.training
    model.eval()
    try:
        with no_record():
            return model(Tensor(x))
    finally:
        model.train(was)


class Trainer:
    def __init__(self, model: Module, cfg: TrainConfig, params=None):
        self.model = model
        self.cfg = cfg
        self.optimizer = Adam(params if params is not None else model.parameters(), lr=cfg.lr)
        self.steps = 0

    def step(self, x: np.ndarray, y: np.ndarray) -> float:
        self.model.train()
        dtype = get_dtype()
        with Tape() as tape:
            loss = combined_loss(np.asarray(y, dtype=dtype), forecast(self.model, np.asarray(x, dtype=dtype)),
                                 self.cfg.alpha)
        value = loss.item()
        self.steps += 1
        if not math.isfinite(value):
            raise DivergenceError(self.steps, self.cfg.lr, value)
        self.optimizer.zero_grad()
        backward(tape, loss)
        self.optimizer.step()
        return value


@dataclass
class TrainResult:
    model: Module
    optimizer: Adam
    best_val: float
    best_epoch: int
    epochs_run: int
    history: list[dict] = field(default_factory=list)
    seconds: float = 0.0


def validation_mse(model: Module, windows: WindowSet, batch: int = 256) -> float:
    total, count = 0.0, 0
    for x, y in windows.batches(batch):
        out = predict(model, x.astype(get_dtype()))
        pred = out.prediction if isinstance(out, MixtureOutput) else out
        total += float(np.sum((y - pred.data.astype(np.float64)) ** 2))
        count += y.size
    return total / count


def _snapshot(model: Module, optimizer: Adam) -> tuple[dict, dict]:
    return ({k: np.array(v, copy=True) for k, v in model.state_dict().items()},
            {k: np.array(v, copy=True) for k, v in optimizer.state_arrays().items()})


def _fit(model: Module, train: WindowSet, val: WindowSet, cfg: TrainConfig, params=None,
         epochs: int | None = None, tag: str = "", validate=None, warm: bool = False) -> TrainResult:
    if len(train) == 0 or len(val) == 0:
        raise CapacityError("training needs at least one train and one validation window")
    validate = validate or validation_mse
    trainer = Trainer(model, cfg, params)
    rng = np.random.default_rng([cfg.seed, 7])
    best, best_epoch, stale = math.inf, 0, 0
    best_state = _snapshot(model, trainer.optimizer)
    history = []
    if warm:
        # a warm-started model competes as epoch 0, so fine-tuning can only improve it
        best = validate(model, val)
        history.append({"epoch": 0, "train_loss": math.nan, "val_mse": best})
        log.info("%sepoch 0 val_mse=%.6f", tag, best)
    epochs = epochs or cfg.epochs
    start = time.perf_counter()
    epoch = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(train))
        losses = [trainer.step(x, y) for x, y in train.batches(cfg.batch, order)]
        score = validate(model, val)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)), "val_mse": score})
        log.info("%sepoch %d train_loss=%.6f val_mse=%.6f", tag, epoch, history[-1]["train_loss"], score)
        if score < best:
            best, best_epoch, stale = score, epoch, 0
            best_state = _snapshot(model, trainer.optimizer)
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state[0])
    trainer.optimizer.load_state_arrays(best_state[1])
    return TrainResult(model, trainer.optimizer, best, best_epoch, epoch, history,
                       time.perf_counter() - start)


def train(model: Module, train_windows: WindowSet, val_windows: WindowSet, cfg: TrainConfig,
          validate=None) -> TrainResult:
    """Mini-batch Adam with seeded shuffling and early stopping on validation MSE.

    The returned model holds the best-validation weights. In experts-then-gate
    mode each expert of a mixture is first fitted on its own, then the whole
    mixture is fine-tuned jointly, keeping the warm start if fine-tuning never
    improves on it.
    """
    warm = cfg.mode == "experts-then-gate" and isinstance(model, MixtureOfExperts)
    if warm:
        for expert in model.experts:
            _fit(expert, train_windows, val_windows, cfg, epochs=cfg.warmup_epochs or cfg.epochs,
                 tag=f"[{expert.kind}] ")
        if cfg.finetune_lr:
            cfg = replace(cfg, lr=cfg.finetune_lr)
    return _fit(model, train_windows, val_windows, cfg, validate=validate, warm=warm)


def fit_batch(model: Module, x: np.ndarray, y: np.ndarray, steps: int, lr: float, alpha: float = 0.5,
              target: float | None = None) -> list[float]:
    """Repeated Adam steps on one fixed batch; stops early once loss < target."""
    trainer = Trainer(model, TrainConfig(lr=lr, alpha=alpha))
    losses = []
    for _ in range(steps):
        losses.append(trainer.step(x, y))
        if target is not None and losses[-1] < target:
            break
    return losses


@dataclass
class MetricReport:
    mse: float
    mae: float
    step_mse: np.ndarray
    step_mae: np.ndarray
    params: int
    seconds: float
    windows: int
    expert_metrics: dict[str, tuple[float, float]] = field(default_factory=dict)
    gate_means: dict[str, float] = field(default_factory=dict)


def collect(model: Module, windows: WindowSet, batch: int = 256):
    """Targets, forecasts and (for a mixture) expert outputs and weights, in window order."""
    ys, preds, experts, weights = [], [], [], []
    for x, y in windows.batches(batch):
        out = predict(model, x.astype(get_dtype()))
        ys.append(y)
        if isinstance(out, MixtureOutput):
            preds.append(out.prediction.data)
            experts.append(np.stack([o.data for o in out.expert_outputs]))
            weights.append(out.weights.data)
        else:
            preds.append(out.data)
    y = np.concatenate(ys)
    pred = np.concatenate(preds).astype(np.float64)
    if experts:
        return y, pred, np.concatenate(experts, axis=1).astype(np.float64), np.concatenate(weights).astype(np.float64)
    return y, pred, None, None


def evaluate(model: Module, windows: WindowSet, batch: int = 256) -> MetricReport:
    """MSE/MAE over all windows on the standardized scale; no state is modified."""
    expected = (windows.lookback, windows.horizon)
    has = _model_shape(model)
    if has[:2] != expected or has[2] != windows.values.shape[1]:
        raise ContractError(f"model expects (L, T, m)={has}, data gives "
                            f"{(windows.lookback, windows.horizon, windows.values.shape[1])}")
    start = time.perf_counter()
    y, pred, experts, weights = collect(model, windows, batch)
    err = y - pred
    report = MetricReport(
        mse=mse(y, pred), mae=mae(y, pred),
        step_mse=np.mean(err ** 2, axis=(0, 2)), step_mae=np.mean(np.abs(err), axis=(0, 2)),
        params=model.num_parameters(), seconds=0.0, windows=len(y))
    if experts is not None:
        for name, out in zip(model.expert_names, experts):
            report.expert_metrics[name] = (mse(y, out), mae(y, out))
        means = weights.reshape(-1, weights.shape[-1]).mean(axis=0)
        report.gate_means = {name: float(w) for name, w in zip(model.expert_names, means)}
    report.seconds = time.perf_counter() - start
    return report


def _model_shape(model: Module) -> tuple[int, int, int]:
    expert = model.experts[0] if isinstance(model, MixtureOfExperts) else model
    if not isinstance(expert, Expert):
        raise ContractError(f"cannot evaluate {type(model).__name__}")
    c = expert.cfg
    return c.lookback, c.horizon, c.variates


def recompute_mixture(experts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Offline mixture of collected expert outputs [n, N, T, m] with weights [N, T, n]."""
    return mix(list(experts), weights)
