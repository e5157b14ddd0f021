"""Flat ``key = value`` run configuration with ``#`` comments."""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .data import PROTOCOLS
from .errors import ConfigError
from .experts import EXPERT_KINDS, ExpertConfig
from .gating import GatingConfig
from .preprocess import DecompositionConfig, PatchConfig
from .training import MODES, TrainConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _experts(text: str) -> tuple[str, ...]:
    return tuple(k.strip() for k in text.split(",") if k.strip())


# key -> (parser, help); defaults live on RunConfig
SCHEMA: dict[str, tuple] = {
    "dataset": (str, "path to the CSV (relative paths resolve against the config file)"),
    "name": (str, "dataset label written to metrics tables (default: file stem)"),
    "protocol": (str, f"split protocol: {', '.join(PROTOCOLS)}"),
    "lookback": (int, "lookback window L"),
    "horizon": (int, "forecast horizon T"),
    "variates": (int, "number of variates m (0 = take from the dataset)"),
    "experts": (_experts, f"comma-separated subset of {', '.join(EXPERT_KINDS)}"),
    "kernel": (int, "decomposition moving-average window (odd)"),
    "learnable_ma": (_bool, "learn the decomposition kernel weights"),
    "revin": (_bool, "reversible instance normalization on/off"),
    "patch_len": (int, "patch length P"),
    "stride": (int, "patch stride S"),
    "d_model": (int, "patch transformer width"),
    "n_heads": (int, "patch transformer heads"),
    "n_layers": (int, "patch transformer layers"),
    "d_ff": (int, "patch transformer feed-forward width"),
    "dropout": (float, "patch transformer dropout rate"),
    "mingru_hidden": (int, "minGRU hidden width"),
    "mingru_layers": (int, "stacked minGRU layers"),
    "slstm_hidden": (int, "sLSTM hidden width"),
    "d_gate": (int, "gating transformer width"),
    "gate_heads": (int, "gating transformer heads"),
    "gate_layers": (int, "gating transformer layers"),
    "k": (int, "gate-logit moving-average window (0 = 25 if T >= 96 else 5)"),
    "lr": (float, "Adam learning rate"),
    "alpha": (float, "loss blend: alpha*MSE + (1-alpha)*MAE"),
    "batch": (int, "mini-batch size"),
    "epochs": (int, "maximum epochs"),
    "patience": (int, "early-stopping patience in epochs"),
    "seed": (int, "seed for initialization and shuffling"),
    "mode": (str, f"training mode: {', '.join(MODES)}"),
    "warmup_epochs": (int, "experts-then-gate: standalone epochs per expert (0 = epochs)"),
    "finetune_lr": (float, "experts-then-gate: learning rate of the joint phase (0 = lr)"),
    "train_stride": (int, "stride between training windows"),
    "eval_stride": (int, "stride between validation/test windows"),
    "out_dir": (str, "output directory for checkpoint, metrics and log"),
    "timing": (_bool, "fill the seconds column of metrics tables (breaks byte-identical reruns)"),
}


@dataclass(frozen=True)
class RunConfig:
    dataset: str = ""
    name: str = ""
    protocol: str = "ett-hour"
    lookback: int = 512
    horizon: int = 96
    variates: int = 0
    experts: tuple[str, ...] = EXPERT_KINDS
    kernel: int = 25
    learnable_ma: bool = False
    revin: bool = True
    patch_len: int = 16
    stride: int = 8
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout: float = 0.0
    mingru_hidden: int = 64
    mingru_layers: int = 2
    slstm_hidden: int = 64
    d_gate: int = 64
    gate_heads: int = 4
    gate_layers: int = 1
    k: int = 0
    lr: float = 1e-4
    alpha: float = 0.5
    batch: int = 32
    epochs: int = 50
    patience: int = 5
    seed: int = 0
    mode: str = "joint"
    warmup_epochs: int = 0
    finetune_lr: float = 0.0
    train_stride: int = 1
    eval_stride: int = 1
    out_dir: str = "runs"
    timing: bool = False

    def __post_init__(self):
        if not self.experts:
            raise ConfigError("experts: at least one expert is required")
        for kind in self.experts:
            if kind not in EXPERT_KINDS:
                raise ConfigError(f"experts: unknown expert {kind!r}; expected a subset of {EXPERT_KINDS}")
        if len(set(self.experts)) != len(self.experts):
            raise ConfigError(f"experts: duplicate entries in {self.experts}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol: unknown split protocol {self.protocol!r}")
        if self.horizon < 1:
            raise ConfigError(f"horizon: must be >= 1, got {self.horizon}")
        if self.lookback < self.patch_len:
            raise ConfigError(f"lookback: L={self.lookback} is shorter than patch_len={self.patch_len}")
        if self.variates < 0:
            raise ConfigError("variates: must be >= 0")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model: {self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.train_stride < 1 or self.eval_stride < 1:
            raise ConfigError("train_stride and eval_stride must be >= 1")
        # delegate remaining range checks
        DecompositionConfig(self.kernel, self.learnable_ma)
        PatchConfig(self.patch_len, self.stride)
        self.train_config()
        self.gating_config()

    def expert_config(self, variates: int | None = None) -> ExpertConfig:
        m = variates or self.variates
        if m < 1:
            raise ConfigError("variates: unknown; load the dataset first")
        return ExpertConfig(
            lookback=self.lookback, horizon=self.horizon, variates=m, kernel=self.kernel,
            learnable_ma=self.learnable_ma, revin=self.revin, patch_len=self.patch_len, stride=self.stride,
            d_model=self.d_model, n_heads=self.n_heads, n_layers=self.n_layers, d_ff=self.d_ff,
            dropout=self.dropout, mingru_hidden=self.mingru_hidden, mingru_layers=self.mingru_layers,
            slstm_hidden=self.slstm_hidden)

    def gating_config(self) -> GatingConfig:
        gc = GatingConfig(len(self.experts), self.d_gate, self.gate_heads, self.gate_layers, self.k)
        gc.window(self.horizon)
        return gc

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.lr, self.batch, self.epochs, self.patience, self.alpha, self.seed,
                           self.mode, self.warmup_epochs, self.finetune_lr)

    def replace(self, **changes) -> RunConfig:
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in changes:
            if key not in values:
                raise ConfigError(f"unknown config key {key!r}")
        values.update(changes)
        return RunConfig(**values)

    def dumps(self) -> str:
        """Canonical text: sorted keys, one per line."""
        return "".join(f"{key} = {_format(getattr(self, key))}\n" for key in sorted(SCHEMA))


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(text: str, base_dir: Path | None = None) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    if base_dir is not None and values.get("dataset") and not Path(values["dataset"]).is_absolute():
        values["dataset"] = str((base_dir / values["dataset"]).resolve())
    try:
        return RunConfig(**values)
    except TypeError as exc:  # pragma: no cover - schema and dataclass agree
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)


def describe_keys() -> str:
    """Help text listing every key with its default."""
    defaults = RunConfig()
    width = max(map(len, SCHEMA))
    return "\n".join(f"  {key:<{width}}  {text} [default: {_format(getattr(defaults, key))}]"
                     for key, (_, text) in SCHEMA.items())
