"""Command-line entry point: ``moets {train,eval,forecast,export-gates}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from .config import describe_keys, load_config
from .errors import ConfigError, MoetsError
from . import pipeline


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _thread_limit():
    """Cap BLAS threads from EMTSF_THREADS (unset: library default)."""
    raw = os.environ.get("EMTSF_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"EMTSF_THREADS must be an integer, got {raw!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=max(n, 1))


def build_parser() -> argparse.ArgumentParser:
    epilog = "config keys (flat key = value file, '#' starts a comment):\n" + describe_keys()
    parser = _Parser(prog="moets", description="Mixture-of-experts time-series forecasting.",
                     epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", required=True, type=Path, help="run configuration file")
        p.add_argument("--checkpoint", type=Path, help="checkpoint path (default: <out_dir>/checkpoint.emts)")
        p.add_argument("--out", type=Path, help="output CSV path")
        return p

    command("train", "train the mixture and write checkpoint, metrics CSV and run log")
    command("eval", "evaluate a checkpoint on the test split (MoE row plus one row per expert)")
    for name, text in (("forecast", "write actual vs predicted values for one window"),
                       ("export-gates", "write per-timestep gating weights for one window")):
        p = command(name, text)
        p.add_argument("--origin", type=int, help="start row of the lookback window (default: first test window)")
        if name == "export-gates":
            p.add_argument("--svg", type=Path, help="also write a stacked-area SVG here")
    return parser


def run(args: argparse.Namespace) -> None:
    cfg = load_config(args.config)
    out_dir = Path(cfg.out_dir)
    if not out_dir.is_absolute():
        out_dir = (args.config.parent / out_dir).resolve()
        cfg = cfg.replace(out_dir=str(out_dir))
    checkpoint = args.checkpoint or out_dir / pipeline.CHECKPOINT_NAME
    if args.command == "train":
        result = pipeline.run_train(cfg, checkpoint, args.out)
        print(f"checkpoint: {result.checkpoint}\nmetrics: {result.metrics}\nlog: {result.log}")
    elif args.command == "eval":
        print(pipeline.run_eval(checkpoint, args.out or out_dir / "eval.csv", cfg))
    elif args.command == "forecast":
        print(pipeline.run_forecast(checkpoint, args.out or out_dir / "forecast.csv", args.origin, cfg))
    else:
        print(pipeline.run_export_gates(checkpoint, args.out or out_dir / "gates.csv", args.origin, args.svg, cfg))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            run(args)
    except MoetsError as exc:
        print(f"moets: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"moets: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
