"""Command-line entry point: ``defrag {train,eval,features,selftest}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import metrics
from .checkpoint import read_checkpoint, save_checkpoint
from .config import RunConfig
from .errors import ConfigError, FormatError, TrainingError
from .selftest import run_selftest
from .train import load_datasets, train

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("defrag")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--out", default="runs/latest", help="output directory")
    group = p.add_argument_group("config overrides")
    for f in fields(RunConfig):
        group.add_argument(f"--{f.name}", dest=f"cfg_{f.name}", default=None, metavar=f.type.upper())


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="defrag", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", parents=[common], help="train a model and write checkpoint, history and config")
    _add_config_flags(p)

    p = sub.add_parser("eval", parents=[common], help="JSON metrics report for a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint-path", dest="ckpt", help="checkpoint to evaluate (default: <out>/model.ckpt)")

    p = sub.add_parser("features", parents=[common], help="export per-sample features as CSV")
    _add_config_flags(p)
    p.add_argument("--checkpoint-path", dest="ckpt")
    p.add_argument("--split", choices=("train", "test"), default="test")

    sub.add_parser("selftest", parents=[common], help="gradient, retraction and loss-oracle checks")
    return parser


def effective_config(args, base: dict | None = None) -> RunConfig:
    """Merge (checkpoint config) < (config file) < (command-line flags)."""
    values = dict(base or {})
    if args.config:
        values.update(RunConfig.from_json(args.config).to_dict())
    for f in fields(RunConfig):
        flag = getattr(args, f"cfg_{f.name}")
        if flag is not None:
            values[f.name] = flag
    return RunConfig.from_dict(values)


def _write_config(cfg: RunConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_train(args) -> int:
    cfg = effective_config(args)
    out = Path(args.out)
    _write_config(cfg, out)
    model, history = train(cfg)
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else out / "model.ckpt"
    save_checkpoint(model, history, ckpt, cfg)
    history.write_csv(out / "history.csv")
    history.write_timing(out / "timing.csv")
    print(f"wrote {ckpt}, {out / 'history.csv'}")
    return EXIT_OK


def _load_for_eval(args):
    out = Path(args.out)
    path = Path(args.ckpt) if args.ckpt else out / "model.ckpt"
    if not path.exists():
        raise ConfigError(f"checkpoint: file {path} does not exist")
    ckpt = read_checkpoint(path)
    cfg = effective_config(args, ckpt.config)
    return ckpt, cfg, out


def cmd_eval(args) -> int:
    ckpt, cfg, out = _load_for_eval(args)
    train_data, test_data = load_datasets(cfg)
    if test_data is None:
        raise ConfigError("test_images: evaluation needs a test split")
    report = metrics.evaluate(ckpt.model, train_data, test_data, cfg.delta)
    out.mkdir(parents=True, exist_ok=True)
    _write_config(cfg, out)
    metrics.write_report(report, out / "metrics.json")
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_features(args) -> int:
    ckpt, cfg, out = _load_for_eval(args)
    train_data, test_data = load_datasets(cfg, need_test=args.split == "test")
    data = train_data if args.split == "train" else test_data
    if data is None:
        raise ConfigError("test_images: no test split available")
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"features_{args.split}.csv"
    metadata = {"method": ckpt.model.method, "seed": cfg.seed, "epoch": len(ckpt.history)}
    dump = metrics.export_features(ckpt.model, data, target, metadata)
    print(f"wrote {len(dump)} rows to {target}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    return EXIT_OK if run_selftest() else EXIT_RUNTIME


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "features": cmd_features, "selftest": cmd_selftest}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"defrag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"defrag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, TrainingError, OSError, ValueError, RuntimeError) as exc:
        print(f"defrag: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
