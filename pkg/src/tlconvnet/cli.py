"""Command-line entry point.

    tlconvnet preprocess     --config configs/desk.json
    tlconvnet train-base     --config configs/desk.json
    tlconvnet train-transfer --config configs/desk.json
    tlconvnet evaluate       --config configs/desk.json
    tlconvnet sweep          --config configs/desk.json --grid 1 50

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric failure.
"""
import argparse
import logging
import sys

from . import pipeline
from .errors import CheckpointError, ConfigError, DataError, LeakageError, NumericError, ShapeError, TLError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", default=argparse.SUPPRESS, help="run configuration (JSON)")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="overrides the config seed")
    p.add_argument("--profile", choices=("paper", "desk"), default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output root directory")
    p.add_argument("--run-name", dest="run_name", default=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="tlconvnet", description="Transfer-learning ConvNet for intrusion detection", parents=[common])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    for name, help_ in (
        ("preprocess", "fit preprocessors and write vectorized splits"),
        ("train-base", "Stage-1: cross-validate and train ConvNet-B"),
        ("train-transfer", "Stage-2: train ConvNet-T on a frozen ConvNet-B"),
        ("evaluate", "evaluate ConvNet-TL on KDDTest+ and KDDTest-21"),
        ("run", "preprocess, train-base, train-transfer and evaluate"),
    ):
        sub.add_parser(name, help=help_, parents=[common])
    sweep = sub.add_parser("sweep", help="no-transfer baseline vs transfer at several Stage-1 epoch budgets", parents=[common])
    sweep.add_argument("--grid", type=int, nargs="+", help="Stage-1 epoch budgets (default from config)")
    return parser


def _exit_code(err):
    if isinstance(err, NumericError):
        return EXIT_NUMERIC
    if isinstance(err, (DataError, CheckpointError)):
        return EXIT_DATA
    if isinstance(err, (ConfigError, ShapeError, LeakageError)):
        return EXIT_CONFIG
    return EXIT_DATA


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _dispatch(args)
    except TLError as e:
        print(f"tlconvnet {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return _exit_code(e)


def _dispatch(args):
    if not hasattr(args, "config"):
        raise ConfigError("--config is required")
    overrides = {k: getattr(args, k, None) for k in ("seed", "profile", "out", "run_name")}
    cfg = pipeline.RunConfig.load(args.config, overrides)
    if args.command == "preprocess":
        summary, width, stats = pipeline.cmd_preprocess(cfg)
        print(f"vector width {width}")
        for name, n in summary.items():
            print(f"  {name:<14}{n:>8} rows")
        print(pipeline.format_stats(stats), end="")
    elif args.command == "train-base":
        report = pipeline.cmd_train_base(cfg)
        cv = report["cv"]
        if cv:
            print(f"{len(cv['folds'])}-fold CV accuracy {cv['mean_val_acc']:.4f} +/- {cv['std_val_acc']:.4f}")
        print(f"wrote {cfg.run_dir / 'base.ckpt'}")
    elif args.command == "train-transfer":
        history = pipeline.cmd_train_transfer(cfg)
        if history.epochs:
            last = history.epochs[-1]
            print(f"{len(history)} epochs, final loss {last.train_loss:.4f}, train acc {last.train_acc}")
        print(f"wrote {cfg.run_dir / 'tl.ckpt'}")
    elif args.command == "evaluate":
        pipeline.cmd_evaluate(cfg)
        print((cfg.run_dir / "report.txt").read_text(), end="")
    elif args.command == "sweep":
        pipeline.cmd_sweep(cfg, args.grid)
        print((cfg.run_dir / "sweep.txt").read_text(), end="")
    elif args.command == "run":
        pipeline.run_all(cfg)
        print((cfg.run_dir / "report.txt").read_text(), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
