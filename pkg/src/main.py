#
# file: main.py
#
import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

from .audit_manager import (
    ablation,
    fig2_dynamics,
    run_mib_baseline,
    run_tape_audit,
    train_base_model,
)
from .profiles import PROFILES
from .reports import load_report, render_report
from .sweep import parse_axis_values, sweep
from .utils.config import ExperimentConfig, load_config
from .utils.debug_utils import init_logging
from .utils.errors import ArgumentError, MissingConfigError, TapeError, UsageError
from .utils.unlearning import UnlearnerKind

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as e:
        raise UsageError(f"bad seed list '{text}': {e}") from e
    if not seeds:
        raise UsageError("at least one seed is required")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config document (tape-config-1)")
    common.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    common.add_argument("--seed", type=int)
    common.add_argument("--ess", type=int, help="erased sample size")
    common.add_argument("--alpha", type=float, help="UDP perturbation limit")
    common.add_argument("--unlearner", choices=[k.value for k in UnlearnerKind])
    common.add_argument("--local-size", dest="local_size", type=int)
    common.add_argument("--out-dir", dest="out_dir")

    parser = _Parser(prog="tape-audit", description="Audit machine unlearning with TAPE.")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", parents=[common], help="train and save the original model")
    train.add_argument("--output", type=Path)
    sub.add_parser("audit", parents=[common], help="run one TAPE audit")
    sub.add_parser("baseline", parents=[common], help="run the backdoor (MIB) baseline")

    sw = sub.add_parser("sweep", parents=[common], help="sweep ess or alpha over seeds")
    sw.add_argument("--axis", choices=["ess", "alpha"], required=True)
    sw.add_argument("--values", required=True, help="comma-separated axis values")
    sw.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")
    sw.add_argument("--output", type=Path)

    sub.add_parser("dynamics", parents=[common], help="forgetting dynamics under gradient ascent")

    ab = sub.add_parser("ablation", parents=[common], help="TAPE with and without UDP/UID")
    ab.add_argument("--seeds", help="comma-separated seeds (default: the config seed)")

    rep = sub.add_parser("report", help="render a JSON audit report as a table")
    rep.add_argument("path", type=Path)
    return parser


def _load(args: argparse.Namespace, **forced) -> ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "ess": args.ess,
        "alpha": args.alpha,
        "unlearner": args.unlearner,
        "local_size": args.local_size,
        "out_dir": args.out_dir,
    }
    for key, value in forced.items():
        if overrides.get(key) is None:
            overrides[key] = value
    cfg = load_config(args.config, profile=args.profile, **overrides)
    init_logging(cfg.out_dir)
    return cfg


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "report":
        print(render_report(load_report(args.path)))
        return EXIT_OK

    if args.command == "dynamics":
        cfg = _load(args, unlearner=UnlearnerKind.ASCENT.value)
    else:
        cfg = _load(args)

    if args.command == "train":
        print(f"Saved original model to {train_base_model(cfg, args.output)}")
    elif args.command == "audit":
        report = run_tape_audit(cfg)
        print(render_report(report))
        print(f"Results written to {cfg.out_dir}")
    elif args.command == "baseline":
        report = run_mib_baseline(cfg, trigger_alpha=args.alpha)
        print(render_report(report))
    elif args.command == "sweep":
        try:
            values = parse_axis_values(args.axis, args.values)
        except ArgumentError as e:
            raise UsageError(str(e)) from e
        seeds = _seed_list(args.seeds) if args.seeds else [cfg.seed]
        out = args.output or Path(cfg.out_dir) / f"sweep_{args.axis}.csv"
        frame = sweep(cfg, args.axis, values, seeds, out)
        print(f"{len(frame)} sweep rows written to {out}")
    elif args.command == "dynamics":
        frame = fig2_dynamics(cfg)
        print(frame.to_string(index=False))
    elif args.command == "ablation":
        seeds = _seed_list(args.seeds) if args.seeds else [cfg.seed]
        print(ablation(cfg, seeds).to_string(index=False))
    return EXIT_OK


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Exit code 0 on success, 1 on usage errors, 2 on runtime errors."""
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"FATAL: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return int(e.code or 0)

    try:
        return _dispatch(args)
    except (UsageError, MissingConfigError) as e:
        print(f"FATAL: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TapeError as e:
        print(f"FATAL: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:
        print(f"FATAL: An unexpected error occurred: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def run():
    sys.exit(cli_main(sys.argv[1:]))


if __name__ == "__main__":
    run()
