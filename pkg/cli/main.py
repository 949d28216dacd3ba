"""``symmflow`` command line: gen, train, eval, augment, plot, selftest."""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence

from pydantic import ValidationError

from cli import settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# subcommands

def _cmd_gen(args: argparse.Namespace) -> int:
    from datagen.solver import generate_dataset

    extra: Dict[str, Any] = {}
    if args.horizon is not None:
        extra["horizon"] = args.horizon
    if args.length is not None:
        extra["length"] = args.length
    if args.nu is not None:
        extra["params"] = {"nu": args.nu}
    paths = generate_dataset(
        args.eq, args.n, args.nx, args.nt, args.out, seed=args.seed, jobs=args.jobs,
        n_modes=args.modes, **extra,
    )
    print(f"Wrote {len(paths)} bundles to {args.out}")
    return EXIT_OK


def _train_config(args: argparse.Namespace):
    from training.config import preset

    return preset(
        args.preset,
        equation=args.eq,
        epochs=args.epochs,
        batch_size=args.batch,
        n_sym=args.nsym,
        sigma=args.sigma,
        tau=args.tau,
        w_sym=args.wsym,
        w_ortho=args.wortho,
        w_lips=args.wlips,
        lr=args.lr,
        residual_points=args.residual_points,
        seed=args.seed,
    )


def _cmd_train(args: argparse.Namespace) -> int:
    from training.trainer import train

    config = _train_config(args)
    result = train(config, args.data, args.out)
    last = result.log[-1]
    print(f"Trained {config.equation} for {config.epochs} epochs: total loss {last['total']:.6g}")
    print(f"Checkpoint: {result.checkpoint}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    from datagen.bundle_io import read_dataset
    from evaluation.compare import evaluate_bank
    from evaluation.report import export_evaluation
    from flow.checkpoint import load_checkpoint
    from pde_suite.equations import get_spec
    from training.normalization import fit_normalization

    bank, theta, header = load_checkpoint(args.ckpt)
    if header.equation != args.eq:
        raise ValueError(f"checkpoint was trained on {header.equation!r}, not {args.eq!r}")
    bundles = read_dataset(args.data, limit=args.limit)
    if not bundles:
        raise ValueError(f"no bundles in {args.data}")
    mismatched = [b.seed for b in bundles if b.name != args.eq]
    if mismatched:
        raise ValueError(f"bundles {mismatched[:5]} are not {args.eq!r} data")
    norm = header.normalization if header.normalization is not None else fit_normalization(bundles)
    spec = get_spec(args.eq, **bundles[0].params)
    report = evaluate_bank(spec, bank, theta, norm, bundles, with_as=not args.skip_as)
    paths = export_evaluation(report, bank, theta, args.out)
    print(f"Recovered {report['recovered_count']} of {len(report['gt_names'])} ground-truth generators")
    print(f"Report: {paths['report']}")
    return EXIT_OK


def _cmd_augment(args: argparse.Namespace) -> int:
    from datagen.bundle_io import read_dataset
    from resample.augment import augment_dataset

    bundles = read_dataset(args.data, limit=args.limit)
    mismatched = [b.seed for b in bundles if b.name != args.eq]
    if mismatched:
        raise ValueError(f"bundles {mismatched[:5]} are not {args.eq!r} data")
    summary = augment_dataset(
        bundles,
        args.gen,
        args.out,
        count=args.count,
        sigma=args.sigma,
        seed=args.seed,
        slots=args.slots,
        fixed_scale=args.scale,
        method=args.method,
        jobs=args.jobs,
    )
    print(f"Wrote {len(summary.written)} augmented bundles to {args.out} ({summary.skipped} skipped)")
    return EXIT_OK


def _cmd_plot(args: argparse.Namespace) -> int:
    from cli.plotting import plot_report

    for path in plot_report(args.report, args.out or args.report):
        print(path)
    return EXIT_OK


def _cmd_selftest(args: argparse.Namespace) -> int:
    from proptest.properties import run_suite

    report = run_suite(args.tier, seed=args.seed, out=args.out, jobs=args.jobs)
    for r in report.results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: observed {r.observed:.4g} ({r.kind} {r.bound:.4g}) {r.detail}")
    print(f"{len(report.results) - len(report.failures)}/{len(report.results)} properties passed")
    return EXIT_OK if report.passed else EXIT_RUNTIME


# parser

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key = value file mirroring the long flags")
    p.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")


def build_parser() -> argparse.ArgumentParser:
    from pde_suite.equations import EQUATIONS
    from resample.augment import METHODS
    from training.config import PRESETS

    equations = sorted(EQUATIONS)
    parser = _Parser(prog="symmflow", description="Learn symmetry generators of 1D evolution PDEs.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a PDE dataset")
    gen.add_argument("--eq", choices=equations, required=True)
    gen.add_argument("--n", type=int, default=None, help="number of bundles")
    gen.add_argument("--nx", type=int, default=None)
    gen.add_argument("--nt", type=int, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.add_argument("--horizon", type=float, default=None)
    gen.add_argument("--length", type=float, default=None)
    gen.add_argument("--nu", type=float, default=None, help="Burgers viscosity")
    gen.add_argument("--modes", type=int, default=10, help="Fourier modes in the initial condition")
    gen.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    gen.add_argument("--jobs", type=int, default=None)
    gen.set_defaults(handler=_cmd_gen)

    train = sub.add_parser("train", help="train a generator bank")
    train.add_argument("--eq", choices=equations, required=True)
    train.add_argument("--data", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--batch", type=int, default=None)
    train.add_argument("--nsym", type=int, default=None)
    train.add_argument("--sigma", type=float, default=None)
    train.add_argument("--tau", type=float, default=None)
    train.add_argument("--wsym", type=float, default=None)
    train.add_argument("--wortho", type=float, default=None)
    train.add_argument("--wlips", type=float, default=None)
    train.add_argument("--lr", type=float, default=None)
    train.add_argument("--residual-points", type=int, default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    train.set_defaults(handler=_cmd_train)

    ev = sub.add_parser("eval", help="compare a checkpoint with the ground truth")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--eq", choices=equations, required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--limit", type=int, default=None, help="use at most this many bundles")
    ev.add_argument("--skip-as", action="store_true", help="skip the approximate-symmetry check")
    ev.set_defaults(handler=_cmd_eval)

    aug = sub.add_parser("augment", help="write symmetry-transformed copies of a dataset")
    aug.add_argument("--data", required=True)
    aug.add_argument("--gen", required=True, help="'gt' or a checkpoint directory")
    aug.add_argument("--eq", choices=equations, required=True)
    aug.add_argument("--count", type=int, default=1, help="draws per source bundle")
    aug.add_argument("--sigma", type=float, default=0.4)
    aug.add_argument("--seed", type=int, default=0)
    aug.add_argument("--out", required=True)
    aug.add_argument("--slots", type=int, nargs="+", default=None)
    aug.add_argument("--scale", type=float, default=None, help="fixed scale instead of U[-sigma, sigma]")
    aug.add_argument("--method", choices=METHODS, default="whittaker_shannon")
    aug.add_argument("--limit", type=int, default=None)
    aug.add_argument("--jobs", type=int, default=None)
    aug.set_defaults(handler=_cmd_augment)

    plot = sub.add_parser("plot", help="heatmap and quiver plots from an eval directory")
    plot.add_argument("--report", required=True, help="directory holding report.json and fields.csv")
    plot.add_argument("--out", default=None)
    plot.set_defaults(handler=_cmd_plot)

    st = sub.add_parser("selftest", help="run the property suite")
    st.add_argument("--tier", choices=("fast", "full", "acceptance"), default="fast")
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", default=None, help="directory for results.json")
    st.add_argument("--jobs", type=int, default=None)
    st.set_defaults(handler=_cmd_selftest)

    for p in (gen, train, ev, aug, plot, st):
        _add_common(p)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _apply_config_file(parser: argparse.ArgumentParser, argv: Sequence[str]) -> None:
    """Feed config-file values in as subcommand defaults so explicit flags still win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    path = known.config or settings.default_config_path()
    if not path or not known.command:
        return
    values = settings.read_config_file(path)
    sub = _subparser(parser, known.command)
    actions = {a.dest: a for a in sub._actions}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise settings.ConfigFileError(f"{path}: unknown keys for '{known.command}': {unknown}")
    defaults: Dict[str, Any] = {}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            defaults[key] = [action.type(v) if action.type else v for v in raw.split()]
        else:
            defaults[key] = raw
        # a file value satisfies a required flag
        action.required = False
    sub.set_defaults(**defaults)


def _resolve_defaults(args: argparse.Namespace) -> None:
    from training.config import PRESETS

    if getattr(args, "jobs", 0) is None:
        args.jobs = settings.default_jobs()
    if args.command == "gen":
        base = PRESETS[args.preset]
        args.n = base.dataset_size if args.n is None else args.n
        args.nx = base.n_x if args.nx is None else args.nx
        args.nt = base.n_t if args.nt is None else args.nt


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    settings.load_environment()
    try:
        settings.configure_logging()
        parser = build_parser()
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if args.log_level:
            settings.configure_logging(args.log_level)
        _resolve_defaults(args)
        handler: Callable[[argparse.Namespace], int] = args.handler
        return handler(args)
    except (ValueError, ValidationError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except Exception as exc:
        logger.exception("symmflow failed: %s", exc)
        return EXIT_RUNTIME


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

