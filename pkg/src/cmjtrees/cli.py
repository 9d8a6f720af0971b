"""Command-line entry point: ``cmjtrees {alpha,simulate,renewal,verify,export}``.

Exit codes: 0 success, 1 usage or config error, 2 analysis domain error,
3 more than 1% of replicates failed, 4 at least one verification criterion
failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .analysis import RegimeSchedule, predict
from .config import EXPERIMENT_KEYS, FAMILY_KEYS, family_from_mapping, load_config
from .engine import SimOptions, export_tree, simulate
from .errors import CMJError, ConfigError, DomainError, ExperimentFailed, InvalidParams, NoBracket, Subcritical
from .experiments import run_experiment, write_report
from .families import PRESETS, Kind, check_assumptions
from .renewal import mean_count

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_PARTIAL, EXIT_VERIFY = 0, 1, 2, 3, 4

EPILOG = f"""\
family kinds: {", ".join(k.value for k in Kind)}
presets: {", ".join(sorted(PRESETS))}

config file sections and keys:
  [family]      {", ".join(FAMILY_KEYS)}
  [experiment]  {", ".join(EXPERIMENT_KEYS)}

The master seed is taken from --seed, else from $CMJ_SEED, else from the
config file.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=lambda s: int(s, 0), help="master seed (overrides $CMJ_SEED and the config)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, default=None, help="worker processes for replicate studies")
    return common


def _family_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", default="rrt", help="preset name or family kind (default rrt)")
    p.add_argument(
        "--set",
        dest="params",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help=f"family key, repeatable; keys: {', '.join(FAMILY_KEYS[1:])}",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="cmjtrees",
        description="Percolated Crump-Mode-Jagers family trees: simulation and limit constants.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()
    fmt = argparse.RawDescriptionHelpFormatter

    a = sub.add_parser("alpha", parents=[common], help="Malthusian constants and limit predictions", epilog=EPILOG, formatter_class=fmt)
    _family_args(a)
    a.add_argument("--regime", choices=["weak", "super", "strong", "fixed"], help="percolation regime")
    a.add_argument("--c", type=float, help="constant of the super regime")
    a.add_argument("--p", type=float, help="fixed percolation parameter")
    a.add_argument("--n", type=float, help="weight threshold for finite-n values")
    a.add_argument("--csv", action="store_true", help="print CSV instead of aligned text")
    a.add_argument("--assumptions", action="store_true", help="also print the assumption checks")

    s = sub.add_parser("simulate", parents=[common], help="run a replicate study from a config file", epilog=EPILOG, formatter_class=fmt)
    s.add_argument("config", help="path to the INI config")

    r = sub.add_parser("renewal", parents=[common], help="mean counted process from the renewal equation", epilog=EPILOG, formatter_class=fmt)
    _family_args(r)
    r.add_argument("--p", type=float, default=1.0)
    r.add_argument("--T", type=float, default=5.0, help="horizon")
    r.add_argument("--h", type=float, default=1e-3, help="grid step")
    r.add_argument("--every", type=int, default=1, help="print every k-th grid point")

    v = sub.add_parser("verify", parents=[common], help="run the acceptance checks", epilog=EPILOG, formatter_class=fmt)
    v.add_argument("--tier", default="fast", choices=["fast", "full"])
    v.add_argument("--only", type=int, action="append", help="criterion number, repeatable")

    e = sub.add_parser("export", parents=[common], help="simulate one tree and write its edge list", epilog=EPILOG, formatter_class=fmt)
    _family_args(e)
    e.add_argument("--n", type=float, required=True, help="weight threshold")
    e.add_argument("--p", type=float, default=1.0)
    return parser


def _family(args):
    values = {"kind": args.family}
    for item in args.params:
        if "=" not in item:
            raise InvalidParams(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    return family_from_mapping(values)


def _seed(args, default=None):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CMJ_SEED")
    if env:
        try:
            return int(env, 0)
        except ValueError:
            raise ConfigError(f"CMJ_SEED={env!r} is not an integer") from None
    return default


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_alpha(args) -> int:
    fam = _family(args)
    if args.regime in (None, "fixed"):
        sched = RegimeSchedule("fixed", p=1.0 if args.p is None else args.p)
    else:
        sched = RegimeSchedule(args.regime, c=args.c)
    report = predict(fam, sched, args.n)
    text = report.to_csv() if args.csv else report.to_text() + "\n"
    if args.assumptions:
        text += str(check_assumptions(fam)) + "\n"
    _emit(text, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed=_seed(args), outputs=args.out, parallelism=args.threads)
    if not cfg.outputs:
        raise ConfigError("no output directory: set 'outputs' in [experiment] or pass --out")
    try:
        report = run_experiment(cfg)
    except ExperimentFailed as exc:
        print(f"cmjtrees: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    raw, agg = write_report(report, cfg.outputs)
    print(f"wrote {raw} ({len(report.raw)} rows) and {agg}")
    if report.failures:
        print(f"{len(report.failures)} replicate(s) failed, see failures.csv", file=sys.stderr)
    return EXIT_OK


def cmd_renewal(args) -> int:
    table = mean_count(_family(args), args.p, args.T, args.h)
    _emit(table.to_csv(every=max(1, args.every)), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verification import run_criteria

    results = run_criteria(args.tier, workers=args.threads or 1, only=args.only, echo=print)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed" + (f"; failed: {failed}" if failed else ""))
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_export(args) -> int:
    out = simulate(_family(args), args.n, args.p, _seed(args, 0), SimOptions("full"))
    data = export_tree(out)
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
    return EXIT_OK


COMMANDS = {
    "alpha": cmd_alpha,
    "simulate": cmd_simulate,
    "renewal": cmd_renewal,
    "verify": cmd_verify,
    "export": cmd_export,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (DomainError, Subcritical, NoBracket) as exc:
        print(f"cmjtrees: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ConfigError, InvalidParams) as exc:
        print(f"cmjtrees: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CMJError as exc:
        print(f"cmjtrees: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"cmjtrees: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
