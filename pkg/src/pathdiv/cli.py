"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 infeasible request,
4 enumeration limit exceeded. Failures print ``error: <reason>: <detail>``
on stderr, where ``<reason>`` is a stable machine-readable code.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

from . import runner
from .allocation import METHODS, EnumerationLimitExceeded
from .asymptotics import BracketEscape, InfeasibleCaps, SharedProfileRequired
from .config import ConfigError, load
from .engine import CapViolation

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ENUMERATION = 0, 2, 3, 4


def _parse_allocation(text: Optional[str]):
    if text is None:
        return None
    try:
        return [int(x) for x in text.split(";") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--allocation must be semicolon-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathdiv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--out", help="CSV destination (default stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("exponent", help="asymptotic exponents and optimal fractions per alpha")
    common(p)
    p = sub.add_parser("allocate", help="compute one allocation and its exact loss probability")
    common(p)
    p.add_argument("--method", required=True, choices=sorted(METHODS))
    p.add_argument("--no-timing", action="store_true", help="leave runtime_ms blank for reproducible output")
    for name, helptext in (("evaluate", "exact loss probability of an allocation"),
                           ("simulate", "Monte Carlo loss probability of an allocation")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--method", default="equal", choices=sorted(METHODS))
        p.add_argument("--allocation", help="explicit per-type counts, e.g. '3;7'")
        if name == "simulate":
            p.add_argument("--trials", type=int, help="fixed trial count (default: config policy)")
            p.add_argument("--workers", type=int, default=1)
    p = sub.add_parser("sweep", help="run the config's sweep and emit per-point and slope rows")
    common(p)
    p.add_argument("--axis", choices=("mu_b_t", "paths_l", "delta"))
    p.add_argument("--trials", type=int, help="fixed trial count per point (default: config policy)")
    p.add_argument("--workers", type=int, default=1, help="sweep points run concurrently")
    return ap


def _dispatch(args) -> str:
    cfg = load(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.command == "exponent":
        return runner.to_csv(runner.cmd_exponent(cfg), runner.EXPONENT_COLUMNS)
    if args.command == "allocate":
        rows = runner.cmd_allocate(cfg, args.method, timing=not args.no_timing)
        return runner.to_csv(rows, runner.ALLOCATE_COLUMNS)
    if args.command == "evaluate":
        return runner.to_csv(runner.cmd_evaluate(cfg, args.method, _parse_allocation(args.allocation)))
    if args.command == "simulate":
        if args.trials is not None and args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        rows = runner.cmd_simulate(cfg, args.method, _parse_allocation(args.allocation),
                                   trials=args.trials, workers=args.workers)
        return runner.to_csv(rows)
    if args.trials is not None and args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    return runner.to_csv(runner.cmd_sweep(cfg, args.axis, trials=args.trials, workers=args.workers))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = _dispatch(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config_error", exc)
    except EnumerationLimitExceeded as exc:
        return _fail(EXIT_ENUMERATION, "enumeration_limit_exceeded", exc)
    except (CapViolation, InfeasibleCaps) as exc:
        return _fail(EXIT_INFEASIBLE, "cap_infeasible", exc)
    except SharedProfileRequired as exc:
        return _fail(EXIT_INFEASIBLE, "profiles_differ", exc)
    except BracketEscape as exc:
        return _fail(EXIT_INFEASIBLE, "root_out_of_range", exc)
    except ValueError as exc:
        return _fail(EXIT_INFEASIBLE, "model_out_of_range", exc)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _fail(code: int, reason: str, exc: Exception) -> int:
    print(f"error: {reason}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
