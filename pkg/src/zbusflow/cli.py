"""Command line entry point: ``zbusflow {build,solve,check,sweep}``.

Exit codes: 0 success, 2 usage error, 3 parse error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParseError
from .feeder_io import emit_results, parse_feeder, sweep_csv, ybus_triplets
from .loads import assemble_YL
from .solver import SolverConfig, build_network, epsilon_sweep, solve
from .ybus import check_invertibility

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERICAL = 0, 2, 3, 4


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--feeder", required=True, help="feeder JSON path or bundled name (ieee37, ieee123)")
    p.add_argument("--epsilon", type=float, default=1e-6, help="regularization relative to |y_t| (default 1e-6)")
    p.add_argument("--epsilon-mode", choices=("resistive", "reactive"), default="resistive")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zbusflow", description="Three-phase Y-Bus assembly and Z-Bus load flow.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="assemble Y and export it as row/col/re/im triplets")
    _add_common(p)
    p.add_argument("--zero-based", action="store_true", help="emit 0-based indices")
    p.add_argument("--out", default="-")

    p = sub.add_parser("solve", help="run the Z-Bus load flow and write a voltage CSV")
    _add_common(p)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out", default="-")

    p = sub.add_parser("check", help="print invertibility diagnostics and the assumption ledger")
    _add_common(p)

    p = sub.add_parser("sweep", help="solve over a log-spaced epsilon range and report successive changes")
    p.add_argument("--feeder", required=True)
    p.add_argument("--epsilon-from", type=float, default=1e-2)
    p.add_argument("--epsilon-to", type=float, default=1e-10)
    p.add_argument("--steps", type=int, default=9)
    p.add_argument("--epsilon-mode", choices=("resistive", "reactive"), default="resistive")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--out", default="-")
    return parser


def _run(args: argparse.Namespace) -> int:
    feeder = parse_feeder(args.feeder)
    if args.command == "build":
        net = build_network(feeder, SolverConfig(epsilon=args.epsilon, epsilon_mode=args.epsilon_mode))
        _write(ybus_triplets(net.ybus, one_based=not args.zero_based), args.out)
        return EXIT_OK
    if args.command == "solve":
        config = SolverConfig(
            tol=args.tol, max_iter=args.max_iter, epsilon=args.epsilon, epsilon_mode=args.epsilon_mode
        )
        result = solve(feeder, config)
        _write(emit_results(result), args.out)
        if not result.converged:
            print(f"error: no convergence after {result.iterations} iterations "
                  f"(residual {result.residual_inf:.3e})", file=sys.stderr)
            return EXIT_NUMERICAL
        return EXIT_OK
    if args.command == "check":
        net = build_network(feeder, SolverConfig(epsilon=args.epsilon, epsilon_mode=args.epsilon_mode))
        diag = check_invertibility(net.ybus, assemble_YL(net.feeder, net.index), args.epsilon_mode)
        print(diag.report())
        return EXIT_OK if diag.passed else EXIT_NUMERICAL
    # sweep
    if args.steps < 2 or args.epsilon_from <= 0 or args.epsilon_to <= 0:
        raise _UsageError("sweep needs --steps >= 2 and positive epsilon bounds")
    eps = np.logspace(np.log10(args.epsilon_from), np.log10(args.epsilon_to), args.steps)
    eps = sorted(eps, reverse=True)
    config = SolverConfig(tol=args.tol, max_iter=args.max_iter, epsilon_mode=args.epsilon_mode)
    _write(sweep_csv(epsilon_sweep(feeder, eps, config)), args.out)
    return EXIT_OK


class _UsageError(Exception):
    pass


def cli(argv: list[str] | None = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # Remaining validation failures (bad flag values such as tol <= 0).
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()
