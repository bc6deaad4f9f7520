#!/usr/bin/env python3
"""
sdlalab

Batch experiments on stationary diffusion-limited aggregation grown from the
floor of the upper half-plane.

Every subcommand reads the same flat configuration (defaults, then an
optional YAML file given with --config, then --set key=value overrides, then
the subcommand's own flags), runs its replicas and writes CSV tables plus a
run record into --out-dir:

  harmonic        exact / Monte-Carlo harmonic measure from the source line L_N,
                  N-convergence tables, N -> infinity limits, height-bound audit
  interface-tail  tail of the interface radius at time T and its path envelope
  dla             grow A^n (thinned or kinetic Monte Carlo engine)
  couple          coupled pair (A^n, A^{n+1}) on one event stream
  locality        window disagreement frequency across n, field stabilization
  stationarity    occupation at w vs w + k and vs the mirror image of w
  mixing          window correlations vs separation, two-copy disjointness

Configuration file (flat YAML, any subset of the keys listed below):

    n_list: 4,8,16,32
    window: -2,2,0,2
    T: 1.0
    harmonic_tol: 1.0e-9

Exit codes:
  0  all checks passed
  1  a trend or envelope check failed (95% intervals separated the wrong way)
  2  bad configuration, precondition or aggregate file
  3  numerical failure (solver, limit or dominating-rate violation)
  4  a check was inconclusive at the given replica count
"""

from __future__ import annotations

import argparse
import sys
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

from . import messages
from .aggregatefile import AggregateFormatError
from .config import (
    DEFAULTS,
    ConfigError,
    RunConfig,
    build_run_config,
    coerce,
    describe_defaults,
    load_config_file,
    parse_override,
)
from .engine import DominatingRateViolation
from .experiments import COMMANDS, ExperimentResult
from .harmonic import SolverError
from .lattice import PreconditionError
from .records import RunRecord, write_run_record
from .stats import Verdict

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_PRECONDITION = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

RUN_RECORD = "run_record.yaml"

# Configuration keys that also get a dedicated flag on each subcommand.
COMMAND_KEYS: dict[str, tuple[str, ...]] = {
    "harmonic": ("aggregate", "N", "method", "N_sequence", "mc_replicas", "limit", "audit", "sides", "ceiling",
                 "backend"),
    "interface-tail": ("T", "c_dom", "k_max", "escape_n_list"),
    "dla": ("n", "T", "engine", "aggregate", "event_log", "refresh", "c_dom"),
    "couple": ("n", "T", "window", "alpha", "lambda_trace"),
    "locality": ("n_list", "T", "window"),
    "stationarity": ("n", "T", "shift", "sites"),
    "mixing": ("n", "T", "separations", "copy_n", "copy_replicas"),
}

COMMAND_HELP = {
    "harmonic": "harmonic measure of an aggregate file (or of the floor alone)",
    "interface-tail": "interface radius tail and escape frequency",
    "dla": "grow A^n from the segment [-n, n] or from an aggregate file",
    "couple": "coupled pair (A^n, A^{n+1}) and its discrepancy counts",
    "locality": "window disagreement frequency for increasing n",
    "stationarity": "shift and mirror comparisons of site occupation",
    "mixing": "window correlations and the two-copy construction",
}


def flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sdlalab",
        description="Experiments on stationary DLA in the upper half-plane.",
        epilog="Examples:\n"
               "  Floor-only measure: %(prog)s harmonic --out-dir out/floor\n"
               "  Exact vs MC:        %(prog)s harmonic --aggregate specs/column3.yaml --method both\n"
               "  Convergence in N:   %(prog)s harmonic --aggregate specs/lshape.yaml --N-sequence 4,8,16\n"
               "  Grow A^8:           %(prog)s dla --n 8 --replicas 20 --seed 7\n"
               "  Locality sweep:     %(prog)s locality --config specs/locality.yaml --replicas 500 --workers 4\n"
               "\nConfiguration keys (default, meaning):\n" + describe_defaults() + "\n",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="64-bit master seed (default: 0)")
    common.add_argument("--replicas", type=int, default=1, help="Independent replicas (default: 1)")
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="Output directory (default: out)")
    common.add_argument("--config", type=Path, default=None, help="Flat YAML configuration file")
    common.add_argument("--workers", type=int, default=1, help="Worker processes for replicas (default: 1)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one configuration key (repeatable)")
    common.add_argument("--debug", action="store_true", help="Print solver and engine debug info")
    common.add_argument("--verbose", action="store_true", help="Print progress lines")

    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command in COMMANDS:
        sp = sub.add_parser(command, parents=[common], help=COMMAND_HELP[command],
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        for key in COMMAND_KEYS[command]:
            spec = DEFAULTS[key]
            if isinstance(spec.default, bool):
                sp.add_argument(flag_name(key), dest=key, action="store_const", const=True, default=None,
                                help=spec.help)
            else:
                sp.add_argument(flag_name(key), dest=key, default=None, metavar="VALUE",
                                help=f"{spec.help} (default: {spec.default!r})")
    return ap


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config is not None else {}
    overrides: dict[str, Any] = {}
    for text in args.set:
        key, value = parse_override(text)
        overrides[key] = value
    for key in COMMAND_KEYS[args.command]:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = coerce(key, value)
    return build_run_config(
        args.command,
        master_seed=args.seed,
        replicas=args.replicas,
        workers=args.workers,
        out_dir=str(args.out_dir),
        file_values=file_values,
        overrides=overrides,
    )


def exit_code_for(result: ExperimentResult) -> int:
    verdict = result.verdict
    if verdict is Verdict.FAIL:
        return EXIT_FAIL
    if verdict is Verdict.INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def report(cfg: RunConfig, result: ExperimentResult) -> None:
    print(f"{cfg.command}: wrote {len(result.outputs)} file(s) to {cfg.out_dir}")
    for name, verdict in result.verdicts.items():
        if verdict is Verdict.INCONCLUSIVE:
            messages.warn(f"{name}: inconclusive at {cfg.replicas} replicas")
        elif verdict is Verdict.FAIL:
            messages.warn(f"{name}: failed")
        else:
            messages.note(f"{name}: {verdict.value}")
    if messages.VERBOSE or messages.DEBUG:
        for key, value in result.summary.items():
            print(f"  {key}: {value}")


def main(argv: Optional[list[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    messages.configure(verbose=args.verbose, debug_mode=args.debug)

    started = datetime.now().isoformat(timespec="seconds")
    try:
        cfg = run_config_from_args(args)
        result = COMMANDS[cfg.command](cfg)
    except (ConfigError, PreconditionError, AggregateFormatError) as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SolverError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DominatingRateViolation as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    code = exit_code_for(result)
    record = RunRecord(cfg.echo(), started)
    for path in result.outputs:
        record.add_output(path)
    record.summary = dict(result.summary)
    record.summary["verdicts"] = {k: v.value for k, v in result.verdicts.items()}
    record.exit_code = code
    record.finished = datetime.now().isoformat(timespec="seconds")
    write_run_record(Path(cfg.out_dir) / RUN_RECORD, record)
    report(cfg, result)
    return code


if __name__ == "__main__":
    sys.exit(main())
