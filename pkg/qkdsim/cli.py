"""
Command-line front end: ``qkd run``, ``qkd sweep`` and ``qkd replay``.

Usage:
    qkd run --protocol bb84 --rounds 20000 --noise 0.05 --eve 0.1 --seed 42
    qkd sweep --protocol e91 --noise 0:0.2:0.02 --eve 0 --mode oracle
    qkd replay tests/regression/table2_e91.csv

Errors are reported as one ``<code>: <message>`` line on stderr.
"""

import argparse
import logging
import os
import sys
from typing import Dict, List, Optional, Sequence, Tuple, Union

from dotenv import load_dotenv

from .config import (
    SESSION_KEYS,
    SWEEP_KEYS,
    SessionConfig,
    SweepSpec,
    build,
    format_config_file,
    load_config_file,
    normalize_key,
)
from .errors import ConfigError, QkdError, UsageError
from .replay import read_replay_csv, replay
from .report import OutputFormat, emit_grid_csv, emit_grid_json, emit_summary
from .sweep import run_session, run_sweep

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
OUTPUT_FLAGS = ("format", "out", "config")


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of printing usage and exiting."""

    def error(self, message):
        raise UsageError("arguments", message)


def _add_session_flags(parser: argparse.ArgumentParser) -> None:
    add = parser.add_argument
    add("--protocol", help="bb84, b92 or e91")
    add("--rounds", help="rounds per session (per cell for sweep)")
    add("--noise", help="polarization-flip probability")
    add("--eve", help="intercept probability")
    add("--eve-mode", help="E91: key, bell or both")
    add("--bell-ratio", help="E91: fraction of rounds reserved for Bell tests")
    add("--allocation", help="E91: designated or independent")
    add("--eve-angles", help="E91: comma-separated Eve analyzer angles in degrees")
    add("--threshold", help="QBER acceptance threshold (fraction)")
    add("--sample-fraction", help="fraction of sifted bits disclosed for QBER")
    add("--chsh-mid", help="CHSH value at or below which risk is at least mid")
    add("--chsh-high", help="CHSH value at or below which risk is highest")
    add("--seed", help="64-bit seed (base seed for sweep)")


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], help="json or csv")
    parser.add_argument("--out", help="write output to PATH instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qkd", description="BB84 / B92 / E91 quantum key distribution simulator")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    run = commands.add_parser("run", help="run one session", argument_default=argparse.SUPPRESS)
    _add_session_flags(run)
    run.add_argument("--config", help="key = value config file")
    _add_output_flags(run)

    sweep = commands.add_parser("sweep", help="sweep a noise x eve grid", argument_default=argparse.SUPPRESS)
    _add_session_flags(sweep)
    sweep.add_argument("--mode", help="mc or oracle")
    sweep.add_argument("--workers", help="worker processes for Monte Carlo cells")
    sweep.add_argument("--config", help="key = value config file")
    _add_output_flags(sweep)

    rep = commands.add_parser("replay", help="replay a recorded transcript", argument_default=argparse.SUPPRESS)
    rep.add_argument("path", help="replay CSV")
    rep.add_argument("--threshold", help="QBER acceptance threshold for E91 replays")
    _add_output_flags(rep)
    return parser


def parse_invocation(argv: Optional[Sequence[str]] = None) -> Tuple[str, argparse.Namespace]:
    args = build_parser().parse_args(argv)
    return args.command, args


def _config_values(command: str, args: argparse.Namespace) -> Dict[str, str]:
    """Merge config-file values with command-line values and map them onto model fields."""
    keys = SWEEP_KEYS if command == "sweep" else SESSION_KEYS
    fields_by_key = {normalize_key(key): field for field, key in keys.items()}

    given = {}
    if "config" in args:
        given.update(load_config_file(args.config))
    given.update(
        {k: v for k, v in vars(args).items() if k not in OUTPUT_FLAGS and k != "command"}
    )

    values = {}
    for key, value in given.items():
        if key not in fields_by_key:
            raise UsageError(key.replace("_", "-"), f"not a valid key for {command}")
        values[fields_by_key[key]] = value
    return values


def parse_config(argv: Optional[Sequence[str]] = None) -> Union[SessionConfig, SweepSpec]:
    """Resolve a ``run`` or ``sweep`` invocation into its validated config."""
    command, args = parse_invocation(argv)
    return resolve_config(command, args)


def resolve_config(command: str, args: argparse.Namespace) -> Union[SessionConfig, SweepSpec]:
    if command not in ("run", "sweep"):
        raise UsageError("command", f"{command} takes no session config")
    model = SweepSpec if command == "sweep" else SessionConfig
    return build(model, _config_values(command, args))


def _provenance(config: Union[SessionConfig, SweepSpec]) -> str:
    return "; ".join(format_config_file(config).splitlines())


def _run(args: argparse.Namespace) -> str:
    config = resolve_config("run", args)
    summary = run_session(config).summary()
    return emit_summary(summary, getattr(args, "format", OutputFormat.JSON))


def _sweep(args: argparse.Namespace) -> str:
    spec = resolve_config("sweep", args)
    grid = run_sweep(spec)
    if OutputFormat(getattr(args, "format", OutputFormat.CSV)) is OutputFormat.JSON:
        return emit_grid_json(grid)
    return emit_grid_csv(grid, provenance=_provenance(spec))


def _threshold(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError("threshold", f"expected a number, got {text!r}") from None
    if not (0.0 <= value <= 1.0):
        raise ConfigError("threshold", f"must lie in [0, 1], got {value}")
    return value


def _replay(args: argparse.Namespace) -> str:
    records = read_replay_csv(args.path)
    if "threshold" in args:
        summary = replay(records, _threshold(args.threshold))
    else:
        summary = replay(records)
    return emit_summary(summary, getattr(args, "format", OutputFormat.JSON))


COMMANDS = {"run": _run, "sweep": _sweep, "replay": _replay}


def write_output(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
    except OSError as exc:
        raise UsageError("out", f"cannot write {out}: {exc.strerror}") from None
    logger.info("Wrote %s", out)


def configure_logging() -> None:
    load_dotenv()
    level = os.getenv("QKD_LOG_LEVEL", "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "INFO"
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    configure_logging()
    try:
        command, args = parse_invocation(argv)
        write_output(COMMANDS[command](args), getattr(args, "out", None))
    except QkdError as exc:
        print(f"{exc.code}: {exc}", file=sys.stderr)
        return exc.exit_status
    return 0
