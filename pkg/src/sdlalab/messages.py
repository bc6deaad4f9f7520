"""Console diagnostics shared by the library and the CLI."""

from __future__ import annotations

import sys

# Set by the CLI from --verbose / --debug.
VERBOSE = False
DEBUG = False


def warn(message: str) -> None:
    """Print a warning message to stderr."""
    print(f"WARNING: {message}", file=sys.stderr)


def note(message: str) -> None:
    """Print a progress line when --verbose is on."""
    if VERBOSE or DEBUG:
        print(message, flush=True)


def debug(message: str) -> None:
    """Print a debug line when --debug is on."""
    if DEBUG:
        print(f"  {message}", flush=True)


def configure(verbose: bool = False, debug_mode: bool = False) -> None:
    global VERBOSE, DEBUG
    VERBOSE = verbose
    DEBUG = debug_mode


def progress(label: str, done: int, total: int) -> None:
    """Verbose-gated progress line: [label] done/total."""
    note(f"[{label}] {done}/{total}")
