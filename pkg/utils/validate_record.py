#!/usr/bin/env python3
"""
Run record diagnostics

Usage:
  python utils/validate_record.py <out-dir>/run_record.yaml [--base-dir DIR]
                                  [--show-config] [--show-summary]

What it does:
- Re-hashes every output listed in the record and prints a per-file table
- Checks the header of each CSV output against the columns the tool writes
- Prints the exit code and verdicts the run ended with
Exit status is 1 when any file is missing or does not match its digest.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path
from typing import Any, Optional

from sdlalab.experiments import EVENT_COLUMNS, HARMONIC_COLUMNS, REPLICA_COLUMNS
from sdlalab.records import load_run_record, verify_run_record

KNOWN_HEADERS: dict[str, tuple[str, ...]] = {
    "harmonic.csv": HARMONIC_COLUMNS,
    "couple_replicas.csv": REPLICA_COLUMNS,
    "dla_events.csv": EVENT_COLUMNS,
}


def csv_header(path: Path) -> Optional[list[str]]:
    with path.open("r", encoding="utf-8", newline="") as f:
        return next(csv.reader(f), None)


def header_problem(name: str, path: Path) -> str:
    expected = KNOWN_HEADERS.get(name)
    if expected is None or not path.exists():
        return ""
    header = csv_header(path)
    if header != list(expected):
        return f"header {header} != {list(expected)}"
    return ""


def print_mapping(title: str, data: Any) -> None:
    print(f"{title}:")
    if not isinstance(data, dict) or not data:
        print("  (none)")
        return
    width = max(len(str(k)) for k in data)
    for k, v in data.items():
        print(f"  {str(k):<{width}}  {v}")


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("record", type=Path)
    ap.add_argument("--base-dir", type=Path, default=None,
                    help="Directory holding the outputs (default: the record's directory)")
    ap.add_argument("--show-config", action="store_true", help="Print the echoed configuration.")
    ap.add_argument("--show-summary", action="store_true", help="Print the summary statistics.")
    args = ap.parse_args()

    data = load_run_record(args.record)
    base = args.base_dir or args.record.parent
    status = verify_run_record(args.record, base)

    print(f"FILE: {args.record}")
    print(f"code version: {data.get('code_version')}  started: {data.get('started')}  finished: {data.get('finished')}")
    print(f"exit code: {data.get('exit_code')}")
    print()

    print("OUTPUTS:")
    print("  status    name")
    print("  --------  ----------------------------------------")
    bad = 0
    for name in sorted(status):
        problem = header_problem(name, base / name)
        state = status[name] if not problem else "header"
        if state != "ok":
            bad += 1
        print(f"  {state:<8}  {name}{'  ' + problem if problem else ''}")
    print()

    verdicts = (data.get("summary") or {}).get("verdicts")
    print_mapping("VERDICTS", verdicts)
    if args.show_config:
        print()
        print_mapping("CONFIG", (data.get("config") or {}).get("params"))
    if args.show_summary:
        print()
        summary = {k: v for k, v in (data.get("summary") or {}).items() if k != "verdicts"}
        print_mapping("SUMMARY", summary)

    print()
    print("INTEGRITY: OK" if bad == 0 else f"INTEGRITY: FAIL ({bad} file(s))")
    return 0 if bad == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
