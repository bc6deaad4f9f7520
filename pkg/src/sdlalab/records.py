"""
records.py

CSV tables and the run record. Tables are written with a fixed column order
and repr-formatted floats, so equal inputs give equal bytes. The run record
is YAML, written atomically once the outputs exist.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import yaml

from . import __version__


def format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_value(row.get(k)) for k in fieldnames})
    return path


def read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunRecord:
    config: Mapping[str, Any]
    started: str
    finished: str = ""
    code_version: str = __version__
    outputs: dict[str, str] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    exit_code: int = 0

    def add_output(self, path: Path) -> None:
        path = Path(path)
        self.outputs[path.name] = file_digest(path)

    def as_dict(self) -> dict[str, Any]:
        return {
            "code_version": self.code_version,
            "started": self.started,
            "finished": self.finished,
            "exit_code": self.exit_code,
            "config": dict(self.config),
            "outputs": dict(sorted(self.outputs.items())),
            "summary": _plain(self.summary),
        }


def _plain(value: Any) -> Any:
    """Reduce numpy scalars and tuples to plain YAML-safe values."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and callable(value.item):
        return value.item()
    if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
        return value.value
    return value


def write_run_record(path: Path, record: RunRecord) -> Path:
    """Write atomically: temp file in the same directory, then replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = yaml.safe_dump(record.as_dict(), sort_keys=False, default_flow_style=False)
    fd, tmp = tempfile.mkstemp(prefix=".run_record.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_run_record(path: Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: not a run record")
    return data


def verify_run_record(path: Path, base_dir: Optional[Path] = None) -> dict[str, str]:
    """Re-hash every listed output. Returns name -> ok / mismatch / missing."""
    path = Path(path)
    data = load_run_record(path)
    base = Path(base_dir) if base_dir is not None else path.parent
    status = {}
    for name, digest in (data.get("outputs") or {}).items():
        target = base / name
        if not target.exists():
            status[name] = "missing"
        elif file_digest(target) != digest:
            status[name] = "mismatch"
        else:
            status[name] = "ok"
    return status
