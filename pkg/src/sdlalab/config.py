"""
config.py

Flat key/value run configuration. Every key is declared once below with its
default and a help line; a YAML file and then command-line overrides are
merged over the defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .lattice import BoxRegion, LatticeError, PreconditionError, Site


class ConfigError(PreconditionError):
    """Unknown configuration key or a value of the wrong kind."""


@dataclass(frozen=True)
class ConfigKey:
    name: str
    default: Any
    help: str


def _key(name: str, default: Any, help: str) -> tuple[str, ConfigKey]:
    return name, ConfigKey(name, default, help)


DEFAULTS: dict[str, ConfigKey] = dict(
    [
        # growth
        _key("n", 8, "segment half-width: the seed is [-n, n] x {0}"),
        _key("T", 1.0, "time horizon"),
        _key("c_dom", 2.0, "dominating-rate factor multiplying sqrt(x2) v 1"),
        _key("engine", "thinned", "dla engine: thinned, kmc or both (compares first attachments)"),
        _key("refresh", "every-acceptance", "field refresh: every-acceptance or every-k-events"),
        _key("refresh_k", 16, "events between refreshes for every-k-events"),
        _key("strict_dominating", True, "abort on an acceptance ratio above 1 instead of counting it"),
        _key("aggregate", "", "aggregate file to seed from (harmonic, dla)"),
        _key("record_timings", False, "fill the recompute_ms column of event logs (not reproducible)"),
        _key("event_log", False, "write the per-event log CSV (dla, couple)"),
        # harmonic solver
        _key("harmonic_tol", 1e-9, "relaxation residual tolerance for fields"),
        _key("limit_tol", 1e-3, "stopping increment for the N -> infinity limit"),
        _key("n_cap", 256, "largest N tried by the limit"),
        _key("sides", "periodic", "solve-domain side boundary: periodic or absorbing"),
        _key("ceiling", "return-kernel", "solve-domain top: return-kernel or absorbing"),
        _key("backend", "relaxation", "linear solver: relaxation or direct"),
        _key("width_factor", 2.0, "horizontal solve margin in units of N"),
        _key("N", 0, "height of the source line; 0 picks 2 * height + 4"),
        _key("N_sequence", "", "comma list of N values for a convergence table"),
        _key("method", "exact", "harmonic method: exact, mc or both"),
        _key("mc_replicas", 10000, "walks per Monte-Carlo point estimate"),
        _key("limit", False, "also report N -> infinity limits per edge"),
        _key("audit", False, "run the height-bound audit"),
        _key("audit_columns", 8, "tallest column in the height-bound audit suite"),
        _key("growth_tol", 0.10, "allowed relative growth of per-height maxima in the audit"),
        _key("c_audit", 1.0, "audited height-bound constant used by the discrepancy-rate envelope"),
        # coupling and experiments
        _key("n_list", "4,8,16,32", "comma list of segment half-widths"),
        _key("window", "-2,2,0,2", "window box x_min,x_max,y_min,y_max"),
        _key("alpha", 0.5, "exponent of the discrepancy-count threshold n^alpha"),
        _key("lambda_trace", False, "record the discrepancy rate at every new edge discrepancy"),
        _key("stabilization_replicas", 20, "matched-seed pairs for the field-stabilization check"),
        _key("shift", 2, "horizontal shift for the stationarity comparison"),
        _key("sites", "0,1", "sites for stationarity, as x1,x2;x1,x2;..."),
        _key("separations", "4,8,16", "window separations for mixing"),
        _key("copy_n", 16, "half-width of each copy in the two-copy mixing check"),
        _key("copy_replicas", 100, "replicas of the two-copy mixing check"),
        _key("k_max", 8, "largest k in the interface tail table"),
        _key("envelope_samples", 1_000_000, "direct samples behind each path-envelope value"),
        _key("escape_n_list", "8,16,32", "segment half-widths for the box-escape frequency"),
    ]
)


@dataclass(frozen=True)
class RunConfig:
    command: str
    master_seed: int
    replicas: int
    workers: int
    out_dir: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Any:
        if key not in self.params:
            raise ConfigError(f"unknown configuration key {key!r}")
        return self.params[key]

    def echo(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "master_seed": self.master_seed,
            "replicas": self.replicas,
            "workers": self.workers,
            "out_dir": self.out_dir,
            "params": dict(self.params),
        }


# -----------------------------
# Loading and coercion
# -----------------------------

def coerce(name: str, value: Any) -> Any:
    """Convert value to the kind of the key's default."""
    if name not in DEFAULTS:
        raise ConfigError(f"unknown configuration key {name!r}")
    default = DEFAULTS[name].default
    if isinstance(value, str) and not isinstance(default, str):
        try:
            value = yaml.safe_load(value)
        except yaml.YAMLError:
            raise ConfigError(f"{name}: cannot parse {value!r}") from None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if value is None:
        return ""
    return str(value)


def load_config_file(path: Path) -> dict[str, Any]:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping of keys to values")
    out = {}
    for key, value in data.items():
        if isinstance(value, (dict, list)):
            raise ConfigError(f"{path}: {key}: nested values are not allowed")
        out[str(key)] = coerce(str(key), value)
    return out


def parse_override(text: str) -> tuple[str, Any]:
    """Parse one --set key=value."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, value = text.split("=", 1)
    key = key.strip()
    return key, coerce(key, value.strip())


def build_run_config(
    command: str,
    *,
    master_seed: int,
    replicas: int,
    workers: int,
    out_dir: str,
    file_values: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    if master_seed < 0 or master_seed >= 1 << 64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {master_seed}")
    if replicas < 1:
        raise ConfigError(f"replicas must be >= 1, got {replicas}")
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    params = {name: key.default for name, key in DEFAULTS.items()}
    for source in (file_values or {}, overrides or {}):
        for name, value in source.items():
            params[name] = coerce(name, value)
    return RunConfig(command, master_seed, replicas, workers, out_dir, params)


# -----------------------------
# Value parsers
# -----------------------------

def parse_int_list(text: str, name: str) -> list[int]:
    text = str(text).strip()
    if not text:
        return []
    try:
        return [int(p) for p in text.split(",")]
    except ValueError:
        raise ConfigError(f"{name}: expected comma-separated integers, got {text!r}") from None


def parse_window(text: str) -> BoxRegion:
    try:
        return BoxRegion.parse(text)
    except (PreconditionError, LatticeError) as exc:
        raise ConfigError(f"window: {exc}") from None


def parse_sites(text: str) -> list[Site]:
    sites = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            continue
        xs = parse_int_list(part, "sites")
        if len(xs) != 2 or xs[1] < 0:
            raise ConfigError(f"sites: bad site {part!r}")
        sites.append(Site(xs[0], xs[1]))
    return sites


def describe_defaults() -> str:
    """One line per key, for the CLI epilog."""
    width = max(len(k) for k in DEFAULTS)
    return "\n".join(f"  {k.name:<{width}}  {k.default!r:>12}  {k.help}" for k in DEFAULTS.values())
