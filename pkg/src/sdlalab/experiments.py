"""
experiments.py

One function per CLI subcommand. Each takes a RunConfig, writes its CSV
tables under cfg.out_dir and returns an ExperimentResult with the summary
statistics and the verdicts of its trend or envelope checks.

Replica workers are module-level functions of plain tuples so that they can
run on spawned worker processes.
"""

from __future__ import annotations

import dataclasses
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .aggregatefile import load_aggregate, write_aggregate
from .config import ConfigError, RunConfig, parse_int_list, parse_sites, parse_window
from .coupling import (
    CoupledSummary,
    WindowSpec,
    coupled_replica,
    run_coupled,
    summarize_tail,
    truncation_box,
)
from .engine import (
    EngineConfig,
    RefreshPolicy,
    engine_seed,
    run_kmc,
    run_thinned,
)
from .graphical import EventStream, path_envelope, simulate_interface
from .harmonic import (
    AggregateSet,
    CeilingMode,
    SideBoundary,
    SolverBackend,
    SolverSettings,
    default_height,
    field_limit,
    mass_balance,
    mc_hm_estimate,
    solve_hitting_field,
    solve_potential,
    verify_height_bound,
)
from .lattice import BoxRegion, DirectedEdge, PreconditionError, Site, log_height, out_edges, segment
from .messages import note, warn
from .records import write_csv
from .scheduler import replica_rng, replica_seed, replica_seeds, run_replicas
from .stats import (
    Interval,
    Verdict,
    chi_square_homogeneity,
    combine,
    correlation_interval,
    loglog_slope,
    mean_interval,
    non_increasing_verdict,
    two_proportion_z,
    wilson_interval,
)

# Seed-family tags: replica i of one family never shares a stream with
# replica i of another.
TAG_HARMONIC = 1
TAG_INTERFACE = 2
TAG_ENVELOPE = 3
TAG_DLA = 4
TAG_COUPLE = 5
TAG_STATIONARITY = 6
TAG_MIXING = 7
TAG_TWO_COPY = 8
TAG_DLA_KMC = 9

# p-value below which the two engines are taken to disagree
ENGINE_AGREEMENT_LEVEL = 0.01

HARMONIC_COLUMNS = ("edge_from_x1", "edge_from_x2", "edge_to_x1", "edge_to_x2", "N", "value", "err_est", "method")
REPLICA_COLUMNS = ("replica_seed", "n", "gamma_hit", "gamma_time", "count_at_1", "window_id", "disagreed", "E_D", "V_D")
EVENT_COLUMNS = ("event_time", "from_x1", "from_x2", "to_x1", "to_x2", "index", "mark", "accepted", "prob", "recompute_ms")


@dataclass
class ExperimentResult:
    outputs: list[Path] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    verdicts: dict[str, Verdict] = field(default_factory=dict)

    @property
    def verdict(self) -> Verdict:
        return combine(list(self.verdicts.values())) if self.verdicts else Verdict.PASS


# -----------------------------
# Config helpers
# -----------------------------

def _choice(enum_cls, value: str, key: str):
    try:
        return enum_cls(value)
    except ValueError:
        allowed = ", ".join(m.value for m in enum_cls)
        raise ConfigError(f"{key}: {value!r} is not one of {allowed}") from None


def solver_settings(cfg: RunConfig) -> SolverSettings:
    return SolverSettings(
        tol=cfg["harmonic_tol"],
        sides=_choice(SideBoundary, cfg["sides"], "sides"),
        ceiling=_choice(CeilingMode, cfg["ceiling"], "ceiling"),
        backend=_choice(SolverBackend, cfg["backend"], "backend"),
        width_factor=cfg["width_factor"],
    )


def engine_config(cfg: RunConfig, truncation: BoxRegion, **extra: Any) -> EngineConfig:
    return EngineConfig(
        truncation=truncation,
        harmonic_tol=cfg["harmonic_tol"],
        harmonic_refresh=_choice(RefreshPolicy, cfg["refresh"], "refresh"),
        refresh_k=cfg["refresh_k"],
        c_dom=cfg["c_dom"],
        solver=solver_settings(cfg),
        strict_dominating=cfg["strict_dominating"],
        record_timings=cfg["record_timings"],
        **extra,
    )


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.out_dir) / name


def _edge_row(e: DirectedEdge) -> dict[str, int]:
    return {
        "edge_from_x1": e.tail.x1,
        "edge_from_x2": e.tail.x2,
        "edge_to_x1": e.head.x1,
        "edge_to_x2": e.head.x2,
    }


def _interval_row(iv: Interval, prefix: str = "") -> dict[str, float]:
    return {f"{prefix}ci_lo": iv.lo, f"{prefix}ci_hi": iv.hi}


# -----------------------------
# harmonic
# -----------------------------

def _listed_edges(B: AggregateSet) -> list[DirectedEdge]:
    lo, hi = B.x_range()
    return B.frontier_edges((lo - 2, hi + 2))


def _listed_points(B: AggregateSet) -> list[Site]:
    lo, hi = B.x_range()
    floor = [Site(x, 0) for x in range(lo - 2, hi + 3) if Site(x, 0) not in B.sites]
    return sorted(B.sites) + floor


def _tracked_site(B: AggregateSet) -> Site:
    if not B.sites:
        return Site(0, 0)
    return min(B.sites, key=lambda s: (-s.x2, abs(s.x1), s.x1))


def cmd_harmonic(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    settings = solver_settings(cfg)
    if cfg["aggregate"]:
        doc = load_aggregate(Path(cfg["aggregate"]))
        B = AggregateSet(doc.sites, doc.includes_floor)
    else:
        B = AggregateSet()
    N = cfg["N"] or default_height(B.max_height)
    method = cfg["method"]
    if method not in ("exact", "mc", "both"):
        raise ConfigError(f"method: {method!r} is not one of exact, mc, both")
    note(f"harmonic: {len(B.sites)} sites, N = {N}, method {method}")

    fld = solve_hitting_field(B, N, settings=settings)
    rows = []
    for e in _listed_edges(B):
        rows.append({**_edge_row(e), "N": N, "value": fld.value(e), "err_est": fld.truncation_error_estimate,
                     "method": fld.method.value})
    result.outputs.append(write_csv(_out(cfg, "harmonic.csv"), HARMONIC_COLUMNS, rows))
    balance = mass_balance(fld)
    result.summary.update(
        N=N,
        residual=fld.residual,
        truncation_error=fld.truncation_error_estimate,
        mass_emitted=balance.emitted,
        mass_frontier=balance.frontier,
        mass_floor=balance.floor,
        mass_lost=balance.lost,
        mass_defect=balance.defect,
    )

    points = _listed_points(B)
    point_rows = []
    worst_z = 0.0
    for i, x in enumerate(points):
        row: dict[str, Any] = {"x1": x.x1, "x2": x.x2, "N": N}
        exact = fld.point(x)
        if method in ("exact", "both"):
            row["exact"] = exact
        if method in ("mc", "both"):
            rng = replica_rng(replica_seed(cfg.master_seed, i, TAG_HARMONIC))
            est = mc_hm_estimate(B, x, N, cfg["mc_replicas"], rng, domain=fld.domain, settings=settings)
            row.update(mc_mean=est.mean, mc_se=est.std_error, replicas=est.replicas, discarded=est.discarded,
                       flagged=est.flagged)
            if method == "both":
                z = 0.0 if est.std_error == 0 else (est.mean - exact) / est.std_error
                row["z"] = z
                worst_z = max(worst_z, abs(z))
        point_rows.append(row)
    point_cols = ("x1", "x2", "N", "exact", "mc_mean", "mc_se", "z", "replicas", "discarded", "flagged")
    result.outputs.append(write_csv(_out(cfg, "harmonic_points.csv"), point_cols, point_rows))
    if method == "both":
        result.summary["max_abs_z"] = worst_z
        result.verdicts["mc_agreement"] = Verdict.PASS if worst_z < 3.0 else Verdict.INCONCLUSIVE

    heights = parse_int_list(cfg["N_sequence"], "N_sequence")
    if heights:
        x = _tracked_site(B)
        seq_rows = []
        prev: Optional[float] = None
        for h in heights:
            f = solve_hitting_field(B, h, settings=settings)
            v = f.point(x)
            seq_rows.append({"N": h, "x1": x.x1, "x2": x.x2, "value": v,
                             "increment": None if prev is None else v - prev,
                             "err_est": f.truncation_error_estimate})
            prev = v
        incs = [abs(r["increment"]) for r in seq_rows[1:]]
        result.summary["increments_decreasing"] = all(b < a for a, b in zip(incs, incs[1:]))
        result.outputs.append(write_csv(_out(cfg, "harmonic_convergence.csv"),
                                        ("N", "x1", "x2", "value", "increment", "err_est"), seq_rows))

    if cfg["limit"]:
        edges = B.frontier_edges() or [DirectedEdge(Site(0, 0), Site(0, 1))]
        lim = field_limit(B, cfg["limit_tol"], edges=edges, settings=settings, n_cap=cfg["n_cap"])
        lim_rows = []
        for e in edges:
            seq = lim.sequences[e]
            lim_rows.append({**_edge_row(e), "value": seq.values[-1], "N_used": lim.N_used,
                             "error_bound": lim.error_bound, "direction": seq.direction})
        result.outputs.append(write_csv(
            _out(cfg, "harmonic_limit.csv"),
            ("edge_from_x1", "edge_from_x2", "edge_to_x1", "edge_to_x2", "value", "N_used", "error_bound", "direction"),
            lim_rows,
        ))
        result.summary["limit_N"] = lim.N_used

    if cfg["audit"]:
        suite = [AggregateSet.column(h) for h in range(1, cfg["audit_columns"] + 1)]
        if any(s.x2 >= 1 for s in B.sites):
            suite.append(B)
        report = verify_height_bound(suite, cfg["limit_tol"], settings=settings,
                                     growth_tol=cfg["growth_tol"], n_cap=cfg["n_cap"])
        bound_rows = [{"height": h, "max_ratio": r} for h, r in report.per_height_max.items()]
        result.outputs.append(write_csv(_out(cfg, "height_bound.csv"), ("height", "max_ratio"), bound_rows))
        result.summary["c_audit"] = report.c_audit
        result.summary["per_height_non_increasing"] = report.non_increasing
        result.verdicts["height_bound"] = Verdict.PASS if report.non_increasing else Verdict.FAIL
    return result


# -----------------------------
# interface-tail
# -----------------------------

def interface_radius_replica(task: tuple[int, float, int, float]) -> tuple[float, bool]:
    seed, T, R, c_dom = task
    stream = EventStream(seed, T, c_dom)
    state = simulate_interface({Site(0, 0)}, T, BoxRegion(-R, R, 0, R), stream)
    return state.radius, state.truncation_hit


def interface_escape_replica(task: tuple[int, int, float, float]) -> bool:
    seed, n, T, c_dom = task
    stream = EventStream(seed, T, c_dom)
    return simulate_interface(segment(n), T, truncation_box(n), stream).truncation_hit


def cmd_interface_tail(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    k_max, T, c_dom, R = cfg["k_max"], cfg["T"], cfg["c_dom"], cfg["k_max"] + 2
    seeds = replica_seeds(cfg.master_seed, cfg.replicas, TAG_INTERFACE)
    radii = run_replicas(interface_radius_replica, [(s, T, R, c_dom) for s in seeds], cfg.workers, "interface")
    r = np.array([x[0] for x in radii])
    n = len(r)

    rows = []
    violations = 0
    log_tail = []
    for k in range(k_max + 1):
        ge = int(np.count_nonzero(r >= k))
        gt = int(np.count_nonzero(r > k))
        iv = wilson_interval(gt, n)
        env_rng = replica_rng(replica_seed(cfg.master_seed, k, TAG_ENVELOPE))
        envelope = path_envelope(k, T, c_dom, cfg["envelope_samples"], env_rng)
        p = gt / n
        se = math.sqrt(p * (1 - p) / n)
        violated = p - 3.0 * se > envelope
        violations += violated
        if gt > 0:
            log_tail.append((k, math.log(p)))
        rows.append({"k": k, "replicas": n, "p_ge": ge / n, "p_gt": p, **_interval_row(iv),
                     "envelope": envelope, "violation": violated})
    result.outputs.append(write_csv(
        _out(cfg, "interface_tail.csv"),
        ("k", "replicas", "p_ge", "p_gt", "ci_lo", "ci_hi", "envelope", "violation"), rows))
    result.summary["envelope_violations"] = violations
    result.summary["truncated_runs"] = sum(1 for x in radii if x[1])
    if len(log_tail) >= 2:
        slope, _ = np.polyfit([k for k, _ in log_tail], [v for _, v in log_tail], 1)
        result.summary["log_tail_slope"] = float(slope)
    result.verdicts["path_envelope"] = Verdict.FAIL if violations else Verdict.PASS

    escape_rows = []
    intervals = []
    for m in parse_int_list(cfg["escape_n_list"], "escape_n_list"):
        hits = run_replicas(interface_escape_replica, [(s, m, T, c_dom) for s in seeds], cfg.workers, f"escape n={m}")
        k = sum(hits)
        iv = wilson_interval(k, n)
        intervals.append(iv)
        escape_rows.append({"n": m, "replicas": n, "escapes": k, "p_hat": iv.estimate, **_interval_row(iv)})
    if escape_rows:
        result.outputs.append(write_csv(_out(cfg, "interface_escape.csv"),
                                        ("n", "replicas", "escapes", "p_hat", "ci_lo", "ci_hi"), escape_rows))
        result.verdicts["escape_trend"] = non_increasing_verdict(intervals)
    return result


# -----------------------------
# dla
# -----------------------------

@dataclass(frozen=True)
class DlaSummary:
    replica_seed: int
    attached: int
    max_height: int
    first: Optional[Site]
    truncation_hit: bool
    rate_violations: int
    field_solves: int
    field_height_error: float
    document: Any = None
    events: tuple = ()


def dla_truncation(seed: frozenset[Site], n: int) -> BoxRegion:
    """The truncation box of n, enlarged when a file seed does not fit in it."""
    box = truncation_box(n)
    if all(box.contains(s) for s in seed):
        return box
    L = log_height(n)
    xs = [s.x1 for s in seed]
    return BoxRegion(min(xs) - L, max(xs) + L, 0, max(s.x2 for s in seed) + L)


def dla_replica(task: tuple[int, int, frozenset, float, str, EngineConfig, bool]) -> DlaSummary:
    seed_value, index, seed_sites, T, engine, ecfg, keep = task
    if engine == "kmc":
        A, d = run_kmc(seed_sites, T, ecfg, replica_rng(seed_value))
    else:
        A, d = run_thinned(seed_sites, T, ecfg, EventStream(seed_value, T, ecfg.c_dom))
    order = sorted(A.attached_at, key=lambda s: A.attached_at[s])
    return DlaSummary(
        seed_value,
        len(A.V) - len(A.seed),
        A.max_height,
        order[0] if order else None,
        d.truncation_hit,
        d.rate_violations,
        d.recompute_count,
        d.field_height_error,
        A.to_document() if keep else None,
        tuple(d.event_log) if keep else (),
    )


def dla_runs(cfg: RunConfig, engine: str, tag: int, seed_sites: frozenset, ecfg: EngineConfig) -> list[DlaSummary]:
    seeds = replica_seeds(cfg.master_seed, cfg.replicas, tag)
    tasks = [(s, i, seed_sites, cfg["T"], engine, ecfg, i == 0) for i, s in enumerate(seeds)]
    return run_replicas(dla_replica, tasks, cfg.workers, f"dla {engine}")


def cmd_dla(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    engine = cfg["engine"]
    if engine not in ("thinned", "kmc", "both"):
        raise ConfigError(f"engine: {engine!r} is not one of thinned, kmc, both")
    n = cfg["n"]
    seed_sites = engine_seed(n, cfg["aggregate"])
    ecfg = engine_config(cfg, dla_truncation(seed_sites, n), record_events=cfg["event_log"])
    if engine == "both":
        by_engine = {
            "thinned": dla_runs(cfg, "thinned", TAG_DLA, seed_sites, ecfg),
            "kmc": dla_runs(cfg, "kmc", TAG_DLA_KMC, seed_sites, ecfg),
        }
    else:
        by_engine = {engine: dla_runs(cfg, engine, TAG_DLA, seed_sites, ecfg)}

    rows = []
    for name, runs in by_engine.items():
        for i, s in enumerate(runs):
            rows.append({
                "replica": i, "replica_seed": s.replica_seed, "engine": name, "attached": s.attached,
                "max_height": s.max_height,
                "first_x1": s.first.x1 if s.first else None, "first_x2": s.first.x2 if s.first else None,
                "truncation_hit": s.truncation_hit, "rate_violations": s.rate_violations,
                "field_solves": s.field_solves, "field_height_error": s.field_height_error,
            })
    result.outputs.append(write_csv(
        _out(cfg, "dla_replicas.csv"),
        ("replica", "replica_seed", "engine", "attached", "max_height", "first_x1", "first_x2",
         "truncation_hit", "rate_violations", "field_solves", "field_height_error"), rows))

    runs = next(iter(by_engine.values()))
    first = runs[0]
    if first.document is not None:
        result.outputs.append(write_aggregate(_out(cfg, "dla_aggregate.yaml"), first.document))
    if cfg["event_log"]:
        ev_rows = [{
            "event_time": ev.time, "from_x1": ev.edge.tail.x1, "from_x2": ev.edge.tail.x2,
            "to_x1": ev.edge.head.x1, "to_x2": ev.edge.head.x2, "index": ev.index,
            "mark": ev.mark, "accepted": ev.accepted, "prob": ev.prob, "recompute_ms": ev.recompute_ms,
        } for ev in first.events]
        result.outputs.append(write_csv(_out(cfg, "dla_events.csv"), EVENT_COLUMNS, ev_rows))

    attached, se = mean_interval([s.attached for s in runs])
    violations = sum(s.rate_violations for r in by_engine.values() for s in r)
    result.summary.update(
        replicas=len(runs),
        mean_attached=attached.estimate,
        mean_attached_se=se,
        median_max_height=float(np.median([s.max_height for s in runs])),
        truncation_hits=sum(1 for s in runs if s.truncation_hit),
        rate_violations=violations,
        field_height_error=first.field_height_error,
    )
    result.verdicts["dominating_rate"] = Verdict.PASS if violations == 0 else Verdict.FAIL

    if engine == "both":
        thinned, kmc = by_engine["thinned"], by_engine["kmc"]
        counts_t, counts_k = first_attachment_counts(thinned), first_attachment_counts(kmc)
        keys = sorted(set(counts_t) | set(counts_k), key=lambda s: (s is not None, s or Site(0, 0)))
        result.outputs.append(write_csv(
            _out(cfg, "dla_first_attachment.csv"), ("first_x1", "first_x2", "thinned", "kmc"),
            [{"first_x1": s.x1 if s else None, "first_x2": s.x2 if s else None,
              "thinned": counts_t.get(s, 0), "kmc": counts_k.get(s, 0)} for s in keys]))
        p = engine_agreement(thinned, kmc)
        result.summary["engine_agreement_p"] = p
        result.verdicts["engine_agreement"] = Verdict.PASS if p > ENGINE_AGREEMENT_LEVEL else Verdict.FAIL
    return result


def first_attachment_counts(runs: list[DlaSummary]) -> Counter:
    return Counter(s.first for s in runs)


def engine_agreement(thinned: list[DlaSummary], kmc: list[DlaSummary]) -> float:
    """Chi-square p-value for the first-attachment laws of two engines."""
    return chi_square_homogeneity(first_attachment_counts(thinned), first_attachment_counts(kmc))


# -----------------------------
# couple
# -----------------------------

def coupled_summaries(
    n: int, T: float, windows: tuple[WindowSpec, ...], ecfg: EngineConfig, seeds: list[int], workers: int
) -> list[CoupledSummary]:
    tasks = [(s, n, T, ecfg, windows) for s in seeds]
    return run_replicas(coupled_replica, tasks, workers, f"couple n={n}")


def cmd_couple(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    n, T, alpha = cfg["n"], cfg["T"], cfg["alpha"]
    window = WindowSpec("K", parse_window(cfg["window"]))
    ecfg = engine_config(cfg, truncation_box(n))
    seeds = replica_seeds(cfg.master_seed, cfg.replicas, TAG_COUPLE)
    runs = coupled_summaries(n, T, (window,), ecfg, seeds, cfg.workers)

    rows = [{
        "replica_seed": s.replica_seed, "n": s.n, "gamma_hit": s.gamma_hit, "gamma_time": s.gamma_time,
        "count_at_1": s.count_at_1, "window_id": window.window_id, "disagreed": s.disagreed[window.window_id],
        "E_D": s.E_D, "V_D": s.V_D,
    } for s in runs]
    result.outputs.append(write_csv(_out(cfg, "couple_replicas.csv"), REPLICA_COLUMNS, rows))

    tail = summarize_tail(n, alpha, runs)
    hist_rows = [{"count_at_1": c, "replicas": k, "fraction": k / tail.replicas}
                 for c, k in tail.histogram.items()]
    result.outputs.append(write_csv(_out(cfg, "couple_histogram.csv"), ("count_at_1", "replicas", "fraction"), hist_rows))
    iv = wilson_interval(tail.exceed, tail.replicas)
    dis = wilson_interval(sum(1 for s in runs if s.disagreed[window.window_id]), len(runs))
    result.summary.update(
        replicas=tail.replicas,
        threshold=tail.threshold,
        exceed_fraction=tail.exceed_fraction,
        exceed_ci=[iv.lo, iv.hi],
        disagreement=dis.estimate,
        disagreement_ci=[dis.lo, dis.hi],
        gamma_hits=tail.gamma_hits,
    )
    if tail.replicas < 100:
        warn(f"{tail.replicas} replicas: the discrepancy tail wants at least 100")
    result.verdicts["discrepancy_heads"] = Verdict.PASS if tail.heads_cover_all else Verdict.FAIL

    if cfg["lambda_trace"]:
        stream = EventStream(seeds[0], T, ecfg.c_dom)
        state, record = run_coupled(n, T, (window,), ecfg, stream, trace_lambda=True, c_audit=cfg["c_audit"])
        trace_rows = [{"time": t, "lambda_D": lam, "envelope": env}
                      for (t, lam), env in zip(record.lambda_D_trace, record.envelope_trace)]
        result.outputs.append(write_csv(_out(cfg, "couple_lambda.csv"), ("time", "lambda_D", "envelope"), trace_rows))
        over = sum(1 for r in trace_rows if r["lambda_D"] > r["envelope"])
        result.summary["lambda_envelope_exceeded"] = over
    return result


# -----------------------------
# locality
# -----------------------------

def stabilization_replica(task: tuple[int, int, float, EngineConfig, BoxRegion]) -> float:
    """max over window sites of |H_{A^n}(x) - H_{A^{2n}}(x)| on one stream."""
    seed, n, T, ecfg, window = task
    stream = EventStream(seed, T, ecfg.c_dom)
    small_cfg = ecfg.with_truncation(truncation_box(n))
    big_cfg = ecfg.with_truncation(truncation_box(2 * n))
    A_small, _ = run_thinned(segment(n), T, small_cfg, stream)
    A_big, _ = run_thinned(segment(2 * n), T, big_cfg, stream)
    N, dom, settings = big_cfg.harmonic_height, big_cfg.harmonic_domain, big_cfg.settings
    p_small = solve_potential(AggregateSet(frozenset(A_small.V)), N, dom, settings)
    p_big = solve_potential(AggregateSet(frozenset(A_big.V)), N, dom, settings)
    worst = 0.0
    for x in window.sites():
        a = sum(p_small.edge_value(e) for e in out_edges(x))
        b = sum(p_big.edge_value(e) for e in out_edges(x))
        worst = max(worst, abs(a - b))
    return worst


def cmd_locality(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    ns = parse_int_list(cfg["n_list"], "n_list")
    if not ns or ns != sorted(ns) or len(set(ns)) != len(ns):
        raise PreconditionError(f"n_list must be strictly ascending, got {cfg['n_list']!r}")
    if cfg.replicas < 500:
        raise PreconditionError(f"locality needs at least 500 replicas per n, got {cfg.replicas}")
    T = cfg["T"]
    window = WindowSpec("K", parse_window(cfg["window"]))
    seeds = replica_seeds(cfg.master_seed, cfg.replicas, TAG_COUPLE)

    rows = []
    intervals = []
    for n in ns:
        ecfg = engine_config(cfg, truncation_box(n))
        runs = coupled_summaries(n, T, (window,), ecfg, seeds, cfg.workers)
        k = sum(1 for s in runs if s.disagreed[window.window_id])
        iv = wilson_interval(k, len(runs))
        intervals.append(iv)
        rows.append({"n": n, "replicas": len(runs), "disagreements": k, "p_hat": iv.estimate,
                     **_interval_row(iv), "gamma_hits": sum(1 for s in runs if s.gamma_hit)})
    result.outputs.append(write_csv(_out(cfg, "locality.csv"),
                                    ("n", "replicas", "disagreements", "p_hat", "ci_lo", "ci_hi", "gamma_hits"), rows))
    result.summary["loglog_slope"] = loglog_slope(ns, [r["p_hat"] for r in rows])
    result.verdicts["locality_trend"] = non_increasing_verdict(intervals)

    pairs = min(cfg["stabilization_replicas"], cfg.replicas)
    if pairs > 0:
        stab_rows = []
        stab_intervals = []
        for n in ns:
            ecfg = engine_config(cfg, truncation_box(n))
            tasks = [(seeds[i], n, T, ecfg, window.box) for i in range(pairs)]
            diffs = run_replicas(stabilization_replica, tasks, cfg.workers, f"stabilize n={n}")
            iv, _ = mean_interval(diffs)
            stab_intervals.append(iv)
            stab_rows.append({"n": n, "pairs": pairs, "mean_max_diff": iv.estimate, **_interval_row(iv),
                              "max_diff": max(diffs)})
        result.outputs.append(write_csv(_out(cfg, "locality_fields.csv"),
                                        ("n", "pairs", "mean_max_diff", "ci_lo", "ci_hi", "max_diff"), stab_rows))
        result.verdicts["field_stabilization"] = non_increasing_verdict(stab_intervals)
    return result


# -----------------------------
# stationarity
# -----------------------------

def occupation_replica(task: tuple[int, int, float, EngineConfig, tuple[Site, ...]]) -> tuple[bool, ...]:
    seed, n, T, ecfg, sites = task
    A, _ = run_thinned(segment(n), T, ecfg, EventStream(seed, T, ecfg.c_dom))
    return tuple(s in A.V for s in sites)


def cmd_stationarity(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    n, T, k = cfg["n"], cfg["T"], cfg["shift"]
    if k < 0 or k > n / 4:
        raise PreconditionError(f"shift {k} must lie in [0, n/4] for n = {n}")
    base = parse_sites(cfg["sites"])
    if not base:
        raise ConfigError("sites: at least one site is needed")
    for s in base:
        if abs(s.x1) > n / 2 or abs(s.x1 + k) > n / 2:
            raise PreconditionError(f"site {s.as_list()} and its shift must stay within n/2 of the centre")
    pairs = [("shift", s, s.shifted(k)) for s in base] + [("mirror", s, s.mirrored()) for s in base]
    sites = tuple(sorted({p for _, a, b in pairs for p in (a, b)}))
    index = {s: i for i, s in enumerate(sites)}

    ecfg = engine_config(cfg, truncation_box(n))
    seeds = replica_seeds(cfg.master_seed, cfg.replicas, TAG_STATIONARITY)
    occ = np.array(run_replicas(occupation_replica, [(s, n, T, ecfg, sites) for s in seeds], cfg.workers,
                                "stationarity"), dtype=bool).reshape(len(seeds), len(sites))
    m = len(seeds)
    rows = []
    worst = 0.0
    for kind, a, b in pairs:
        ka, kb = int(occ[:, index[a]].sum()), int(occ[:, index[b]].sum())
        z, se = two_proportion_z(ka, m, kb, m)
        worst = max(worst, abs(z))
        rows.append({"kind": kind, "x1": a.x1, "x2": a.x2, "other_x1": b.x1, "other_x2": b.x2, "replicas": m,
                     "p_a": ka / m, "p_b": kb / m, "pooled_se": se, "z": z})
    result.outputs.append(write_csv(
        _out(cfg, "stationarity.csv"),
        ("kind", "x1", "x2", "other_x1", "other_x2", "replicas", "p_a", "p_b", "pooled_se", "z"), rows))
    result.summary["max_abs_z"] = worst
    result.verdicts["stationarity"] = Verdict.PASS if worst < 3.0 else Verdict.INCONCLUSIVE
    return result


# -----------------------------
# mixing
# -----------------------------

def radius_event(A, center: Site, radius: float) -> bool:
    """All grown sites lie within `radius` of center."""
    return all(math.hypot(s.x1 - center.x1, s.x2 - center.x2) < radius for s in A.grown)


@dataclass(frozen=True)
class TwoCopyOutcome:
    """Radius events of the two copies and what their runs had in common."""

    radius_left: bool
    radius_right: bool
    shared_edges: int
    shared_sites: int

    @property
    def qualifies(self) -> bool:
        return self.radius_left and self.radius_right

    @property
    def violates(self) -> bool:
        return self.qualifies and self.shared_edges > 0


def two_copy_replica(task: tuple[int, int, float, EngineConfig]) -> TwoCopyOutcome:
    """Copies of A^n centred at -(n+1) and n+1 grown on one stream."""
    seed, n, T, ecfg = task
    stream = EventStream(seed, T, ecfg.c_dom)
    outcomes = []
    consulted = []
    sites = []
    for center in (-(n + 1), n + 1):
        cfg_i = dataclasses.replace(ecfg, truncation=BoxRegion.truncation_box(n, center), record_consulted=True)
        A, d = run_thinned(segment(n, center), T, cfg_i, stream)
        outcomes.append(radius_event(A, Site(center, 0), n / 2))
        consulted.append(d.consulted)
        sites.append(A.V)
    return TwoCopyOutcome(
        outcomes[0], outcomes[1], len(consulted[0] & consulted[1]), len(sites[0] & sites[1])
    )


def cmd_mixing(cfg: RunConfig) -> ExperimentResult:
    result = ExperimentResult()
    n, T = cfg["n"], cfg["T"]
    span = 1
    seps = parse_int_list(cfg["separations"], "separations")
    for d in seps:
        if d <= 2 * span:
            raise PreconditionError(f"separation {d} must exceed twice the window span ({2 * span})")
        if d - d // 2 > n:
            raise PreconditionError(f"separation {d} does not fit inside the segment of n = {n}")
    pairs = [(0, Site(0, 1), Site(0, 1))]
    for d in seps:
        a = Site(-(d // 2), 1)
        pairs.append((d, a, a.shifted(d)))
    sites = tuple(sorted({p for _, a, b in pairs for p in (a, b)}))
    index = {s: i for i, s in enumerate(sites)}

    ecfg = engine_config(cfg, truncation_box(n))
    seeds = replica_seeds(cfg.master_seed, cfg.replicas, TAG_MIXING)
    occ = np.array(run_replicas(occupation_replica, [(s, n, T, ecfg, sites) for s in seeds], cfg.workers,
                                "mixing"), dtype=float).reshape(len(seeds), len(sites))
    rows = []
    intervals = []
    for d, a, b in pairs:
        iv = correlation_interval(occ[:, index[a]], occ[:, index[b]])
        if d > 0:
            intervals.append(iv)
        rows.append({"separation": d, "x1_a": a.x1, "x1_b": b.x1, "replicas": len(seeds),
                     "p_a": float(occ[:, index[a]].mean()), "p_b": float(occ[:, index[b]].mean()),
                     "correlation": iv.estimate, **_interval_row(iv)})
    result.outputs.append(write_csv(
        _out(cfg, "mixing.csv"),
        ("separation", "x1_a", "x1_b", "replicas", "p_a", "p_b", "correlation", "ci_lo", "ci_hi"), rows))
    result.verdicts["mixing_trend"] = non_increasing_verdict(intervals, require_decrease=False)

    copy_n = cfg["copy_n"]
    copies = cfg["copy_replicas"]
    if copies > 0:
        copy_seeds = replica_seeds(cfg.master_seed, copies, TAG_TWO_COPY)
        out = run_replicas(two_copy_replica, [(s, copy_n, T, ecfg) for s in copy_seeds], cfg.workers, "two-copy")
        qualifying = sum(1 for o in out if o.qualifies)
        violations = sum(1 for o in out if o.violates)
        interacting = sum(1 for o in out if o.shared_edges or o.shared_sites)
        iv = wilson_interval(qualifying, copies)
        result.outputs.append(write_csv(
            _out(cfg, "mixing_two_copy.csv"),
            ("copy_n", "replicas", "both_radius", "p_hat", "ci_lo", "ci_hi", "interacting",
             "disjointness_violations"),
            [{"copy_n": copy_n, "replicas": copies, "both_radius": qualifying, "p_hat": iv.estimate,
              **_interval_row(iv), "interacting": interacting, "disjointness_violations": violations}]))
        result.summary["radius_event_frequency"] = iv.estimate
        result.summary["interacting_copies"] = interacting
        result.summary["disjointness_violations"] = violations
        result.verdicts["two_copy_disjointness"] = Verdict.PASS if violations == 0 else Verdict.FAIL
    return result


COMMANDS = {
    "harmonic": cmd_harmonic,
    "interface-tail": cmd_interface_tail,
    "dla": cmd_dla,
    "couple": cmd_couple,
    "locality": cmd_locality,
    "stationarity": cmd_stationarity,
    "mixing": cmd_mixing,
}
