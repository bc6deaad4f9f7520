"""
engine.py

DLA on the upper half-plane from a finite seed.

run_thinned drives the aggregate with the graphical representation: every
event j of an edge e = x -> y with x in V and y outside V is accepted when
its mark is at most H_V(e) / lambda_e. Runs that share an EventStream are
coupled. run_kmc is the direct event-driven chain with jump rate H_V(e) on
every frontier edge, used to cross-check the thinned engine in law.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .aggregatefile import AggregateDocument, load_aggregate, write_aggregate
from .config import ConfigError
from .graphical import DEFAULT_C_DOM, EdgeEvent, EventQueue, EventStream
from .harmonic import (
    AggregateSet,
    IncrementalField,
    Potential,
    SolverSettings,
    default_height,
    solve_potential,
)
from .lattice import BoxRegion, DirectedEdge, PreconditionError, SdlaError, Site, out_edges, segment
from .messages import debug, warn


class DominatingRateViolation(SdlaError):
    """An acceptance ratio H(e) / lambda_e exceeded 1."""

    def __init__(self, edge: DirectedEdge, ratio: float, time: float):
        super().__init__(
            f"dominating rate violated on {edge} at t = {time:.6g}: ratio {ratio:.6g} > 1 "
            f"(raise c_dom)"
        )
        self.edge = edge
        self.ratio = ratio
        self.time = time


# -----------------------------
# Aggregates
# -----------------------------

@dataclass
class Aggregate:
    """A = (V, E): a forest rooted in the seed, grown by attachment edges."""

    seed: frozenset[Site]
    V: set[Site]
    E: set[DirectedEdge]
    t: float = 0.0
    parent: dict[Site, Site] = field(default_factory=dict)
    attached_at: dict[Site, float] = field(default_factory=dict, compare=False)

    @classmethod
    def from_seed(cls, seed: Iterable[Site]) -> Aggregate:
        seed = frozenset(seed)
        return cls(seed, set(seed), set())

    def attach(self, e: DirectedEdge, time: float) -> None:
        if e.tail not in self.V:
            raise PreconditionError(f"cannot attach along {e}: tail not in the aggregate")
        if e.head in self.V:
            raise PreconditionError(f"cannot attach along {e}: head already in the aggregate")
        self.V.add(e.head)
        self.E.add(e)
        self.parent[e.head] = e.tail
        self.attached_at[e.head] = time

    def is_frontier(self, e: DirectedEdge) -> bool:
        return e.tail in self.V and e.head not in self.V and e.head.x2 > 0

    def frontier_edges(self) -> list[DirectedEdge]:
        edges = {e for s in self.V for e in out_edges(s) if self.is_frontier(e)}
        return sorted(edges)

    @property
    def max_height(self) -> int:
        return max((s.x2 for s in self.V), default=0)

    @property
    def grown(self) -> frozenset[Site]:
        return frozenset(self.V - self.seed)

    def root_of(self, s: Site) -> Site:
        while s in self.parent:
            s = self.parent[s]
        return s

    def trees(self) -> dict[Site, frozenset[Site]]:
        """Seed site -> the sites of the tree grown from it."""
        out: dict[Site, set[Site]] = {r: {r} for r in self.seed}
        for s in self.V - self.seed:
            out[self.root_of(s)].add(s)
        return {r: frozenset(v) for r, v in out.items()}

    def check_forest(self) -> None:
        if len(self.E) != len(self.V) - len(self.seed):
            raise PreconditionError(f"{len(self.E)} edges for {len(self.V) - len(self.seed)} grown sites")
        heads = {}
        for e in self.E:
            if e.head in self.seed:
                raise PreconditionError(f"seed site {e.head.as_list()} has an incoming edge")
            if e.head in heads:
                raise PreconditionError(f"site {e.head.as_list()} has two incoming edges")
            heads[e.head] = e.tail
        for s in self.V - self.seed:
            seen = {s}
            while s in heads:
                s = heads[s]
                if s in seen:
                    raise PreconditionError("attachment edges contain a cycle")
                seen.add(s)
            if s not in self.seed:
                raise PreconditionError(f"site {s.as_list()} is not connected to the seed")

    def to_document(self) -> AggregateDocument:
        return AggregateDocument(frozenset(self.V), frozenset(self.E), True, self.t)

    @classmethod
    def from_document(cls, doc: AggregateDocument) -> Aggregate:
        heads = {e.head for e in doc.edges}
        seed = frozenset(s for s in doc.sites if s not in heads)
        agg = cls(seed, set(doc.sites), set(doc.edges), doc.t or 0.0, {e.head: e.tail for e in doc.edges})
        agg.check_forest()
        return agg


def snapshot(A: Aggregate, path: Path) -> Path:
    """Write A in the shared aggregate file format."""
    return write_aggregate(path, A.to_document())


def load_snapshot(path: Path) -> Aggregate:
    return Aggregate.from_document(load_aggregate(path))


def validate_seed(seed: frozenset[Site], truncation: BoxRegion) -> None:
    if not seed:
        raise PreconditionError("seed is empty")
    outside = [s for s in seed if not truncation.contains(s)]
    if outside:
        raise PreconditionError(f"seed site {outside[0].as_list()} is outside the truncation box")
    if not AggregateSet(frozenset(seed)).connected_to_floor():
        raise PreconditionError("seed sites above the floor must connect to L_0 inside the seed")


# -----------------------------
# Configuration
# -----------------------------

class RefreshPolicy(str, enum.Enum):
    EVERY_ACCEPTANCE = "every-acceptance"
    EVERY_K_EVENTS = "every-k-events"


@dataclass(frozen=True)
class EngineConfig:
    truncation: BoxRegion
    harmonic_tol: float = 1e-9
    harmonic_refresh: RefreshPolicy = RefreshPolicy.EVERY_ACCEPTANCE
    refresh_k: int = 16
    # 0 applies the N schedule to the truncation height
    N: int = 0
    c_dom: float = DEFAULT_C_DOM
    solver: SolverSettings = SolverSettings()
    strict_dominating: bool = True
    record_events: bool = False
    record_consulted: bool = False
    record_timings: bool = False

    def __post_init__(self) -> None:
        if self.c_dom < 1:
            raise ConfigError(f"c_dom must be >= 1, got {self.c_dom}")
        if self.harmonic_tol <= 0:
            raise ConfigError(f"harmonic_tol must be > 0, got {self.harmonic_tol}")
        if self.refresh_k < 1:
            raise ConfigError(f"refresh_k must be >= 1, got {self.refresh_k}")
        if self.N and self.N <= self.truncation.y_max:
            raise ConfigError(f"N = {self.N} must exceed the truncation height {self.truncation.y_max}")

    @property
    def harmonic_height(self) -> int:
        return self.N or default_height(self.truncation.y_max)

    @property
    def settings(self) -> SolverSettings:
        return dataclasses.replace(self.solver, tol=self.harmonic_tol)

    @property
    def harmonic_domain(self) -> BoxRegion:
        N = self.harmonic_height
        margin = math.ceil(self.solver.width_factor * N)
        top = N if self.solver.uses_kernel else self.solver.ceiling_factor * N
        return self.truncation.expanded(margin, y_max=top)

    @property
    def stale_events(self) -> int:
        if self.harmonic_refresh is RefreshPolicy.EVERY_K_EVENTS:
            return self.refresh_k
        return 0

    def with_truncation(self, truncation: BoxRegion) -> EngineConfig:
        return dataclasses.replace(self, truncation=truncation)


@functools.lru_cache(maxsize=32)
def _seed_potential(seed: frozenset[Site], cfg: EngineConfig) -> Potential:
    return solve_potential(AggregateSet(seed), cfg.harmonic_height, cfg.harmonic_domain, cfg.settings)


@functools.lru_cache(maxsize=32)
def seed_height_error(seed: frozenset[Site], cfg: EngineConfig) -> float:
    """Largest change of a seed frontier-edge value when N is doubled."""
    B = AggregateSet(seed)
    base = _seed_potential(seed, cfg)
    N2 = 2 * cfg.harmonic_height
    doubled = dataclasses.replace(cfg, N=N2)
    p2 = solve_potential(B, N2, doubled.harmonic_domain, cfg.settings)
    edges = B.frontier_edges((cfg.truncation.x_min, cfg.truncation.x_max))
    return max((abs(base.edge_value(e) - p2.edge_value(e)) for e in edges), default=0.0)


# -----------------------------
# Diagnostics
# -----------------------------

@dataclass(frozen=True)
class EventLogRow:
    time: float
    edge: DirectedEdge
    index: int
    mark: float
    accepted: bool
    prob: float
    recompute_ms: Optional[float]


@dataclass
class EngineDiagnostics:
    events_seen: int = 0
    events_skipped: int = 0
    acceptances: int = 0
    rate_violations: int = 0
    max_ratio: float = 0.0
    recompute_count: int = 0
    recompute_seconds: float = 0.0
    max_height: int = 0
    truncation_hit: bool = False
    hit_time: Optional[float] = None
    halted_empty: bool = False
    field_height_error: float = 0.0
    event_log: list[EventLogRow] = field(default_factory=list)
    consulted: set[DirectedEdge] = field(default_factory=set)


# -----------------------------
# Thinned engine
# -----------------------------

class ThinnedGrowth:
    """One thinned aggregate fed with externally ordered edge events."""

    def __init__(self, seed: Iterable[Site], cfg: EngineConfig, stream: EventStream):
        seed = frozenset(seed)
        validate_seed(seed, cfg.truncation)
        if abs(stream.c_dom - cfg.c_dom) > 1e-12:
            raise ConfigError(f"stream c_dom {stream.c_dom} differs from engine c_dom {cfg.c_dom}")
        self.cfg = cfg
        self.stream = stream
        self.aggregate = Aggregate.from_seed(seed)
        self.field = IncrementalField(
            seed,
            cfg.harmonic_height,
            cfg.harmonic_domain,
            cfg.settings,
            stale_events=cfg.stale_events,
            initial=_seed_potential(seed, cfg),
        )
        self.diagnostics = EngineDiagnostics(max_height=self.aggregate.max_height)

    @property
    def halted(self) -> bool:
        return self.diagnostics.truncation_hit

    def eligible(self, e: DirectedEdge) -> bool:
        return e.tail in self.aggregate.V and e.head not in self.aggregate.V

    def offer(self, ev: EdgeEvent) -> bool:
        """Apply the thinning rule to one event; True when it attaches a site."""
        d = self.diagnostics
        d.events_seen += 1
        e = ev.edge
        if self.halted or not self.eligible(e):
            d.events_skipped += 1
            return False
        if self.cfg.record_consulted:
            d.consulted.add(e)
        self.field.note_event()
        before = self.field.recompute_count
        seconds = self.field.recompute_seconds
        h = self.field.value(e)
        ratio = h / self.stream.rate(e)
        d.max_ratio = max(d.max_ratio, ratio)
        if ratio > 1.0:
            d.rate_violations += 1
            if self.cfg.strict_dominating:
                raise DominatingRateViolation(e, ratio, ev.time)
        accepted = ev.mark <= ratio
        if accepted:
            self.aggregate.attach(e, ev.time)
            self.field.add(e.head)
            d.acceptances += 1
            d.max_height = max(d.max_height, e.head.x2)
            if not self.cfg.truncation.contains(e.head):
                d.truncation_hit = True
                d.hit_time = ev.time
        d.recompute_count = self.field.recompute_count
        d.recompute_seconds = self.field.recompute_seconds
        if self.cfg.record_events:
            ms = None
            if self.cfg.record_timings and self.field.recompute_count > before:
                ms = 1000.0 * (self.field.recompute_seconds - seconds)
            d.event_log.append(EventLogRow(ev.time, e, ev.index, ev.mark, accepted, min(ratio, 1.0), ms))
        return accepted


def run_thinned(
    seed: Iterable[Site], t_end: float, cfg: EngineConfig, stream: EventStream
) -> tuple[Aggregate, EngineDiagnostics]:
    if t_end > stream.horizon:
        raise PreconditionError(f"t_end = {t_end} exceeds the stream horizon {stream.horizon}")
    seed = frozenset(seed)
    growth = ThinnedGrowth(seed, cfg, stream)
    growth.diagnostics.field_height_error = seed_height_error(seed, cfg)
    queue = EventQueue(stream)
    for s in sorted(seed):
        queue.watch_site(s, 0.0)

    A = growth.aggregate
    while True:
        ev = queue.pop()
        if ev is None or ev.time > t_end:
            break
        if ev.edge.head in A.V:
            queue.retire(ev.edge)
        if growth.offer(ev):
            if growth.halted:
                warn(f"aggregate left the truncation box at t = {ev.time:.4f}")
                break
            queue.watch_site(ev.edge.head, ev.time)

    d = growth.diagnostics
    A.t = d.hit_time if d.truncation_hit else t_end
    debug(
        f"thinned run: {d.acceptances} attached, {d.events_seen} events, "
        f"{d.recompute_count} field solves, max ratio {d.max_ratio:.3f}"
    )
    return A, d


# -----------------------------
# Event-driven engine
# -----------------------------

def run_kmc(
    seed: Iterable[Site], t_end: float, cfg: EngineConfig, rng: np.random.Generator
) -> tuple[Aggregate, EngineDiagnostics]:
    """Gillespie simulation with rate H_V(e) on every frontier edge."""
    seed = frozenset(seed)
    validate_seed(seed, cfg.truncation)
    A = Aggregate.from_seed(seed)
    fld = IncrementalField(
        seed,
        cfg.harmonic_height,
        cfg.harmonic_domain,
        cfg.settings,
        initial=_seed_potential(seed, cfg),
    )
    d = EngineDiagnostics(max_height=A.max_height)
    d.field_height_error = seed_height_error(seed, cfg)

    t = 0.0
    while True:
        edges = A.frontier_edges()
        rates = np.array([fld.value(e) for e in edges])
        total = float(rates.sum())
        if total <= 0.0:
            d.halted_empty = True
            warn("no frontier rate left inside the domain; run halted")
            break
        t += rng.exponential(1.0 / total)
        if t > t_end:
            break
        k = min(int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right")), len(edges) - 1)
        e = edges[k]
        A.attach(e, t)
        fld.add(e.head)
        d.events_seen += 1
        d.acceptances += 1
        d.max_height = max(d.max_height, e.head.x2)
        if cfg.record_events:
            d.event_log.append(EventLogRow(t, e, d.events_seen, math.nan, True, rates[k] / total, None))
        if not cfg.truncation.contains(e.head):
            d.truncation_hit = True
            d.hit_time = t
            warn(f"aggregate left the truncation box at t = {t:.4f}")
            break
    d.recompute_count = fld.recompute_count
    d.recompute_seconds = fld.recompute_seconds
    A.t = d.hit_time if d.truncation_hit else t_end
    return A, d


def first_attachment(A: Aggregate) -> Optional[Site]:
    if not A.attached_at:
        return None
    return min(A.attached_at, key=lambda s: A.attached_at[s])


def attachment_order(A: Aggregate) -> list[Site]:
    return sorted(A.attached_at, key=lambda s: A.attached_at[s])


def engine_seed(n: int, aggregate_path: str = "") -> frozenset[Site]:
    """The segment [-n, n] x {0}, or the sites of an aggregate file."""
    if aggregate_path:
        return frozenset(load_aggregate(Path(aggregate_path)).sites)
    return segment(n)
