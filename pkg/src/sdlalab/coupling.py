"""
coupling.py

The truncated pair (A^n, A^{n+1}) grown on one EventStream. Both engines
see every event and apply their own thinning test to the same mark. The
pair is frozen at the first time either aggregate attaches a site outside
the box [-n - L, n + L] x [0, L], L = ceil(ln n).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .engine import Aggregate, EngineConfig, ThinnedGrowth
from .graphical import EventQueue, EventStream
from .harmonic import AggregateSet, Potential, solve_potential
from .lattice import BoxRegion, DirectedEdge, PreconditionError, Site, log_height, out_edges, segment
from .messages import debug
from .scheduler import run_replicas


@dataclass(frozen=True)
class WindowSpec:
    window_id: str
    box: BoxRegion


def as_windows(windows: Sequence[WindowSpec | BoxRegion]) -> list[WindowSpec]:
    out = []
    for i, w in enumerate(windows):
        out.append(w if isinstance(w, WindowSpec) else WindowSpec(f"w{i}", w))
    return out


def truncation_box(n: int) -> BoxRegion:
    return BoxRegion.truncation_box(n)


@dataclass(frozen=True)
class DiscrepancyEvent:
    """Creation of an edge discrepancy: the edge and which aggregate accepted it."""

    time: float
    edge: DirectedEdge
    accepted_by_n: bool
    accepted_by_np1: bool


@dataclass
class CoupledState:
    A_n: Aggregate
    A_np1: Aggregate
    n: int
    config: EngineConfig
    t: float = 0.0
    gamma_hit: bool = False
    gamma_time: Optional[float] = None
    V_D: set[Site] = field(default_factory=set)
    E_D: set[DirectedEdge] = field(default_factory=set)
    initial_pair: frozenset[Site] = frozenset()
    log: list[DiscrepancyEvent] = field(default_factory=list)

    def symmetric_difference(self) -> set[Site]:
        return self.A_n.V ^ self.A_np1.V


@dataclass
class DiscrepancyRecord:
    delta_times: list[float] = field(default_factory=list)
    count_at_1: int = 0
    window_disagreement: dict[WindowSpec, bool] = field(default_factory=dict)
    lambda_D_trace: list[tuple[float, float]] = field(default_factory=list)
    envelope_trace: list[float] = field(default_factory=list)


# -----------------------------
# Coupled run
# -----------------------------

def run_pair(
    seed_a: frozenset[Site],
    seed_b: frozenset[Site],
    T: float,
    cfg: EngineConfig,
    stream: EventStream,
    n: int = 0,
    windows: Sequence[WindowSpec | BoxRegion] = (),
    trace_lambda: bool = False,
    c_audit: float = 1.0,
) -> tuple[CoupledState, DiscrepancyRecord]:
    """Grow two thinned aggregates on the same events until T or until one leaves the box."""
    if T > stream.horizon:
        raise PreconditionError(f"T = {T} exceeds the stream horizon {stream.horizon}")
    a = ThinnedGrowth(seed_a, cfg, stream)
    b = ThinnedGrowth(seed_b, cfg, stream)
    state = CoupledState(
        a.aggregate,
        b.aggregate,
        n,
        cfg,
        V_D=set(seed_a ^ seed_b),
        initial_pair=frozenset(seed_a ^ seed_b),
    )
    record = DiscrepancyRecord()
    specs = as_windows(windows)

    queue = EventQueue(stream)
    for s in sorted(seed_a | seed_b):
        queue.watch_site(s, 0.0)
    if trace_lambda:
        record.lambda_D_trace.append((0.0, lambda_D(state)))
        record.envelope_trace.append(lambda_D_envelope(state, c_audit))

    while True:
        ev = queue.pop()
        if ev is None or ev.time > T:
            break
        e = ev.edge
        if e.head in a.aggregate.V and e.head in b.aggregate.V:
            queue.retire(e)
            continue
        took_a = a.offer(ev)
        took_b = b.offer(ev)
        if not (took_a or took_b):
            continue
        queue.watch_site(e.head, ev.time)
        if took_a != took_b and e not in state.E_D:
            state.E_D.add(e)
            record.delta_times.append(ev.time)
            state.log.append(DiscrepancyEvent(ev.time, e, took_a, took_b))
        if (e.head in a.aggregate.V) != (e.head in b.aggregate.V):
            state.V_D.add(e.head)
        if a.halted or b.halted:
            state.gamma_hit = True
            state.gamma_time = ev.time
            break
        if trace_lambda and took_a != took_b:
            record.lambda_D_trace.append((ev.time, lambda_D(state)))
            record.envelope_trace.append(lambda_D_envelope(state, c_audit))

    state.t = state.gamma_time if state.gamma_hit else T
    state.A_n.t = state.A_np1.t = state.t
    record.count_at_1 = sum(1 for t in record.delta_times if t <= 1.0)
    record.window_disagreement = window_disagreements(state.V_D, specs)
    debug(
        f"coupled run n={n}: |E_D|={len(state.E_D)} |V_D|={len(state.V_D)} "
        f"gamma={'t=%.4f' % state.gamma_time if state.gamma_hit else 'no'}"
    )
    return state, record


def run_coupled(
    n: int,
    T: float,
    windows: Sequence[WindowSpec | BoxRegion],
    cfg: EngineConfig,
    stream: EventStream,
    *,
    trace_lambda: bool = False,
    c_audit: float = 1.0,
) -> tuple[CoupledState, DiscrepancyRecord]:
    """
    Couple A^n and A^{n+1} from the segments [-n, n] and [-n-1, n+1] inside
    the truncation box of n.
    """
    box = truncation_box(n)
    cfg = cfg.with_truncation(box)
    return run_pair(segment(n), segment(n + 1), T, cfg, stream, n, windows, trace_lambda, c_audit)


def window_disagreements(V_D: set[Site], windows: Sequence[WindowSpec]) -> dict[WindowSpec, bool]:
    return {w: any(w.box.contains(s) for s in V_D) for w in windows}


# -----------------------------
# Discrepancy rate
# -----------------------------

# Indicator rows (x in V, y in V) for the n and n+1 aggregates, edge in neither E.
CLASS_ROWS: dict[tuple[tuple[int, int], tuple[int, int]], int] = {
    ((1, 0), (1, 0)): 1,
    ((1, 1), (1, 0)): 2,
    ((1, 0), (0, 0)): 3,
    ((1, 0), (0, 1)): 4,
    ((1, 0), (1, 1)): 5,
    ((0, 0), (1, 0)): 6,
    ((0, 1), (1, 0)): 7,
}

# Which aggregate's field carries the rate of each class (1 uses both).
_CLASS_FIELD = {2: "np1", 3: "n", 4: "n", 5: "n", 6: "np1", 7: "np1"}


def classify_edges(state: CoupledState) -> dict[int, list[DirectedEdge]]:
    """Edges out of either aggregate sorted into the seven discrepancy classes."""
    Vn, Vm = state.A_n.V, state.A_np1.V
    En, Em = state.A_n.E, state.A_np1.E
    classes: dict[int, list[DirectedEdge]] = {k: [] for k in range(1, 8)}
    for x in sorted(Vn | Vm):
        for e in out_edges(x):
            if e in En or e in Em:
                continue
            y = e.head
            key = ((int(x in Vn), int(y in Vn)), (int(x in Vm), int(y in Vm)))
            k = CLASS_ROWS.get(key)
            if k is not None:
                classes[k].append(e)
    return classes


def _state_potentials(state: CoupledState) -> tuple[Potential, Potential]:
    cfg = state.config
    N, dom, settings = cfg.harmonic_height, cfg.harmonic_domain, cfg.settings
    pn = solve_potential(AggregateSet(frozenset(state.A_n.V)), N, dom, settings)
    pm = solve_potential(AggregateSet(frozenset(state.A_np1.V)), N, dom, settings)
    return pn, pm


def lambda_D(state: CoupledState) -> float:
    """Instantaneous rate at which a new edge discrepancy appears."""
    if state.gamma_hit:
        raise PreconditionError("discrepancy rate is zero after the pair is frozen")
    pn, pm = _state_potentials(state)
    total = 0.0
    for k, edges in classify_edges(state).items():
        for e in edges:
            if k == 1:
                total += abs(pn.edge_value(e) - pm.edge_value(e))
            elif _CLASS_FIELD[k] == "n":
                total += pn.edge_value(e)
            else:
                total += pm.edge_value(e)
    return total


def lambda_D_envelope(state: CoupledState, c_audit: float) -> float:
    """17 max(|E_D|, |V_D|) sqrt(L) C_audit."""
    L = log_height(state.n) if state.n >= 1 else 2
    return 17.0 * max(len(state.E_D), len(state.V_D)) * math.sqrt(L) * c_audit


# -----------------------------
# Discrepancy-count tail
# -----------------------------

@dataclass(frozen=True)
class CoupledSummary:
    """What a replica worker sends back from one coupled run."""

    replica_seed: int
    n: int
    gamma_hit: bool
    gamma_time: Optional[float]
    count_at_1: int
    E_D: int
    V_D: int
    heads_cover: bool
    disagreed: Mapping[str, bool]

    @classmethod
    def from_run(cls, replica_seed: int, state: CoupledState, record: DiscrepancyRecord) -> CoupledSummary:
        heads = {e.head for e in state.E_D}
        return cls(
            replica_seed,
            state.n,
            state.gamma_hit,
            state.gamma_time,
            record.count_at_1,
            len(state.E_D),
            len(state.V_D),
            state.V_D <= heads | state.initial_pair,
            {w.window_id: v for w, v in record.window_disagreement.items()},
        )


@dataclass(frozen=True)
class DiscrepancyTail:
    n: int
    alpha: float
    threshold: float
    replicas: int
    histogram: Mapping[int, int]
    exceed: int
    heads_cover_all: bool
    gamma_hits: int

    @property
    def exceed_fraction(self) -> float:
        return self.exceed / self.replicas


def summarize_tail(n: int, alpha: float, summaries: Sequence[CoupledSummary]) -> DiscrepancyTail:
    threshold = n ** alpha
    hist = Counter(s.count_at_1 for s in summaries)
    return DiscrepancyTail(
        n,
        alpha,
        threshold,
        len(summaries),
        dict(sorted(hist.items())),
        sum(1 for s in summaries if s.count_at_1 >= threshold),
        all(s.heads_cover for s in summaries),
        sum(1 for s in summaries if s.gamma_hit),
    )


def coupled_replica(task: tuple[int, int, float, EngineConfig, tuple[WindowSpec, ...]]) -> CoupledSummary:
    """Worker entry point: one coupled run on the stream of one replica seed."""
    replica_seed, n, T, cfg, windows = task
    stream = EventStream(replica_seed, T, cfg.c_dom)
    state, record = run_coupled(n, T, windows, cfg, stream)
    return CoupledSummary.from_run(replica_seed, state, record)


def discrepancy_count_tail(
    n: int,
    T: float,
    replicas: int,
    alpha: float,
    cfg: EngineConfig,
    seeds: Sequence[int],
    workers: int = 1,
) -> DiscrepancyTail:
    """Empirical law of |E_D| at time 1 and the fraction reaching n^alpha."""
    if replicas < 100:
        raise PreconditionError(f"discrepancy tail needs at least 100 replicas, got {replicas}")
    if len(seeds) < replicas:
        raise PreconditionError(f"{len(seeds)} seeds for {replicas} replicas")
    tasks = [(seeds[i], n, T, cfg, ()) for i in range(replicas)]
    summaries = run_replicas(coupled_replica, tasks, workers)
    return summarize_tail(n, alpha, summaries)
