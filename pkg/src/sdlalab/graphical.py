"""
graphical.py

Per-edge Poisson clocks with uniform marks, generated lazily and
deterministically from a master seed, and the interface process they drive.

Every directed edge owns a Philox substream keyed by (master seed, x1, x2,
direction). The substream is read as pairs of uniforms: the first of each
pair is turned into an exponential gap, the second is the mark. The same
edge therefore sees the same events in every run that uses the same
master seed, whatever else that run does.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .lattice import BoxRegion, DirectedEdge, PreconditionError, Site, out_edges

DEFAULT_C_DOM = 2.0

_SEED_MASK = (1 << 64) - 1
_PAIRS_PER_DRAW = 8


def _zigzag(v: int) -> int:
    return 2 * v if v >= 0 else -2 * v - 1


@dataclass(frozen=True, order=True)
class EdgeEvent:
    time: float
    edge: DirectedEdge
    index: int
    mark: float


class _EdgeClock:
    __slots__ = ("gen", "rate", "times", "marks", "exhausted")

    def __init__(self, gen: np.random.Generator, rate: float):
        self.gen = gen
        self.rate = rate
        self.times: list[float] = []
        self.marks: list[float] = []
        self.exhausted = False


class EventStream:
    """
    Lazily generated graphical representation on [0, horizon].

    The rate of edge x -> y is c_dom * max(sqrt(x2), 1).
    """

    def __init__(self, master_seed: int, horizon: float, c_dom: float = DEFAULT_C_DOM):
        if not 0 <= master_seed <= _SEED_MASK:
            raise PreconditionError(f"master seed must be a 64-bit unsigned integer, got {master_seed}")
        if horizon < 0:
            raise PreconditionError(f"horizon must be >= 0, got {horizon}")
        if c_dom <= 0:
            raise PreconditionError(f"c_dom must be > 0, got {c_dom}")
        self.master_seed = master_seed
        self.horizon = float(horizon)
        self.c_dom = float(c_dom)
        self._clocks: dict[DirectedEdge, _EdgeClock] = {}

    def rate(self, e: DirectedEdge) -> float:
        return self.c_dom * max(math.sqrt(e.tail.x2), 1.0)

    def substream_key(self, e: DirectedEdge) -> np.ndarray:
        ss = np.random.SeedSequence([self.master_seed, _zigzag(e.tail.x1), e.tail.x2, e.direction])
        return ss.generate_state(2, dtype=np.uint64)

    def _clock(self, e: DirectedEdge) -> _EdgeClock:
        clock = self._clocks.get(e)
        if clock is None:
            gen = np.random.Generator(np.random.Philox(key=self.substream_key(e)))
            clock = _EdgeClock(gen, self.rate(e))
            self._clocks[e] = clock
        return clock

    def _extend(self, clock: _EdgeClock, until: float) -> None:
        t = clock.times[-1] if clock.times else 0.0
        while not clock.exhausted and t <= until:
            u = clock.gen.random(2 * _PAIRS_PER_DRAW)
            for k in range(_PAIRS_PER_DRAW):
                t += -math.log1p(-u[2 * k]) / clock.rate
                if t > self.horizon:
                    clock.exhausted = True
                    break
                clock.times.append(t)
                clock.marks.append(float(u[2 * k + 1]))

    def events_on(self, e: DirectedEdge, t0: float, t1: float) -> list[EdgeEvent]:
        """All events of e with t0 < time <= t1; indices count from 1."""
        if t0 < 0 or t1 > self.horizon or t0 > t1:
            raise PreconditionError(f"window ({t0}, {t1}] is not inside [0, {self.horizon}]")
        clock = self._clock(e)
        self._extend(clock, t1)
        out = []
        for j, t in enumerate(clock.times):
            if t > t1:
                break
            if t > t0:
                out.append(EdgeEvent(t, e, j + 1, clock.marks[j]))
        return out

    def next_event_after(self, e: DirectedEdge, t: float) -> Optional[EdgeEvent]:
        """First event of e strictly after t, or None past the horizon."""
        clock = self._clock(e)
        self._extend(clock, t)
        times = clock.times
        lo, hi = 0, len(times)
        while lo < hi:
            mid = (lo + hi) // 2
            if times[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        if lo == len(times):
            return None
        return EdgeEvent(clock.times[lo], e, lo + 1, clock.marks[lo])

    def count_on(self, e: DirectedEdge, t1: Optional[float] = None) -> int:
        t1 = self.horizon if t1 is None else t1
        return len(self.events_on(e, 0.0, t1))


class EventQueue:
    """Time-ordered merge of the streams of the edges being watched.

    Ties are broken by edge order, then index.
    """

    def __init__(self, stream: EventStream):
        self.stream = stream
        self._heap: list[EdgeEvent] = []
        self._live: set[DirectedEdge] = set()
        self._retired: set[DirectedEdge] = set()

    def watch(self, e: DirectedEdge, after: float) -> None:
        if e in self._live or e in self._retired:
            return
        self._live.add(e)
        ev = self.stream.next_event_after(e, after)
        if ev is not None:
            heapq.heappush(self._heap, ev)

    def watch_site(self, s: Site, after: float) -> None:
        for e in out_edges(s):
            self.watch(e, after)

    def retire(self, e: DirectedEdge) -> None:
        """Stop delivering events of e."""
        self._retired.add(e)

    def pop(self) -> Optional[EdgeEvent]:
        while self._heap:
            ev = heapq.heappop(self._heap)
            if ev.edge in self._retired:
                continue
            nxt = self.stream.next_event_after(ev.edge, ev.time)
            if nxt is not None:
                heapq.heappush(self._heap, nxt)
            return ev
        return None

    @property
    def watched(self) -> frozenset[DirectedEdge]:
        return frozenset(self._live)


# -----------------------------
# Interface process
# -----------------------------

@dataclass
class InterfaceState:
    occupied: frozenset[Site]
    t: float
    occupied_at: dict[Site, float] = field(default_factory=dict)
    truncation_hit: bool = False
    hit_time: Optional[float] = None
    events: int = 0

    @property
    def radius(self) -> float:
        """Largest euclidean norm among occupied sites."""
        return max((s.euclidean for s in self.occupied), default=0.0)

    def occupied_by(self, t: float) -> frozenset[Site]:
        return frozenset(s for s, ts in self.occupied_at.items() if ts <= t)


def simulate_interface(
    seed_sites: Iterable[Site], t: float, truncation: BoxRegion, stream: EventStream
) -> InterfaceState:
    """
    Pure growth: an event on x -> y with x occupied and y empty occupies y.
    Marks are ignored. Occupying a site outside the truncation box halts the
    run with truncation_hit set; that site is included in the state.
    """
    seed = frozenset(seed_sites)
    outside = [s for s in seed if not truncation.contains(s)]
    if outside:
        raise PreconditionError(f"seed site {outside[0].as_list()} is outside the truncation box")
    if t > stream.horizon:
        raise PreconditionError(f"t = {t} exceeds the stream horizon {stream.horizon}")

    occupied_at = {s: 0.0 for s in seed}
    queue = EventQueue(stream)
    for s in sorted(seed):
        queue.watch_site(s, 0.0)

    events = 0
    while True:
        ev = queue.pop()
        if ev is None or ev.time > t:
            break
        events += 1
        y = ev.edge.head
        if y in occupied_at:
            queue.retire(ev.edge)
            continue
        occupied_at[y] = ev.time
        if not truncation.contains(y):
            return InterfaceState(frozenset(occupied_at), ev.time, occupied_at, True, ev.time, events)
        queue.watch_site(y, ev.time)
    return InterfaceState(frozenset(occupied_at), t, occupied_at, False, None, events)


def path_envelope(k: int, t: float, c_dom: float, samples: int, rng: np.random.Generator) -> float:
    """
    min(1, 4^k P(T_1 + ... + T_k < t)) with T_i exponential of rate
    4 c_dom sqrt(i + 1), the probability by direct sampling.
    """
    if k < 0:
        raise PreconditionError(f"k must be >= 0, got {k}")
    if k == 0:
        return 1.0
    rates = 4.0 * c_dom * np.sqrt(np.arange(2, k + 2, dtype=float))
    hits = 0
    done = 0
    chunk = 200_000
    while done < samples:
        m = min(chunk, samples - done)
        total = rng.exponential(1.0 / rates, size=(m, k)).sum(axis=1)
        hits += int(np.count_nonzero(total < t))
        done += m
    return min(1.0, 4.0 ** k * hits / samples)
