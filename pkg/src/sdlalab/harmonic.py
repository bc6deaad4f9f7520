"""
harmonic.py

Stationary harmonic measure of a set B in the upper half-plane.

For a frontier edge x -> y of B (x in B, y outside), the finite-N measure
is the total mass that walks started on L_N deliver to x with y as the
last site before entering B. Reversing paths turns the sum over starting
points into a single quantity per edge:

    H_{B,N}(x -> y) = u(y) / 4

where u(w) is the expected number of visits to L_N a walk from w makes
before it enters B. So one discrete Poisson problem per domain gives every
edge value of the field at once:

    u = s + (1/4) * sum of neighbor values,   s = 1 on row N, u = 0 on B

The effective set is always B together with the floor L_0.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .lattice import (
    DEFAULT_STEP_BUDGET,
    DIRECTIONS,
    BoxRegion,
    DirectedEdge,
    PreconditionError,
    SdlaError,
    Site,
    WalkStatus,
    neighbors,
    out_edges,
    return_kernel,
    run_walk,
)
from .messages import debug, warn


class SolverError(SdlaError):
    """The relaxation did not reach its tolerance, or a limit did not settle."""

    def __init__(self, message: str, residual: Optional[float] = None, sequence=None):
        super().__init__(message)
        self.residual = residual
        self.sequence = sequence


# -----------------------------
# Settings
# -----------------------------

class HarmonicMethod(str, enum.Enum):
    EXACT = "exact-solve"
    MONTE_CARLO = "monte-carlo"


class SideBoundary(str, enum.Enum):
    PERIODIC = "periodic"
    ABSORBING = "absorbing"


class CeilingMode(str, enum.Enum):
    RETURN_KERNEL = "return-kernel"
    ABSORBING = "absorbing"


class SolverBackend(str, enum.Enum):
    RELAXATION = "relaxation"
    DIRECT = "direct"


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-10
    sides: SideBoundary = SideBoundary.PERIODIC
    ceiling: CeilingMode = CeilingMode.RETURN_KERNEL
    backend: SolverBackend = SolverBackend.RELAXATION
    max_iterations: int = 200_000
    # horizontal margin around B, in units of N
    width_factor: float = 2.0
    # domain top for an absorbing ceiling, in units of N
    ceiling_factor: int = 2

    def __post_init__(self) -> None:
        if self.tol <= 0:
            raise PreconditionError(f"solver tolerance must be > 0, got {self.tol}")
        if self.width_factor <= 0:
            raise PreconditionError(f"width_factor must be > 0, got {self.width_factor}")
        if self.ceiling_factor < 1:
            raise PreconditionError(f"ceiling_factor must be >= 1, got {self.ceiling_factor}")

    @property
    def periodic(self) -> bool:
        return self.sides is SideBoundary.PERIODIC

    @property
    def uses_kernel(self) -> bool:
        return self.ceiling is CeilingMode.RETURN_KERNEL


# -----------------------------
# Aggregate sets
# -----------------------------

@dataclass(frozen=True)
class AggregateSet:
    """A finite set of sites; harmonic operations always add the floor L_0."""

    sites: frozenset[Site] = frozenset()
    includes_floor: bool = True

    @classmethod
    def of(cls, sites: Iterable[Site], includes_floor: bool = True) -> AggregateSet:
        return cls(frozenset(sites), includes_floor)

    @classmethod
    def column(cls, height: int, x1: int = 0) -> AggregateSet:
        return cls.of(Site(x1, h) for h in range(1, height + 1))

    @cached_property
    def coords(self) -> frozenset[tuple[int, int]]:
        return frozenset((s.x1, s.x2) for s in self.sites)

    def contains_xy(self, x1: int, x2: int) -> bool:
        return x2 == 0 or (x1, x2) in self.coords

    def contains(self, s: Site) -> bool:
        return s.x2 == 0 or (s.x1, s.x2) in self.coords

    @property
    def max_height(self) -> int:
        return max((s.x2 for s in self.sites), default=0)

    def x_range(self) -> tuple[int, int]:
        if not self.sites:
            return (0, 0)
        xs = [s.x1 for s in self.sites]
        return (min(min(xs), 0), max(max(xs), 0))

    def is_frontier_edge(self, e: DirectedEdge) -> bool:
        return self.contains(e.tail) and not self.contains(e.head)

    def frontier_edges(self, floor_range: Optional[tuple[int, int]] = None) -> list[DirectedEdge]:
        """Frontier edges out of the listed sites, plus the upward floor edges
        for floor columns in floor_range."""
        edges = set()
        for s in self.sites:
            for y in neighbors(s):
                if not self.contains(y):
                    edges.add(DirectedEdge(s, y))
        if floor_range is not None:
            for x1 in range(floor_range[0], floor_range[1] + 1):
                if not self.contains_xy(x1, 1):
                    edges.add(DirectedEdge(Site(x1, 0), Site(x1, 1)))
        return sorted(edges)

    def outer_boundary(self) -> list[Site]:
        out = set()
        for s in self.sites:
            for y in neighbors(s):
                if not self.contains(y):
                    out.add(y)
        return sorted(out)

    def connected_to_floor(self) -> bool:
        """Every listed site reaches L_0 through nearest-neighbor steps inside the set."""
        reached = {s for s in self.sites if s.x2 == 1 or s.x2 == 0}
        frontier = list(reached)
        while frontier:
            s = frontier.pop()
            for y in neighbors(s):
                if y in self.sites and y not in reached:
                    reached.add(y)
                    frontier.append(y)
        return reached == set(self.sites)

    def with_site(self, s: Site) -> AggregateSet:
        return AggregateSet(self.sites | {s}, self.includes_floor)


def default_height(max_height: int) -> int:
    """First height of the N schedule: twice the aggregate height plus 4."""
    return 2 * max_height + 4


def height_schedule(B: AggregateSet, n_cap: int) -> Iterator[int]:
    N = default_height(B.max_height)
    while N <= n_cap:
        yield N
        N *= 2


def default_domain(B: AggregateSet, N: int, settings: Optional[SolverSettings] = None) -> BoxRegion:
    settings = settings or SolverSettings()
    margin = math.ceil(settings.width_factor * N)
    lo, hi = B.x_range()
    top = N if settings.uses_kernel else settings.ceiling_factor * N
    return BoxRegion(lo - margin, hi + margin, 0, top)


# -----------------------------
# The visit-count problem
# -----------------------------

@dataclass(frozen=True, eq=False)
class Potential:
    """Expected visits to L_N before absorption, on every cell of a domain."""

    values: np.ndarray
    aggregate: AggregateSet
    N: int
    domain: BoxRegion
    settings: SolverSettings
    residual: float
    iterations: int

    def at(self, x1: int, x2: int) -> float:
        d = self.domain
        if self.settings.periodic:
            x1 = d.wrap(x1)
        if not d.contains_xy(x1, x2):
            return 0.0
        return float(self.values[x2 - d.y_min, x1 - d.x_min])

    def edge_value(self, e: DirectedEdge) -> float:
        if not self.aggregate.is_frontier_edge(e):
            return 0.0
        return self.at(e.head.x1, e.head.x2) / 4.0


def _validate(B: AggregateSet, N: int, domain: BoxRegion) -> None:
    if N <= B.max_height:
        raise PreconditionError(f"N = {N} must exceed the aggregate height {B.max_height}")
    if domain.y_min != 0:
        raise PreconditionError("solve domain must start at L_0")
    if domain.y_max < N:
        raise PreconditionError(f"solve domain top {domain.y_max} is below L_{N}")
    outside = [s for s in B.sites if not domain.contains(s)]
    if outside:
        raise PreconditionError(
            f"{len(outside)} aggregate site(s) outside the solve domain, e.g. {outside[0].as_list()}"
        )


class _VisitProblem:
    def __init__(self, B: AggregateSet, N: int, domain: BoxRegion, settings: SolverSettings):
        self.B = B
        self.N = N
        self.domain = domain
        self.settings = settings
        self.periodic = settings.periodic
        ny, nx = domain.y_max + 1, domain.width
        self.shape = (ny, nx)

        self.site_mask = np.zeros(self.shape, dtype=bool)
        for s in B.sites:
            self.site_mask[s.x2, s.x1 - domain.x_min] = True
        absorbing = self.site_mask.copy()
        absorbing[0, :] = True
        self.absorbing = absorbing
        self.free = ~absorbing

        self.source = np.zeros(self.shape)
        self.source[N, :] = self.free[N, :]

        self.kernel = return_kernel(nx, self.periodic) if settings.uses_kernel else None
        self.self_weight = np.zeros(self.shape)
        if self.kernel is not None:
            self.self_weight[-1, :] = self.kernel.self_weight
        self.diag = 1.0 - 0.25 * self.self_weight

    def neighbor_sum(self, u: np.ndarray) -> np.ndarray:
        nb = np.zeros_like(u)
        nb[:-1] += u[1:]
        nb[1:] += u[:-1]
        if self.periodic:
            nb += np.roll(u, 1, axis=1)
            nb += np.roll(u, -1, axis=1)
        else:
            nb[:, 1:] += u[:, :-1]
            nb[:, :-1] += u[:, 1:]
        if self.kernel is not None:
            nb[-1] += self.kernel.convolve(u[-1])
        return nb

    def residual(self, u: np.ndarray) -> float:
        r = self.source + 0.25 * self.neighbor_sum(u) - u
        return float(np.max(np.abs(r[self.free]), initial=0.0))

    def omega(self) -> float:
        ny, nx = self.shape
        cv = math.cos(math.pi / (2 * ny + 1)) if self.kernel is not None else math.cos(math.pi / (ny + 1))
        ch = 1.0 if self.periodic else math.cos(math.pi / (nx + 1))
        rho = 0.5 * (cv + ch)
        return min(1.9, 2.0 / (1.0 + math.sqrt(max(0.0, 1.0 - rho * rho))))

    def relax(self, initial: Optional[np.ndarray] = None) -> tuple[np.ndarray, float, int]:
        """Red-black over-relaxation; damps the factor toward 1 if the residual grows."""
        tol = self.settings.tol
        if initial is not None and initial.shape == self.shape:
            u = np.array(initial, dtype=float)
        else:
            u = np.zeros(self.shape)
        u[self.absorbing] = 0.0

        jj, ii = np.indices(self.shape)
        colors = [self.free & ((ii + jj) % 2 == c) for c in (0, 1)]
        omega = self.omega()
        best = math.inf
        r = self.residual(u)
        if r < tol:
            return u, r, 0
        for it in range(1, self.settings.max_iterations + 1):
            for mask in colors:
                nb = self.neighbor_sum(u)
                gs = (self.source + 0.25 * (nb - self.self_weight * u)) / self.diag
                u[mask] += omega * (gs[mask] - u[mask])
            if it % 10 == 0:
                r = self.residual(u)
                if r < tol:
                    debug(f"relaxation converged: {it} sweeps, residual {r:.2e}, omega {omega:.3f}")
                    return u, r, it
                if not math.isfinite(r) or (r > 10.0 * best and omega > 1.0):
                    omega = 1.0 + (omega - 1.0) / 2.0 if omega > 1.05 else 1.0
                    warn(f"relaxation residual grew to {r:.2e}; over-relaxation reduced to {omega:.3f}")
                    u = np.zeros(self.shape)
                    best = math.inf
                    continue
                best = min(best, r)
        raise SolverError(
            f"relaxation did not reach {tol:.1e} in {self.settings.max_iterations} sweeps "
            f"(residual {r:.2e})",
            residual=r,
        )

    def solve_direct(self) -> tuple[np.ndarray, float, int]:
        from scipy.sparse import coo_matrix
        from scipy.sparse.linalg import spsolve

        ny, nx = self.shape
        index = -np.ones(self.shape, dtype=np.int64)
        n_free = int(self.free.sum())
        index[self.free] = np.arange(n_free)

        rows = [np.arange(n_free)]
        cols = [np.arange(n_free)]
        vals = [np.ones(n_free)]

        jj, ii = np.nonzero(self.free)
        me = index[jj, ii]
        for dx, dy in DIRECTIONS:
            tj, ti = jj + dy, ii + dx
            if self.periodic:
                ti = ti % nx
                inside = (tj >= 0) & (tj < ny)
            else:
                inside = (tj >= 0) & (tj < ny) & (ti >= 0) & (ti < nx)
            src = me[inside]
            dst = index[tj[inside], ti[inside]]
            ok = dst >= 0
            rows.append(src[ok])
            cols.append(dst[ok])
            vals.append(np.full(int(ok.sum()), -0.25))

        if self.kernel is not None:
            top = np.arange(nx)
            a, b = np.meshgrid(top, top, indexing="ij")
            if self.periodic:
                w = self.kernel.weights[(b - a) % nx]
            else:
                w = self.kernel.weights[(b - a) + nx - 1]
            rows.append(index[ny - 1, a].ravel())
            cols.append(index[ny - 1, b].ravel())
            vals.append(-0.25 * w.ravel())

        A = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n_free, n_free),
        ).tocsc()
        x = spsolve(A, self.source[self.free])
        u = np.zeros(self.shape)
        u[self.free] = x
        return u, self.residual(u), 1


def solve_potential(
    B: AggregateSet,
    N: int,
    domain: BoxRegion,
    settings: Optional[SolverSettings] = None,
    initial: Optional[np.ndarray] = None,
) -> Potential:
    """Solve the visit-count problem for B on one domain."""
    settings = settings or SolverSettings()
    _validate(B, N, domain)
    problem = _VisitProblem(B, N, domain, settings)
    if settings.backend is SolverBackend.DIRECT:
        u, r, its = problem.solve_direct()
    else:
        u, r, its = problem.relax(initial)
    return Potential(u, B, N, domain, settings, r, its)


# -----------------------------
# Fields
# -----------------------------

@dataclass(frozen=True, eq=False)
class HarmonicField:
    values: Mapping[DirectedEdge, float]
    N: int
    domain: BoxRegion
    method: HarmonicMethod = HarmonicMethod.EXACT
    truncation_error_estimate: float = 0.0
    sample_count: Optional[int] = None
    aggregate: AggregateSet = AggregateSet()
    residual: float = 0.0
    potential: Optional[Potential] = field(default=None, repr=False)

    def value(self, e: DirectedEdge) -> float:
        return self.values.get(e, 0.0)

    def point(self, x: Site) -> float:
        """Point measure: sum of edge values out of x."""
        return sum(self.values.get(e, 0.0) for e in out_edges(x))

    def outer_point(self, y: Site) -> float:
        """Mass arriving at y from the aggregate side."""
        return sum(self.values.get(DirectedEdge(x, y), 0.0) for x in neighbors(y))

    def total(self) -> float:
        return float(sum(self.values.values()))

    def edges(self) -> list[DirectedEdge]:
        return sorted(self.values)


def field_from_potential(
    p: Potential, floor_range: Optional[tuple[int, int]] = None, keys: Optional[Sequence[DirectedEdge]] = None
) -> HarmonicField:
    if keys is None:
        if floor_range is None:
            floor_range = (p.domain.x_min, p.domain.x_max)
        keys = p.aggregate.frontier_edges(floor_range)
    values = {e: p.edge_value(e) for e in keys}
    return HarmonicField(values, p.N, p.domain, HarmonicMethod.EXACT, 0.0, None, p.aggregate, p.residual, p)


def solve_hitting_field(
    B: AggregateSet,
    N: int,
    domain: Optional[BoxRegion] = None,
    tol: Optional[float] = None,
    *,
    settings: Optional[SolverSettings] = None,
) -> HarmonicField:
    """
    Exact finite-N field of B on a domain, with the truncation error taken
    from a second solve on a domain twice as wide. Reported values come
    from the wide solve; keys are the frontier edges of the narrow domain.
    """
    settings = settings or SolverSettings()
    if tol is not None:
        settings = dataclasses.replace(settings, tol=tol)
    if domain is None:
        domain = default_domain(B, N, settings)

    narrow = solve_potential(B, N, domain, settings)
    wide = solve_potential(B, N, domain.widened(2.0), settings)
    keys = B.frontier_edges((domain.x_min, domain.x_max))
    keys = [e for e in keys if domain.contains(e.tail)]
    values = {e: wide.edge_value(e) for e in keys}
    narrow_total = sum(narrow.edge_value(e) for e in keys)
    error = abs(sum(values.values()) - narrow_total)
    debug(f"field N={N} width={domain.width}: {len(keys)} edges, truncation error {error:.2e}")
    return HarmonicField(
        values,
        N,
        domain,
        HarmonicMethod.EXACT,
        error,
        None,
        B,
        max(narrow.residual, wide.residual),
        wide,
    )


def hm_point(
    B: AggregateSet,
    x: Site,
    N: int,
    domain: Optional[BoxRegion] = None,
    tol: Optional[float] = None,
    *,
    settings: Optional[SolverSettings] = None,
) -> float:
    if not B.contains(x):
        raise PreconditionError(f"{x.as_list()} is not in the aggregate")
    return solve_hitting_field(B, N, domain, tol, settings=settings).point(x)


def hm_outer_point(
    B: AggregateSet,
    y: Site,
    N: int,
    domain: Optional[BoxRegion] = None,
    tol: Optional[float] = None,
    *,
    settings: Optional[SolverSettings] = None,
) -> float:
    if B.contains(y) or not any(B.contains(x) for x in neighbors(y)):
        raise PreconditionError(f"{y.as_list()} is not on the outer boundary of the aggregate")
    return solve_hitting_field(B, N, domain, tol, settings=settings).outer_point(y)


# -----------------------------
# Conservation
# -----------------------------

@dataclass(frozen=True)
class MassBalance:
    emitted: float
    frontier: float
    floor: float
    lost: float

    @property
    def defect(self) -> float:
        return self.emitted - self.frontier - self.floor - self.lost


def mass_balance(f: HarmonicField) -> MassBalance:
    """
    Split the mass emitted from L_N into what the listed sites absorb, what
    the bare floor absorbs, and what leaves the domain.
    """
    p = f.potential
    if p is None:
        raise PreconditionError("mass balance needs an exact field")
    prob = _VisitProblem(p.aggregate, p.N, p.domain, p.settings)
    u = np.where(prob.free, p.values, 0.0)
    ny, nx = prob.shape

    frontier = 0.0
    floor = 0.0
    lost = 0.0
    for dx, dy in DIRECTIONS:
        for j in range(ny):
            tj = j + dy
            row = u[j]
            if tj < 0:
                continue
            if tj >= ny:
                if prob.kernel is not None:
                    lost += float(np.sum(row * (1.0 - prob.kernel.in_row_mass()))) / 4.0
                else:
                    lost += float(np.sum(row)) / 4.0
                continue
            cols = np.arange(nx) + dx
            if prob.periodic:
                cols = cols % nx
                inside = np.ones(nx, dtype=bool)
            else:
                inside = (cols >= 0) & (cols < nx)
                lost += float(np.sum(row[~inside])) / 4.0
            src = np.nonzero(inside)[0]
            dst = cols[inside]
            hit_site = prob.site_mask[tj, dst]
            hit_floor = prob.absorbing[tj, dst] & ~hit_site
            frontier += float(np.sum(row[src][hit_site])) / 4.0
            floor += float(np.sum(row[src][hit_floor])) / 4.0
    emitted = float(prob.source.sum())
    return MassBalance(emitted, frontier, floor, lost)


# -----------------------------
# Monte-Carlo estimator
# -----------------------------

@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    replicas: int
    discarded: int = 0
    flagged: bool = False

    @property
    def used(self) -> int:
        return self.replicas - self.discarded


def mc_hm_estimate(
    B: AggregateSet,
    x: Site,
    N: int,
    replicas: int,
    rng: np.random.Generator,
    *,
    domain: Optional[BoxRegion] = None,
    settings: Optional[SolverSettings] = None,
    budget: int = DEFAULT_STEP_BUDGET,
) -> McEstimate:
    """
    Walks from x take a uniform first step; a step into B or L_0 scores 0,
    otherwise the walk counts its visits to L_N until it enters B or L_0.
    The mean estimates the point measure of x.
    """
    if replicas < 1:
        raise PreconditionError("Monte-Carlo estimate needs at least one replica")
    if not B.contains(x):
        raise PreconditionError(f"{x.as_list()} is not in the aggregate")
    if N <= max(x.x2, B.max_height):
        raise PreconditionError(f"N = {N} must exceed the heights of the aggregate and of x")
    settings = settings or SolverSettings()
    if domain is None:
        domain = default_domain(B, N, settings)
    _validate(B, N, domain)
    kernel = return_kernel(domain.width, settings.periodic) if settings.uses_kernel else None

    def counting(h: int) -> bool:
        return h == N

    samples: list[int] = []
    discarded = 0
    first = rng.integers(0, 4, size=replicas)
    for r in range(replicas):
        dx, dy = DIRECTIONS[first[r]]
        y1, y2 = x.x1 + dx, x.x2 + dy
        if y2 < 0 or B.contains_xy(y1, y2):
            samples.append(0)
            continue
        if settings.periodic:
            y1 = domain.wrap(y1)
            if B.contains_xy(y1, y2):
                samples.append(0)
                continue
        elif not domain.contains_xy(y1, y2):
            samples.append(0)
            continue
        out = run_walk(
            Site(y1, y2),
            B.contains_xy,
            domain,
            counting,
            rng,
            ceiling=kernel,
            periodic=settings.periodic,
            budget=budget,
        )
        if out.status is WalkStatus.BUDGET_EXHAUSTED:
            discarded += 1
            continue
        samples.append(out.visits_counted)

    arr = np.asarray(samples, dtype=float)
    flagged = discarded > 0.01 * replicas
    if flagged:
        warn(f"{discarded} of {replicas} walks exhausted their step budget")
    if arr.size == 0:
        return McEstimate(math.nan, math.nan, replicas, discarded, True)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.inf
    return McEstimate(float(arr.mean()), se, replicas, discarded, flagged)


# -----------------------------
# N -> infinity
# -----------------------------

@dataclass(frozen=True)
class LimitSequence:
    heights: tuple[int, ...]
    values: tuple[float, ...]

    @property
    def increments(self) -> tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.values, self.values[1:]))

    @property
    def direction(self) -> str:
        inc = self.increments
        if not inc or all(abs(d) <= 1e-12 for d in inc):
            return "constant"
        if all(d >= -1e-12 for d in inc):
            return "increasing"
        if all(d <= 1e-12 for d in inc):
            return "decreasing"
        return "mixed"


@dataclass(frozen=True, eq=False)
class FieldLimit:
    field: HarmonicField
    N_used: int
    error_bound: float
    sequences: Mapping[DirectedEdge, LimitSequence]


@dataclass(frozen=True)
class EdgeLimit:
    value: float
    N_used: int
    error_bound: float
    sequence: LimitSequence

    @property
    def direction(self) -> str:
        return self.sequence.direction


def field_limit(
    B: AggregateSet,
    tol: float = 1e-3,
    *,
    edges: Optional[Sequence[DirectedEdge]] = None,
    settings: Optional[SolverSettings] = None,
    n_cap: int = 256,
    heights: Optional[Sequence[int]] = None,
) -> FieldLimit:
    """Double N until every tracked edge value moves by less than tol."""
    if edges is None:
        edges = B.frontier_edges()
        if not edges:
            edges = [DirectedEdge(Site(0, 0), Site(0, 1))]
    schedule = list(heights) if heights is not None else list(height_schedule(B, n_cap))
    history: dict[DirectedEdge, list[float]] = {e: [] for e in edges}
    used: list[int] = []
    prev: Optional[HarmonicField] = None
    for N in schedule:
        f = solve_hitting_field(B, N, settings=settings)
        used.append(N)
        for e in edges:
            history[e].append(f.value(e))
        if prev is not None:
            step = max(abs(f.value(e) - prev.value(e)) for e in edges)
            if step < tol:
                sequences = {e: LimitSequence(tuple(used), tuple(v)) for e, v in history.items()}
                return FieldLimit(f, N, step, sequences)
        prev = f
    sequences = {e: LimitSequence(tuple(used), tuple(v)) for e, v in history.items()}
    raise SolverError(f"field did not settle to {tol:.1e} by N = {used[-1] if used else n_cap}", sequence=sequences)


def hm_edge_limit(
    B: AggregateSet,
    e: DirectedEdge,
    tol: float = 1e-3,
    *,
    settings: Optional[SolverSettings] = None,
    n_cap: int = 256,
) -> EdgeLimit:
    if not B.is_frontier_edge(e):
        raise PreconditionError(f"{e} is not a frontier edge")
    lim = field_limit(B, tol, edges=[e], settings=settings, n_cap=n_cap)
    seq = lim.sequences[e]
    return EdgeLimit(seq.values[-1], lim.N_used, lim.error_bound, seq)


# -----------------------------
# Height-bound audit
# -----------------------------

@dataclass(frozen=True)
class RatioRow:
    case: int
    site: Site
    value: float
    ratio: float


@dataclass(frozen=True)
class HeightBoundReport:
    rows: tuple[RatioRow, ...]
    per_height_max: Mapping[int, float]
    c_audit: float
    non_increasing: bool
    growth_tol: float

    @property
    def empty(self) -> bool:
        return not self.rows


def verify_height_bound(
    suite: Sequence[AggregateSet],
    tol: float = 1e-3,
    *,
    settings: Optional[SolverSettings] = None,
    growth_tol: float = 0.10,
    n_cap: int = 256,
) -> HeightBoundReport:
    """Ratio of the limit point measure to sqrt(height) over every site at height >= 1."""
    for i, B in enumerate(suite):
        if not B.connected_to_floor():
            raise PreconditionError(f"suite case {i} is not attached to the floor")

    rows: list[RatioRow] = []
    for i, B in enumerate(suite):
        raised = sorted(s for s in B.sites if s.x2 >= 1)
        if not raised:
            continue
        edges = [e for e in B.frontier_edges() if e.tail.x2 >= 1]
        lim = field_limit(B, tol, edges=edges or None, settings=settings, n_cap=n_cap)
        for s in raised:
            v = lim.field.point(s)
            rows.append(RatioRow(i, s, v, v / math.sqrt(s.x2)))

    per_height: dict[int, float] = {}
    for r in rows:
        per_height[r.site.x2] = max(per_height.get(r.site.x2, 0.0), r.ratio)
    heights = sorted(per_height)
    non_increasing = all(
        per_height[b] <= per_height[a] * (1.0 + growth_tol) for a, b in zip(heights, heights[1:])
    )
    c_audit = max(per_height.values(), default=0.0)
    return HeightBoundReport(tuple(rows), dict(sorted(per_height.items())), c_audit, non_increasing, growth_tol)


# -----------------------------
# Incremental field for growing aggregates
# -----------------------------

class IncrementalField:
    """
    Field of a growing aggregate on a fixed N and domain. Each refresh warm
    starts from the previous solution. With stale_events = k > 0 a stale
    field is kept until k further events have been offered.
    """

    def __init__(
        self,
        sites: Iterable[Site],
        N: int,
        domain: BoxRegion,
        settings: Optional[SolverSettings] = None,
        *,
        stale_events: int = 0,
        initial: Optional[Potential] = None,
    ):
        self._sites = set(sites)
        self.N = N
        self.domain = domain
        self.settings = settings or SolverSettings()
        self.stale_events = stale_events
        self._potential = initial
        self._stale = initial is None
        self._since = 0
        self.recompute_count = 0
        self.recompute_seconds = 0.0

    @property
    def sites(self) -> frozenset[Site]:
        return frozenset(self._sites)

    def contains_xy(self, x1: int, x2: int) -> bool:
        return x2 == 0 or Site(x1, x2) in self._sites

    def add(self, s: Site) -> None:
        self._sites.add(s)
        self._stale = True

    def note_event(self) -> None:
        self._since += 1

    def refresh(self) -> None:
        t0 = time.perf_counter()
        warm = self._potential.values if self._potential is not None else None
        B = AggregateSet(frozenset(self._sites))
        self._potential = solve_potential(B, self.N, self.domain, self.settings, initial=warm)
        self._stale = False
        self._since = 0
        self.recompute_count += 1
        self.recompute_seconds += time.perf_counter() - t0

    def _ensure(self) -> Potential:
        if self._potential is None or (self._stale and self._since >= self.stale_events):
            self.refresh()
        return self._potential

    def value(self, e: DirectedEdge) -> float:
        if not self.contains_xy(e.tail.x1, e.tail.x2) or self.contains_xy(e.head.x1, e.head.x2):
            return 0.0
        return self._ensure().at(e.head.x1, e.head.x2) / 4.0

    def potential(self) -> Potential:
        if self._stale:
            self.refresh()
        return self._ensure()

    def field(self) -> HarmonicField:
        p = self.potential()
        return field_from_potential(p)
