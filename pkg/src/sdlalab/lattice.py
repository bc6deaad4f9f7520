"""
lattice.py

Geometry of the upper half-plane lattice H = {(x1, x2) : x2 >= 0} and the
simple-random-walk primitives every other module is built on.

Lines L_n are never materialized: a line is a height plus predicates.
Absorbing sets and counting sets are passed to walks as predicates over
raw coordinates so that the inner loop stays on plain integers.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np


# -----------------------------
# Errors
# -----------------------------

class SdlaError(Exception):
    """Base class for every error raised by sdlalab."""


class LatticeError(SdlaError):
    """Bad geometry, or a walk proposal below L_0."""


class PreconditionError(SdlaError):
    """An operation was called outside its contract."""


# -----------------------------
# Sites, edges, regions
# -----------------------------

# Direction ids double as the last component of per-edge stream keys.
DIRECTIONS: tuple[tuple[int, int], ...] = ((1, 0), (-1, 0), (0, 1), (0, -1))

DEFAULT_STEP_BUDGET = 10_000_000

SitePredicate = Callable[[int, int], bool]
HeightPredicate = Callable[[int], bool]


@dataclass(frozen=True, order=True)
class Site:
    x1: int
    x2: int

    def __post_init__(self) -> None:
        if self.x2 < 0:
            raise LatticeError(f"site ({self.x1}, {self.x2}) lies below L_0")

    @property
    def norm(self) -> int:
        """l1 norm."""
        return abs(self.x1) + abs(self.x2)

    @property
    def euclidean(self) -> float:
        return math.hypot(self.x1, self.x2)

    def shifted(self, dx: int, dy: int = 0) -> Site:
        return Site(self.x1 + dx, self.x2 + dy)

    def mirrored(self) -> Site:
        return Site(-self.x1, self.x2)

    def as_list(self) -> list[int]:
        return [self.x1, self.x2]


def site_key(s: Site) -> tuple[int, int]:
    """Canonical serialization order: by height, then horizontal position."""
    return (s.x2, s.x1)


@dataclass(frozen=True, order=True)
class DirectedEdge:
    tail: Site
    head: Site

    def __post_init__(self) -> None:
        if abs(self.tail.x1 - self.head.x1) + abs(self.tail.x2 - self.head.x2) != 1:
            raise LatticeError(
                f"edge {self.tail.as_list()} -> {self.head.as_list()} is not nearest-neighbor"
            )

    @property
    def direction(self) -> int:
        return DIRECTIONS.index((self.head.x1 - self.tail.x1, self.head.x2 - self.tail.x2))

    def as_list(self) -> list[list[int]]:
        return [self.tail.as_list(), self.head.as_list()]

    def __str__(self) -> str:
        return f"({self.tail.x1},{self.tail.x2})->({self.head.x1},{self.head.x2})"


def neighbors(s: Site) -> tuple[Site, ...]:
    """Nearest neighbors of s inside H (a floor site has three)."""
    return tuple(
        Site(s.x1 + dx, s.x2 + dy) for dx, dy in DIRECTIONS if s.x2 + dy >= 0
    )


def out_edges(s: Site) -> tuple[DirectedEdge, ...]:
    return tuple(DirectedEdge(s, y) for y in neighbors(s))


def log_height(n: int) -> int:
    """ceil(ln n), at least 2."""
    if n < 1:
        raise PreconditionError(f"segment half-width must be >= 1, got {n}")
    return max(2, math.ceil(math.log(n)))


def segment(n: int, center: int = 0) -> frozenset[Site]:
    """The floor segment [center - n, center + n] x {0}."""
    return frozenset(Site(x, 0) for x in range(center - n, center + n + 1))


@dataclass(frozen=True)
class BoxRegion:
    x_min: int
    x_max: int
    y_min: int
    y_max: int

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise LatticeError(f"empty box {self}")
        if self.y_min < 0:
            raise LatticeError(f"box {self} reaches below L_0")

    @classmethod
    def truncation_box(cls, n: int, center: int = 0) -> BoxRegion:
        """[-n - L, n + L] x [0, L] with L = ceil(ln n), shifted by center."""
        L = log_height(n)
        return cls(center - n - L, center + n + L, 0, L)

    @classmethod
    def parse(cls, text: str) -> BoxRegion:
        """Parse 'x_min,x_max,y_min,y_max'."""
        try:
            parts = [int(p) for p in text.split(",")]
        except ValueError:
            raise PreconditionError(f"bad box {text!r}: expected four integers") from None
        if len(parts) != 4:
            raise PreconditionError(f"bad box {text!r}: expected four integers")
        return cls(*parts)

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    def contains(self, s: Site) -> bool:
        return self.contains_xy(s.x1, s.x2)

    def contains_xy(self, x1: int, x2: int) -> bool:
        return self.x_min <= x1 <= self.x_max and self.y_min <= x2 <= self.y_max

    def wrap(self, x1: int) -> int:
        """Periodic image of a horizontal coordinate."""
        return self.x_min + (x1 - self.x_min) % self.width

    def widened(self, factor: float = 2.0) -> BoxRegion:
        """Same height, horizontal extent scaled by factor about the center."""
        extra = math.ceil(self.width * (factor - 1.0) / 2.0)
        return BoxRegion(self.x_min - extra, self.x_max + extra, self.y_min, self.y_max)

    def expanded(self, margin: int, y_max: Optional[int] = None) -> BoxRegion:
        return BoxRegion(
            self.x_min - margin,
            self.x_max + margin,
            self.y_min,
            self.y_max if y_max is None else y_max,
        )

    def intersects(self, other: BoxRegion) -> bool:
        return not (
            other.x_max < self.x_min
            or other.x_min > self.x_max
            or other.y_max < self.y_min
            or other.y_min > self.y_max
        )

    def sites(self) -> Iterator[Site]:
        for x2 in range(self.y_min, self.y_max + 1):
            for x1 in range(self.x_min, self.x_max + 1):
                yield Site(x1, x2)

    def as_list(self) -> list[int]:
        return [self.x_min, self.x_max, self.y_min, self.y_max]


# -----------------------------
# Return kernel above the top row
# -----------------------------

def _return_symbol(theta: np.ndarray) -> np.ndarray:
    """Fourier symbol of the offset law of a walk that steps up from a line
    and first comes back to it."""
    a = 2.0 - np.cos(theta)
    return a - np.sqrt(a * a - 1.0)


class ReturnKernel:
    """
    Law P(d) of the horizontal offset d at which a walk stepping up from a
    horizontal line first returns to that line.

    With periodic sides the law is wrapped onto the row (offsets 0..W-1,
    circular). With absorbing sides it is truncated to |d| < W; whatever is
    left over leaves the row and counts as lost.
    """

    def __init__(self, width: int, periodic: bool):
        if width < 1:
            raise LatticeError(f"kernel width must be >= 1, got {width}")
        self.width = width
        self.periodic = periodic
        if periodic:
            self.symbol = _return_symbol(2.0 * np.pi * np.arange(width) / width)
            weights = np.fft.ifft(self.symbol).real
            self.offsets = np.arange(width)
        else:
            m = 4096
            while m < 64 * width:
                m *= 2
            full = np.fft.ifft(_return_symbol(2.0 * np.pi * np.arange(m) / m)).real
            self.symbol = None
            weights = np.concatenate([full[m - width + 1:], full[:width]])
            self.offsets = np.arange(-(width - 1), width)
        self.weights = np.clip(weights, 0.0, None)
        self._cdf = np.cumsum(self.weights)

    @property
    def self_weight(self) -> float:
        """P(0): mass returning to the column it left from."""
        if self.periodic:
            return float(self.weights[0])
        return float(self.weights[self.width - 1])

    @property
    def mass(self) -> float:
        return float(self._cdf[-1])

    def convolve(self, row: np.ndarray) -> np.ndarray:
        """out[i] = sum_j P(j - i) row[j] over the row."""
        if self.periodic:
            return np.fft.ifft(np.fft.fft(row) * self.symbol).real
        from scipy.signal import fftconvolve

        full = fftconvolve(row, self.weights, mode="full")
        return full[self.width - 1: 2 * self.width - 1]

    def in_row_mass(self) -> np.ndarray:
        """For each column, the kernel mass that lands back inside the row."""
        if self.periodic:
            return np.full(self.width, self.mass)
        return self.convolve(np.ones(self.width))

    def sample_offset(self, rng: np.random.Generator) -> Optional[int]:
        """Draw an offset, or None when the return lands outside the kernel support."""
        u = rng.random()
        idx = int(np.searchsorted(self._cdf, u, side="right"))
        if idx >= len(self.offsets):
            if self.periodic:
                idx = len(self.offsets) - 1
            else:
                return None
        return int(self.offsets[idx])


@functools.lru_cache(maxsize=64)
def return_kernel(width: int, periodic: bool) -> ReturnKernel:
    return ReturnKernel(width, periodic)


# -----------------------------
# Walks
# -----------------------------

class WalkStatus(enum.Enum):
    ABSORBED = "absorbed"
    LOST = "lost"
    BUDGET_EXHAUSTED = "budget-exhausted"


@dataclass(frozen=True)
class WalkOutcome:
    status: WalkStatus
    hit_site: Optional[Site]
    previous_site: Optional[Site]
    steps: int
    visits_counted: int = 0

    @property
    def absorbed(self) -> bool:
        return self.status is WalkStatus.ABSORBED


_CHUNK = 4096


def run_walk(
    start: Site,
    absorbing: SitePredicate,
    domain: BoxRegion,
    counting: Optional[HeightPredicate],
    rng: np.random.Generator,
    *,
    ceiling: Optional[ReturnKernel] = None,
    periodic: bool = False,
    include_start: bool = True,
    budget: int = DEFAULT_STEP_BUDGET,
) -> WalkOutcome:
    """
    Simple random walk from start until it enters the absorbing set.

    include_start=True is the hitting time that allows n = 0; False asks for
    the first visit at n >= 1. Leaving the domain through a side (absorbing
    sides) or through the top (no ceiling kernel) ends the walk as LOST. With
    a ceiling kernel, a step above the top row is replaced by its exact
    return to the top row. When counting is given, visits to heights
    satisfying it are counted strictly before absorption, the start included.
    """
    if not domain.contains(start):
        raise PreconditionError(f"walk start {start.as_list()} is outside {domain.as_list()}")
    if ceiling is not None and ceiling.width != domain.width:
        raise PreconditionError("ceiling kernel width does not match the domain")

    x, y = start.x1, start.x2
    if include_start and absorbing(x, y):
        return WalkOutcome(WalkStatus.ABSORBED, start, None, 0, 0)

    visits = 1 if counting is not None and counting(y) else 0
    x_min, x_max, y_top = domain.x_min, domain.x_max, domain.y_max
    width = domain.width
    dirs = rng.integers(0, 4, size=_CHUNK)
    k = 0
    steps = 0
    while steps < budget:
        if k == _CHUNK:
            dirs = rng.integers(0, 4, size=_CHUNK)
            k = 0
        dx, dy = DIRECTIONS[dirs[k]]
        k += 1
        steps += 1
        nx, ny = x + dx, y + dy
        if ny < 0:
            raise LatticeError(
                f"walk proposed ({nx}, {ny}) below L_0; the absorbing set must contain the floor"
            )
        if ny > y_top:
            if ceiling is None:
                return WalkOutcome(WalkStatus.LOST, None, Site(x, y), steps, visits)
            offset = ceiling.sample_offset(rng)
            if offset is None:
                return WalkOutcome(WalkStatus.LOST, None, Site(x, y), steps, visits)
            nx, ny = x + offset, y_top
        if periodic:
            nx = x_min + (nx - x_min) % width
        elif nx < x_min or nx > x_max:
            return WalkOutcome(WalkStatus.LOST, Site(nx, ny), Site(x, y), steps, visits)
        if absorbing(nx, ny):
            return WalkOutcome(WalkStatus.ABSORBED, Site(nx, ny), Site(x, y), steps, visits)
        x, y = nx, ny
        if counting is not None and counting(y):
            visits += 1
    return WalkOutcome(WalkStatus.BUDGET_EXHAUSTED, None, Site(x, y), steps, visits)
