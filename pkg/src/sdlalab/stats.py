"""
stats.py

Statistics policy for the experiments: Wilson intervals for proportions,
normal two-sample comparisons, chi-square homogeneity, log-log slopes, and
trend verdicts that only pass or fail on separated 95% intervals.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class Interval:
    estimate: float
    lo: float
    hi: float

    def overlaps(self, other: Interval) -> bool:
        return not (self.hi < other.lo or other.hi < self.lo)


def z_quantile(confidence: float = 0.95) -> float:
    return float(sps.norm.ppf(0.5 + confidence / 2.0))


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> Interval:
    if trials <= 0:
        return Interval(math.nan, 0.0, 1.0)
    z = z_quantile(confidence)
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return Interval(p, max(0.0, centre - half), min(1.0, centre + half))


def mean_interval(values: Sequence[float], confidence: float = 0.95) -> tuple[Interval, float]:
    """Normal interval for a mean, and the standard error."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return Interval(math.nan, math.nan, math.nan), math.nan
    m = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else math.inf
    z = z_quantile(confidence)
    return Interval(m, m - z * se, m + z * se), se


def two_proportion_z(k1: int, n1: int, k2: int, n2: int) -> tuple[float, float]:
    """(z, pooled standard error) for p1 - p2. Equal estimates give z = 0."""
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if p1 == p2:
        return 0.0, se
    if se == 0.0:
        return math.inf if p1 > p2 else -math.inf, se
    return (p1 - p2) / se, se


def chi_square_homogeneity(a: Mapping, b: Mapping) -> float:
    """p-value of a chi-square test that two categorical samples share one law.

    Categories seen fewer than 5 times in total are pooled into one bin.
    """
    keys = sorted(set(a) | set(b), key=repr)
    rare = [k for k in keys if a.get(k, 0) + b.get(k, 0) < 5]
    common = [k for k in keys if k not in rare]
    row_a = [a.get(k, 0) for k in common]
    row_b = [b.get(k, 0) for k in common]
    if rare:
        row_a.append(sum(a.get(k, 0) for k in rare))
        row_b.append(sum(b.get(k, 0) for k in rare))
    table = np.array([row_a, row_b])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 1.0
    _, p, _, _ = sps.chi2_contingency(table)
    return float(p)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of log y on log x over the positive points."""
    pts = [(x, y) for x, y in zip(xs, ys) if x > 0 and y > 0]
    if len(pts) < 2:
        return math.nan
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)


def correlation_interval(x: Sequence[float], y: Sequence[float], confidence: float = 0.95) -> Interval:
    """Pearson correlation with a Fisher-z interval; nan when either side is constant."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    n = xa.size
    if n < 4 or xa.std() == 0.0 or ya.std() == 0.0:
        return Interval(math.nan, -1.0, 1.0)
    r = float(np.corrcoef(xa, ya)[0, 1])
    r = max(-1.0, min(1.0, r))
    if abs(r) >= 1.0:
        return Interval(r, r, r)
    z = math.atanh(r)
    half = z_quantile(confidence) / math.sqrt(n - 3)
    return Interval(r, math.tanh(z - half), math.tanh(z + half))


def non_increasing_verdict(intervals: Sequence[Interval], require_decrease: bool = True) -> Verdict:
    """
    FAIL when a later interval lies wholly above an earlier one. Otherwise
    PASS when the last interval lies wholly below the first (or when no
    decrease is required), and INCONCLUSIVE if not.
    """
    usable = [iv for iv in intervals if not math.isnan(iv.estimate)]
    if len(usable) < 2:
        return Verdict.INCONCLUSIVE
    for i, a in enumerate(usable):
        for b in usable[i + 1:]:
            if b.lo > a.hi:
                return Verdict.FAIL
    if not require_decrease:
        return Verdict.PASS
    if usable[-1].hi < usable[0].lo:
        return Verdict.PASS
    return Verdict.INCONCLUSIVE


def combine(verdicts: Sequence[Verdict]) -> Verdict:
    if any(v is Verdict.FAIL for v in verdicts):
        return Verdict.FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return Verdict.INCONCLUSIVE
    return Verdict.PASS
