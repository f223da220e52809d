"""Merge-safe accumulators and the small estimators used by the Monte-Carlo checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class RunningStats:
    """Count/mean/M2 accumulator; ``merge`` is Chan's pairwise update."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.count += 1
        d = x - self.mean
        self.mean += d / self.count
        self.m2 += d * (x - self.mean)

    def extend(self, xs) -> "RunningStats":
        for x in np.asarray(xs, dtype=float).ravel():
            self.push(float(x))
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return RunningStats(self.count, self.mean, self.m2)
        if self.count == 0:
            return RunningStats(other.count, other.mean, other.m2)
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * other.count / n
        m2 = self.m2 + other.m2 + d * d * self.count * other.count / n
        return RunningStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")

    @property
    def se(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count > 1 else float("nan")


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x)))


def variance_se(x, mean: float | None = None) -> tuple[float, float]:
    """Sample variance and its delta-method standard error.

    With ``mean`` given the second moment about that mean is used (e.g. a
    field known to be centred).
    """
    x = np.asarray(x, dtype=float)
    c = x - (x.mean() if mean is None else mean)
    sq = c * c
    k = len(x)
    v = sq.sum() / (k - 1 if mean is None else k)
    return float(v), float(sq.std(ddof=1) / math.sqrt(k))


def fit_exponent(xs, ys) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``log x`` and its standard error."""
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, *_ = np.linalg.lstsq(A, ly, rcond=None)
    if len(lx) > 2:
        resid = ly - A @ coef
        s2 = resid @ resid / (len(lx) - 2)
        se = math.sqrt(s2 / np.sum((lx - lx.mean()) ** 2))
    else:
        se = 0.0
    return float(coef[0]), se


def z_score(value: float, target: float, se: float) -> float:
    if se == 0:
        return 0.0 if value == target else math.inf
    return (value - target) / se
