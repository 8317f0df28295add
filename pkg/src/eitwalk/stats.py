"""Moment accumulation, EOC fits and the variance-times-time efficiency measure."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunningMoments:
    n: int = 0
    mean: float = 0.0
    m2: float = 0.0  # sum of squared deviations

    @classmethod
    def of(cls, x) -> "RunningMoments":
        x = np.asarray(x, dtype=float).ravel()
        if x.size == 0:
            return cls()
        mu = float(np.mean(x))
        return cls(int(x.size), mu, float(np.sum((x - mu) ** 2)))

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else 0.0

    def push(self, x: float) -> "RunningMoments":
        return merge(self, RunningMoments(1, float(x), 0.0))


def merge(a: RunningMoments, b: RunningMoments) -> RunningMoments:
    """Pairwise (Chan et al.) combination of two moment summaries."""
    if a.n == 0:
        return b
    if b.n == 0:
        return a
    n = a.n + b.n
    d = b.mean - a.mean
    mean = a.mean + d * b.n / n
    m2 = a.m2 + b.m2 + d * d * a.n * b.n / n
    return RunningMoments(n, mean, m2)


def merge_all(parts: Iterable[RunningMoments]) -> RunningMoments:
    out = RunningMoments()
    for p in parts:
        out = merge(out, p)
    return out


@dataclass(frozen=True)
class EocFit:
    slope: float
    intercept: float
    points: list = field(default_factory=list)  # (log h, log |bias|)
    residual: float = 0.0


def fit_eoc(pairs: Sequence[tuple[float, float]]) -> EocFit:
    """Least-squares slope of log|bias| against log h; zero biases are dropped."""
    pts = []
    for h, b in pairs:
        if b == 0 or not math.isfinite(b):
            log.warning("dropping h=%g with bias %r from the EOC fit", h, b)
            continue
        pts.append((math.log(h), math.log(abs(b))))
    if len(pts) < 2:
        raise ValueError("need at least two nonzero biases for an EOC fit")
    X = np.array([[1.0, p[0]] for p in pts])
    y = np.array([p[1] for p in pts])
    coef, res, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = float(np.sqrt(res[0])) if res.size else 0.0
    return EocFit(float(coef[1]), float(coef[0]), pts, r)


@dataclass(frozen=True)
class EfficiencyRecord:
    variance: float
    wall_time: float
    C: float


def efficiency(m: RunningMoments, wall_time: float) -> EfficiencyRecord:
    if m.n < 2:
        raise ValueError("efficiency needs at least two samples")
    v = m.variance
    return EfficiencyRecord(v, wall_time, v * wall_time)
