"""Converting human submissions into target-conformant quantile sets.

Two submission shapes are supported. One platform elicits a predictive
density as a mixture of up to five logistic distributions over a bounded
question range; the mixture CDF is truncated to the range, renormalized,
and inverted by bisection at each required level. The other elicits
probabilities assigned to intervals partitioning the question range; mass
is uniform within each interval, so the CDF is piecewise linear and
quantiles follow by interpolation, taking the leftmost point on flat
segments. Forecasters may revise freely before a deadline;
:func:`select_cutoff_submission` picks the operative revision.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateDistributionError

__all__ = [
    "LogisticComponent",
    "LogisticMixture",
    "IntervalHistogram",
    "Submission",
    "logistic_mixture_to_quantiles",
    "interval_histogram_to_quantiles",
    "select_cutoff_submission",
]

MAX_COMPONENTS = 5
_WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class LogisticComponent:
    location: float
    scale: float
    weight: float

    def __post_init__(self):
        if self.scale <= 0.0:
            raise ValueError("logistic scale must be positive")
        if not 0.0 <= self.weight <= 1.0 + _WEIGHT_TOL:
            raise ValueError("component weight must lie in [0, 1]")


@dataclass(frozen=True)
class LogisticMixture:
    """Mixture of 1..5 logistic components on a bounded question range."""

    components: tuple
    bounds: tuple

    def __init__(self, components, bounds):
        comps = tuple(
            c if isinstance(c, LogisticComponent) else LogisticComponent(*c)
            for c in components
        )
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "bounds", (float(bounds[0]), float(bounds[1])))
        if not 1 <= len(comps) <= MAX_COMPONENTS:
            raise ValueError(f"mixture needs 1..{MAX_COMPONENTS} components")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"component weights must sum to 1, got {total}")
        if not self.bounds[0] < self.bounds[1]:
            raise ValueError("bounds must satisfy lower < upper")

    def cdf(self, x) -> np.ndarray:
        """Untruncated mixture CDF, vectorized over x."""
        x = np.asarray(x, dtype=float)
        acc = np.zeros_like(x)
        for c in self.components:
            z = (x - c.location) / c.scale
            # Stable sigmoid: never exponentiate a positive argument.
            pos = z >= 0.0
            ez = np.exp(np.where(pos, -z, z))
            acc = acc + c.weight * np.where(pos, 1.0 / (1.0 + ez), ez / (1.0 + ez))
        return acc


@dataclass(frozen=True)
class IntervalHistogram:
    """Probabilities on n intervals partitioning the question range."""

    breakpoints: tuple
    probabilities: tuple

    def __init__(self, breakpoints, probabilities):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in breakpoints))
        object.__setattr__(self, "probabilities", tuple(float(p) for p in probabilities))
        bp, pr = self.breakpoints, self.probabilities
        if len(bp) != len(pr) + 1 or len(pr) < 1:
            raise ValueError("need n+1 breakpoints for n probabilities")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly ascending")
        if any(p < 0.0 for p in pr):
            raise ValueError("probabilities must be non-negative")
        if abs(sum(pr) - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"probabilities must sum to 1, got {sum(pr)}")


@dataclass(frozen=True)
class Submission:
    """One forecaster's (possibly revised) distribution for one target."""

    forecaster_id: str
    target: object
    distribution: object
    submitted_at: dt.datetime


def logistic_mixture_to_quantiles(mixture: LogisticMixture, levels) -> np.ndarray:
    """Quantiles of the range-truncated mixture at each required level.

    Bisection runs to an absolute x tolerance of 1e-9 * (upper - lower);
    the returned vector is clamped non-decreasing.
    """
    lower, upper = mixture.bounds
    f_lo = float(mixture.cdf(lower))
    f_hi = float(mixture.cdf(upper))
    mass = f_hi - f_lo
    if mass <= 1e-12:
        raise DegenerateDistributionError(
            f"mixture carries no mass inside bounds [{lower}, {upper}]"
        )
    levels = np.asarray(list(levels), dtype=float)
    targets_c = f_lo + levels * mass
    lo = np.full(levels.shape, lower)
    hi = np.full(levels.shape, upper)
    xtol = 1e-9 * (upper - lower)
    while float(np.max(hi - lo)) > xtol:
        mid = 0.5 * (lo + hi)
        below = mixture.cdf(mid) < targets_c
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    return np.maximum.accumulate(out)


def interval_histogram_to_quantiles(hist: IntervalHistogram, levels) -> np.ndarray:
    """Quantiles of the piecewise-linear CDF at each required level.

    Mass is uniform within each interval. On flat (zero-probability)
    segments the leftmost point attaining the level is returned.
    """
    bp = np.asarray(hist.breakpoints)
    knots = np.concatenate([[0.0], np.cumsum(hist.probabilities)])
    knots[-1] = 1.0  # guard the 1e-9 sum slack
    levels = np.asarray(list(levels), dtype=float)
    out = np.empty(levels.shape)
    for i, p in enumerate(levels):
        j = int(np.searchsorted(knots, p, side="left"))
        # knots[0] = 0 < p, so j >= 1 and the (j-1, j) segment is rising.
        rise = knots[j] - knots[j - 1]
        frac = (p - knots[j - 1]) / rise
        out[i] = bp[j - 1] + frac * (bp[j] - bp[j - 1])
    return np.maximum.accumulate(out)


def select_cutoff_submission(
    stream: Sequence[Submission], cutoff: dt.datetime
) -> "Submission | None":
    """Latest submission at or before the cutoff; None when there is none.

    The stream must already be sorted by submission time (strictly
    increasing, one stream per forecaster and target). The boundary is
    inclusive: a submission exactly at the cutoff counts.
    """
    previous = None
    for sub in stream:
        if previous is not None and sub.submitted_at <= previous:
            raise ValueError("submission stream must be strictly ordered by time")
        previous = sub.submitted_at
    chosen = None
    for sub in stream:
        if sub.submitted_at <= cutoff:
            chosen = sub
        else:
            break
    return chosen
