"""Describing function of the saturation and harmonic-balance limit-cycle prediction.

For a sinusoid of amplitude ``A >= delta`` entering ``sat`` the fundamental
gain is

    N(A) = (2/pi) [asin(r) + r sqrt(1 - r^2)],   r = delta / A,

which decreases from 1 to 0, so ``-1/N(A)`` sweeps ``(-inf, -1]``. A limit
cycle is predicted when the linear element's locus reaches that segment, i.e.
``|G(j w)| >= 1`` at a phase crossing ``w``; its amplitude solves
``N(A) |G(j w)| = 1``. The amplitude is that of the velocity signal entering
the saturation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import AmplitudeBelowDelta, TargetOutOfRange
from .nyquist import MarginResult

__all__ = [
    "DescribingFunction",
    "LimitCyclePrediction",
    "evaluate_N",
    "invert_N",
    "predict_limit_cycle",
]


@dataclass(frozen=True)
class DescribingFunction:
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("saturation bound must be positive")


@dataclass(frozen=True)
class LimitCyclePrediction:
    exists: bool
    amplitude: float | None
    frequency: float | None
    magnitude_at_crossing: float


def evaluate_N(A: float, df: DescribingFunction) -> float:
    """Fundamental-harmonic gain of the saturation at amplitude ``A``.

    Raises
    ------
    AmplitudeBelowDelta
        If ``A < delta``; the element is then linear and ``N = 1``.
    """
    if A < df.delta:
        raise AmplitudeBelowDelta(f"A={A} is below delta={df.delta}")
    r = df.delta / A
    return (2.0 / math.pi) * (math.asin(r) + r * math.sqrt(max(0.0, 1.0 - r * r)))


def invert_N(target: float, df: DescribingFunction, tol: float = 1e-12) -> float:
    """Amplitude ``A >= delta`` with ``N(A) = target``, by bisection."""
    if not 0 < target <= 1:
        raise TargetOutOfRange(f"target {target} outside (0, 1]")
    if target == 1:
        return df.delta
    lo, hi = df.delta, 2 * df.delta
    while evaluate_N(hi, df) > target:
        lo, hi = hi, 2 * hi
    # relative-width bisection; N is strictly decreasing
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if evaluate_N(mid, df) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def predict_limit_cycle(margin: MarginResult, df: DescribingFunction) -> LimitCyclePrediction:
    """Harmonic balance at the worst phase crossing of ``margin``."""
    mag = margin.magnitude
    if margin.omega_bar is None or not mag >= 1.0 or math.isinf(mag):
        return LimitCyclePrediction(False, None, None, mag)
    return LimitCyclePrediction(True, invert_N(1.0 / mag, df), margin.omega_bar, mag)
