"""Frequency-domain delay margins for the normalized laws U1 and U2.

Per eigenvalue λ of Ã the disagreement dynamics reduce to the scalar loop

    G(s) = -λ e^{-s tau2} / (s^2 + (s + 1) e^{-s tau1})        (U1)
    G(s) = -λ (s + 1) e^{-s tau2} / (s^2 + (s + 1) e^{-s tau1}) (U2)

and stability holds iff every crossing of the negative real axis has
``|G| < 1``. The open-loop denominator is itself stable only for
``tau1 < TAU1_OPEN_LOOP``; beyond it the test is reported unstable.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import DelayOrderViolation, NoCrossing, UnsupportedLaw
from .plant import ControlLaw, DelayPair
from .topology import Topology, normalize

__all__ = [
    "LoopTransfer",
    "Crossing",
    "MarginResult",
    "RegionSweep",
    "TAU1_OPEN_LOOP",
    "gain_phase",
    "loop_response",
    "phase_crossings",
    "loop_eigenvalues",
    "is_stable",
    "max_tau2",
    "equal_delay_margin",
    "sweep_region",
    "write_locus_csv",
]

OMEGA_MAX = 100.0
N_GRID = 10_000
PHASE_TOL = 1e-10
ZERO_EIG = 1e-9

_OMEGA_C = math.sqrt((1 + math.sqrt(5)) / 2)
TAU1_OPEN_LOOP = math.atan(_OMEGA_C) / _OMEGA_C
"""Smallest input delay at which ``s^2 + (s+1)e^{-s tau1}`` gains imaginary-axis roots."""


def _check_law(law) -> ControlLaw:
    law = ControlLaw.parse(law)
    if law not in (ControlLaw.U1, ControlLaw.U2):
        raise UnsupportedLaw(
            f"frequency-domain margins are defined only for u1/u2, not {law.value}; use the LMI method"
        )
    return law


@dataclass(frozen=True)
class LoopTransfer:
    law: ControlLaw
    lam: complex
    delays: DelayPair

    def __post_init__(self):
        object.__setattr__(self, "law", _check_law(self.law))
        object.__setattr__(self, "lam", complex(self.lam))
        if abs(self.lam) < ZERO_EIG:
            raise ValueError("loop eigenvalue must be nonzero")


@dataclass(frozen=True)
class Crossing:
    lam: complex
    omega: float
    magnitude: float


@dataclass(frozen=True)
class MarginResult:
    """Outcome of :func:`is_stable`.

    ``omega_bar``/``magnitude``/``critical_lambda`` describe the crossing with
    the largest loop gain; they are ``None``/0 when nothing crosses.
    """

    stable: bool
    omega_bar: float | None
    magnitude: float
    critical_lambda: complex | None
    crossings: tuple = ()
    reason: str = ""


@dataclass
class RegionSweep:
    tau1_grid: list
    tau2_max: list
    law: ControlLaw
    topology: Topology | None = field(default=None, repr=False)

    def rows(self):
        return list(zip(self.tau1_grid, self.tau2_max))

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write("tau1,tau2_max\n")
            for t1, t2 in self.rows():
                fh.write(f"{t1:.6g},{_fmt(t2)}\n")


def _fmt(value) -> str:
    if value is None:
        return "none"
    if math.isinf(value):
        return "inf"
    return f"{value:.4f}"


def _denominator(omega, tau1):
    # D(jw) = -w^2 + (1 + jw) e^{-jw tau1}, split into real and imaginary parts
    c, s = np.cos(omega * tau1), np.sin(omega * tau1)
    return -omega**2 + c + omega * s, omega * c - s


@lru_cache(maxsize=256)
def _arg_grid(tau1: float, omega_max: float, n: int):
    w = np.linspace(omega_max / n, omega_max, n)
    re, im = _denominator(w, tau1)
    arg = np.unwrap(np.arctan2(im, re))
    w.setflags(write=False)
    arg.setflags(write=False)
    return w, arg


def _arg_denominator(omega, tau1, omega_max=OMEGA_MAX, n=N_GRID):
    """Continuous argument of D(jw), anchored at arg D(0) = 0."""
    omega = np.asarray(omega, dtype=float)
    w, arg = _arg_grid(float(tau1), float(max(omega_max, np.max(omega, initial=0.0))), int(n))
    re, im = _denominator(omega, tau1)
    raw = np.arctan2(im, re)
    ref = np.interp(omega, np.concatenate([[0.0], w]), np.concatenate([[0.0], arg]))
    return raw + 2 * np.pi * np.round((ref - raw) / (2 * np.pi))


def _magnitude(law, lam, tau1, omega):
    w = np.asarray(omega, dtype=float)
    den = np.sqrt(w**4 - 2 * w**3 * np.sin(w * tau1) + w**2 * (1 - 2 * np.cos(w * tau1)) + 1)
    mag = abs(lam) / den
    if law is ControlLaw.U2:
        mag = mag * np.sqrt(1 + w**2)
    return mag


def _phase(law, lam, tau1, tau2, omega, omega_max=OMEGA_MAX, n=N_GRID):
    w = np.asarray(omega, dtype=float)
    ph = np.angle(-complex(lam)) - w * tau2 - _arg_denominator(w, tau1, omega_max, n)
    if law is ControlLaw.U2:
        ph = ph + np.arctan(w)
    return ph


def gain_phase(loop: LoopTransfer, omega):
    """Magnitude and continuous phase of ``G(jw)`` for ``w > 0``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValueError("omega must be positive")
    t1, t2 = loop.delays.tau1, loop.delays.tau2
    mag = _magnitude(loop.law, loop.lam, t1, w)
    ph = _phase(loop.law, loop.lam, t1, t2, w)
    if w.ndim == 0:
        return float(mag), float(ph)
    return mag, ph


def loop_response(loop: LoopTransfer, omega) -> np.ndarray:
    """Direct complex evaluation of ``G(jw)``."""
    s = 1j * np.asarray(omega, dtype=float)
    t1, t2 = loop.delays.tau1, loop.delays.tau2
    num = -loop.lam * np.exp(-s * t2)
    if loop.law is ControlLaw.U2:
        num = num * (s + 1)
    return num / (s**2 + (s + 1) * np.exp(-s * t1))


def _crossings(law, lam, tau1, tau2, omega_max, n):
    w = np.linspace(omega_max / n, omega_max, n)
    ph = _phase(law, lam, tau1, tau2, w, omega_max, n)
    level = np.floor((ph + np.pi) / (2 * np.pi))
    idx = np.nonzero(np.diff(level) != 0)[0]
    if len(idx) == 0:
        return np.empty(0)
    target = -np.pi + 2 * np.pi * np.maximum(level[idx], level[idx + 1])
    lo, hi = w[idx].copy(), w[idx + 1].copy()
    flo = ph[idx] - target
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        fm = _phase(law, lam, tau1, tau2, mid, omega_max, n) - target
        same = np.sign(fm) == np.sign(flo)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
        if np.all(np.abs(fm) < PHASE_TOL) or np.all(hi - lo < 1e-15):
            break
    return 0.5 * (lo + hi)


def phase_crossings(loop: LoopTransfer, omega_max: float = OMEGA_MAX, n_grid: int = N_GRID) -> list:
    """Frequencies in ``(0, omega_max]`` where the phase equals ``-pi (mod 2 pi)``.

    Raises
    ------
    NoCrossing
        If the phase never reaches the negative real axis in the band.
    """
    t1, t2 = loop.delays.tau1, loop.delays.tau2
    w = _crossings(loop.law, loop.lam, t1, t2, omega_max, n_grid)
    if len(w) == 0:
        raise NoCrossing(f"no phase crossing below {omega_max} rad/s for lambda={loop.lam}")
    return [float(x) for x in w]


def loop_eigenvalues(topology: Topology) -> list:
    """Eigenvalues of Ã that enter the stability test.

    Zero eigenvalues are dropped, as is one copy of the consensus eigenvalue
    1: that mode is the average motion, which the disagreement dynamics
    exclude.
    """
    if topology.n == 1:
        return []
    lam = list(normalize(topology).eigenvalues)
    ones = [k for k, v in enumerate(lam) if abs(v - 1) < 1e-9]
    if ones:
        lam.pop(ones[0])
    return [complex(v) for v in lam if abs(v) >= ZERO_EIG]


def _eigen_crossings(law, lam, tau1, tau2, omega_max, n):
    out = [Crossing(lam, float(w), float(_magnitude(law, lam, tau1, w)))
           for w in _crossings(law, lam, tau1, tau2, omega_max, n)]
    if abs(lam.imag) > 0:
        # conj(lam) at +w mirrors lam at -w: cover the full frequency axis
        out += [Crossing(lam, -float(w), float(_magnitude(law, lam, tau1, w)))
                for w in _crossings(law, lam.conjugate(), tau1, tau2, omega_max, n)]
    elif lam.real > 0:
        # phase starts on the negative real axis: w -> 0+ is itself a crossing
        out.append(Crossing(lam, 0.0, float(abs(lam))))
    return out


def is_stable(topology: Topology, law, delays: DelayPair, omega_max: float = OMEGA_MAX,
              n_grid: int = N_GRID) -> MarginResult:
    """Stability of the linear element for every relevant eigenvalue of Ã."""
    law = _check_law(law)
    if not delays.ordered:
        raise DelayOrderViolation(f"tau1={delays.tau1} exceeds tau2={delays.tau2}")
    eigs = loop_eigenvalues(topology)
    if not eigs:
        return MarginResult(True, None, 0.0, None, (), "no nonzero disagreement eigenvalue")
    if delays.tau1 >= TAU1_OPEN_LOOP:
        return MarginResult(False, None, math.inf, None, (),
                            f"open-loop denominator unstable for tau1 >= {TAU1_OPEN_LOOP:.6f}")
    crossings = []
    for lam in eigs:
        crossings += _eigen_crossings(law, lam, delays.tau1, delays.tau2, omega_max, n_grid)
    if not crossings:
        return MarginResult(True, None, 0.0, None, (), "no phase crossing")
    worst = max(crossings, key=lambda c: c.magnitude)
    stable = worst.magnitude < 1.0
    return MarginResult(stable, abs(worst.omega), worst.magnitude, worst.lam, tuple(crossings),
                        "" if stable else "crossing with |G| >= 1")


def _bisect(pred, lo, hi, tol):
    # pred(lo) is True, pred(hi) is False
    while hi - lo > tol / 2:
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_tau2(topology: Topology, law, tau1: float, *, scan_step: float = 0.01,
             tol: float = 1e-4, tau2_cap: float = 20.0) -> float | None:
    """Largest stable ``tau2 >= tau1``; ``None`` if ``tau2 = tau1`` is already unstable.

    Returns ``inf`` when stability persists up to ``tau2_cap``.
    """
    law = _check_law(law)

    def ok(t2):
        return is_stable(topology, law, DelayPair(tau1, t2)).stable

    if not ok(tau1):
        return None
    t = tau1
    while True:
        nxt = t + scan_step
        if nxt > tau2_cap:
            return math.inf
        if not ok(nxt):
            return float(_bisect(ok, t, nxt, tol))
        t = nxt


def equal_delay_margin(topology: Topology, law, *, scan_step: float = 0.01,
                       tol: float = 1e-4) -> float:
    """Largest ``tau`` with ``tau1 = tau2 = tau`` stable; ``inf`` if unbounded."""
    law = _check_law(law)
    if not loop_eigenvalues(topology):
        return math.inf

    def ok(t):
        return is_stable(topology, law, DelayPair(t, t)).stable

    t = 0.0
    if not ok(t):
        return 0.0
    while True:
        nxt = t + scan_step
        if not ok(nxt):
            return float(_bisect(ok, t, nxt, tol))
        t = nxt


def sweep_region(topology: Topology, law, tau1_grid) -> RegionSweep:
    """``max_tau2`` over an ascending grid of input delays."""
    law = _check_law(law)
    grid = [float(t) for t in tau1_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("tau1 grid must be sorted ascending")
    values = [max_tau2(topology, law, t) for t in grid]
    finite = [v for v in values if v is not None]
    if any(b > a + 1e-9 for a, b in zip(finite, finite[1:])):
        warnings.warn("max_tau2 is not monotone in tau1 on this grid", RuntimeWarning, stacklevel=2)
    return RegionSweep(grid, values, law, topology)


def write_locus_csv(loop: LoopTransfer, path, omega_min: float = 0.05,
                    omega_max: float = 10.0, n: int = 2000) -> None:
    """Export the Nyquist locus as ``omega,re,im``."""
    w = np.geomspace(omega_min, omega_max, n)
    g = loop_response(loop, w)
    with Path(path).open("w", newline="") as fh:
        fh.write("omega,re,im\n")
        for wi, gi in zip(w, g):
            fh.write(f"{wi:.9g},{gi.real:.9g},{gi.imag:.9g}\n")
