"""Fixed-step simulation of the saturated delayed network and verdict detection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import NonFiniteState, WindowTooLong
from .plant import ControlLaw, DelayPair, Saturation, disagreement, stack_system
from .topology import Topology

__all__ = [
    "SimConfig",
    "Trajectory",
    "Verdict",
    "simulate",
    "analyze",
    "run",
    "delay_offsets",
]

STATE_LIMIT = 1e12
DIVERGENCE_FACTOR = 1e6
_SNAP = 1e-9


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``velocity_tap`` selects what the control laws read as a velocity:
    ``"internal"`` uses the integrator state vh, ``"saturated"`` uses sat(vh).
    ``method`` is ``"euler"`` (explicit, the default) or ``"heun"``.
    Only every ``record_every``-th step is stored.
    """

    initial_positions: tuple
    horizon: float
    step: float = 0.01
    initial_velocities: tuple | None = None
    delays: DelayPair = field(default_factory=DelayPair)
    law: ControlLaw = ControlLaw.U1
    saturation: Saturation = field(default_factory=Saturation)
    extra_link_delay: float = 0.0
    velocity_tap: str = "internal"
    method: str = "euler"
    record_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "law", ControlLaw.parse(self.law))
        object.__setattr__(self, "initial_positions", tuple(float(v) for v in self.initial_positions))
        if self.initial_velocities is not None:
            object.__setattr__(
                self, "initial_velocities", tuple(float(v) for v in self.initial_velocities)
            )
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.horizon >= self.step:
            raise ValueError("horizon must be at least one step")
        if self.extra_link_delay < 0:
            raise ValueError("extra_link_delay must be nonnegative")
        if self.velocity_tap not in ("internal", "saturated"):
            raise ValueError(f"velocity_tap must be 'internal' or 'saturated', got {self.velocity_tap!r}")
        if self.method not in ("euler", "heun"):
            raise ValueError(f"method must be 'euler' or 'heun', got {self.method!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.step))

    def velocities0(self, n: int) -> np.ndarray:
        if self.initial_velocities is None:
            return np.zeros(n)
        return np.asarray(self.initial_velocities, dtype=float)


@dataclass
class Trajectory:
    """Sampled states ``X = (x, vh)`` with the disagreement norm and controls."""

    times: np.ndarray
    states: np.ndarray
    psi_norm: np.ndarray
    controls: np.ndarray
    escaped_at: float | None = None

    def __post_init__(self):
        m = len(self.times)
        if not (len(self.states) == len(self.psi_norm) == len(self.controls) == m):
            raise ValueError("trajectory sequences must share length")

    @classmethod
    def from_states(cls, times, states, controls=None, escaped_at=None) -> "Trajectory":
        states = np.asarray(states, dtype=float)
        times = np.asarray(times, dtype=float)
        if controls is None:
            controls = np.zeros((len(times), states.shape[1] // 2))
        psi = np.linalg.norm(disagreement(states), axis=1)
        return cls(times, states, psi, np.asarray(controls, dtype=float), escaped_at)

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, : self.n]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, self.n :]

    def header(self) -> list[str]:
        n = self.n
        return ["t"] + [f"x{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)] + ["psi_norm"]

    def to_csv(self, path) -> None:
        """Write ``t,x1..xn,v1..vn,psi_norm`` with 9 significant digits."""
        table = np.column_stack([self.times, self.states, self.psi_norm])
        with Path(path).open("w", newline="") as fh:
            fh.write(",".join(self.header()) + "\n")
            for row in table:
                fh.write(",".join(f"{v:.9g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls.from_states(data[:, 0], data[:, 1:-1])


@dataclass(frozen=True)
class Verdict:
    """Outcome of :func:`analyze`.

    ``kind`` is one of ``Converged``, ``LimitCycle``, ``Diverged`` or
    ``Inconclusive``. ``t_settle`` is set for Converged, ``amplitude`` and
    ``period`` for LimitCycle, ``t_escape`` for Diverged.
    """

    kind: str
    final_psi: float
    amplitude: float = 0.0
    period: float | None = None
    t_settle: float | None = None
    t_escape: float | None = None

    @property
    def frequency(self) -> float | None:
        return None if not self.period else 2 * math.pi / self.period

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "final_psi": self.final_psi,
            "amplitude": self.amplitude,
            "period": self.period,
            "frequency": self.frequency,
            "t_settle": self.t_settle,
            "t_escape": self.t_escape,
        }


def delay_offsets(tau: float, step: float) -> tuple[int, float]:
    """Split ``tau / step`` into an integer lag and an interpolation fraction."""
    q = tau / step
    r = round(q)
    if abs(q - r) < _SNAP:
        return int(r), 0.0
    m = math.floor(q)
    return int(m), q - m


@numba.njit(cache=True)
def _lookup(buf, init, s, d, f, cap, out):
    # value at fractional index s - d - f, constant pre-history for indices < 0
    i0 = s - d
    i1 = i0 - 1
    n = out.shape[0]
    for a in range(n):
        y0 = buf[i0 % cap, a] if i0 >= 0 else init[a]
        if f == 0.0:
            out[a] = y0
        else:
            y1 = buf[i1 % cap, a] if i1 >= 0 else init[a]
            out[a] = (1.0 - f) * y0 + f * y1


@numba.njit(cache=True)
def _control(xb, vb, x0, v0, s, d1, f1, d2, f2, k1, k2, delta, tap_sat, cap, z1, z2, u):
    n = u.shape[0]
    _lookup(xb, x0, s, d1, f1, cap, z1[:n])
    _lookup(vb, v0, s, d1, f1, cap, z1[n:])
    _lookup(xb, x0, s, d2, f2, cap, z2[:n])
    _lookup(vb, v0, s, d2, f2, cap, z2[n:])
    if tap_sat:
        for a in range(n, 2 * n):
            z1[a] = min(max(z1[a], -delta), delta)
            z2[a] = min(max(z2[a], -delta), delta)
    terms = np.empty(4 * n)
    for i in range(n):
        m = 0
        for j in range(2 * n):
            c = k1[i, j]
            if c != 0.0:
                terms[m] = c * z1[j]
                m += 1
            c = k2[i, j]
            if c != 0.0:
                terms[m] = c * z2[j]
                m += 1
        # summing in sorted order makes the result independent of agent labels
        ordered = np.sort(terms[:m])
        acc = 0.0
        for j in range(m):
            acc += ordered[j]
        u[i] = acc


@numba.njit(cache=True)
def _integrate(x0, v0, k1, k2, d1, f1, d2, f2, h, nsteps, delta, tap_sat, heun, every, limit):
    n = x0.shape[0]
    cap = max(d1, d2) + 4
    xb = np.empty((cap, n))
    vb = np.empty((cap, n))
    xb[0] = x0
    vb[0] = v0
    nrec = nsteps // every + 1
    xs = np.empty((nrec, n))
    vs = np.empty((nrec, n))
    us = np.empty((nrec, n))
    z1 = np.empty(2 * n)
    z2 = np.empty(2 * n)
    u = np.empty(n)
    up = np.empty(n)
    xn = np.empty(n)
    vn = np.empty(n)
    escaped = -1
    rec = 0
    for k in range(nsteps + 1):
        _control(xb, vb, x0, v0, k, d1, f1, d2, f2, k1, k2, delta, tap_sat, cap, z1, z2, u)
        cur = k % cap
        if k % every == 0:
            xs[rec] = xb[cur]
            vs[rec] = vb[cur]
            us[rec] = u
            rec += 1
        if k == nsteps:
            break
        nxt = (k + 1) % cap
        for i in range(n):
            xn[i] = xb[cur, i] + h * min(max(vb[cur, i], -delta), delta)
            vn[i] = vb[cur, i] + h * u[i]
        if heun:
            xb[nxt] = xn
            vb[nxt] = vn
            _control(xb, vb, x0, v0, k + 1, d1, f1, d2, f2, k1, k2, delta, tap_sat, cap, z1, z2, up)
            for i in range(n):
                s0 = min(max(vb[cur, i], -delta), delta)
                s1 = min(max(vn[i], -delta), delta)
                xn[i] = xb[cur, i] + 0.5 * h * (s0 + s1)
                vn[i] = vb[cur, i] + 0.5 * h * (u[i] + up[i])
        bad = False
        for i in range(n):
            if not (abs(xn[i]) <= limit and abs(vn[i]) <= limit):
                bad = True
        xb[nxt] = xn
        vb[nxt] = vn
        if bad:
            escaped = k + 1
            break
    return xs[:rec], vs[:rec], us[:rec], escaped


def simulate(config: SimConfig, topology: Topology, *, on_overflow: str = "raise") -> Trajectory:
    """Integrate the closed loop over ``config.horizon``.

    Delayed samples come from a ring buffer with linear interpolation between
    grid points; for ``t <= 0`` the state is frozen at its initial value.

    Parameters
    ----------
    on_overflow : {"raise", "truncate"}
        What to do when a state leaves ``+/-1e12``: raise
        :class:`NonFiniteState` or return the trajectory up to that point with
        ``escaped_at`` set.
    """
    n = topology.n
    x0 = np.asarray(config.initial_positions, dtype=float)
    if x0.shape != (n,):
        raise ValueError(f"expected {n} initial positions, got {x0.shape[0]}")
    v0 = config.velocities0(n)
    if v0.shape != (n,):
        raise ValueError(f"expected {n} initial velocities, got {v0.shape[0]}")
    tau1 = config.delays.tau1
    tau2 = config.delays.tau2 + config.extra_link_delay
    sysm = stack_system(topology, config.law, config.delays)
    k1 = np.ascontiguousarray(sysm.a1[n:, :])
    k2 = np.ascontiguousarray(sysm.a2[n:, :])
    d1, f1 = delay_offsets(tau1, config.step)
    d2, f2 = delay_offsets(tau2, config.step)
    delta = float(config.saturation.delta)
    xs, vs, us, escaped = _integrate(
        x0, v0, k1, k2, d1, f1, d2, f2, float(config.step), config.n_steps,
        delta if math.isfinite(delta) else np.inf,
        config.velocity_tap == "saturated", config.method == "heun",
        config.record_every, STATE_LIMIT,
    )
    times = np.arange(len(xs)) * config.step * config.record_every
    escaped_at = None
    if escaped >= 0:
        escaped_at = escaped * config.step
        if on_overflow == "raise":
            raise NonFiniteState(escaped_at)
    return Trajectory.from_states(times, np.hstack([xs, vs]), us, escaped_at)


def _window(times, t_end, width):
    return (times > t_end - width - 1e-12) & (times <= t_end + 1e-12)


def _crossings(t, y):
    y = y - y.mean()
    s = np.signbit(y)
    idx = np.nonzero(s[1:] != s[:-1])[0]
    if len(idx) == 0:
        return np.empty(0)
    t0, t1, y0, y1 = t[idx], t[idx + 1], y[idx], y[idx + 1]
    return t0 - y0 * (t1 - t0) / (y1 - y0)


def analyze(trajectory: Trajectory, tol: float = 1e-2, window: float = 10.0) -> Verdict:
    """Classify a trajectory by its disagreement norm.

    * Diverged: the run overflowed, or ``||Psi||`` exceeded ``1e6`` times its
      initial value.
    * Converged: ``||Psi|| < tol`` over the whole trailing window.
    * LimitCycle: the peak-to-peak of ``||Psi||`` in the trailing window
      exceeds ``tol`` and differs by less than 10 % from the previous window,
      with at least three zero crossings of the most active mean-removed
      velocity channel (which also gives the period).
    * Inconclusive otherwise.
    """
    t = trajectory.times
    psi = trajectory.psi_norm
    final = float(psi[-1])
    if trajectory.escaped_at is not None:
        return Verdict("Diverged", final, t_escape=trajectory.escaped_at)
    ref = max(float(psi[0]), tol)
    over = np.nonzero(~(psi <= DIVERGENCE_FACTOR * ref))[0]
    if len(over):
        return Verdict("Diverged", final, t_escape=float(t[over[0]]))
    duration = t[-1] - t[0]
    if window <= 0 or window > duration + 1e-12:
        raise WindowTooLong(f"window {window} s exceeds trajectory duration {duration} s")
    last = _window(t, t[-1], window)
    if np.all(psi[last] < tol):
        above = np.nonzero(psi >= tol)[0]
        t_settle = 0.0 if len(above) == 0 else float(t[min(above[-1] + 1, len(t) - 1)])
        return Verdict("Converged", final, amplitude=float(np.ptp(psi[last])), t_settle=t_settle)
    if duration < 2 * window - 1e-12:
        return Verdict("Inconclusive", final, amplitude=float(np.ptp(psi[last])))
    prev = _window(t, t[-1] - window, window)
    p_last, p_prev = float(np.ptp(psi[last])), float(np.ptp(psi[prev]))
    vel = trajectory.velocities[last]
    ch = int(np.argmax(vel.std(axis=0)))
    amp = 0.5 * float(np.ptp(vel[:, ch]))
    if p_last > tol and abs(p_last - p_prev) < 0.1 * max(p_last, p_prev):
        cross = _crossings(t[last], vel[:, ch])
        if len(cross) >= 3:
            period = 2.0 * (cross[-1] - cross[0]) / (len(cross) - 1)
            return Verdict("LimitCycle", final, amplitude=amp, period=float(period))
    return Verdict("Inconclusive", final, amplitude=amp)


def run(config: SimConfig, topology: Topology, tol: float = 1e-2, window: float = 10.0):
    """Simulate and analyze; overflow becomes a Diverged verdict."""
    traj = simulate(config, topology, on_overflow="truncate")
    if traj.escaped_at is not None:
        return traj, Verdict("Diverged", float(traj.psi_norm[-1]), t_escape=traj.escaped_at)
    return traj, analyze(traj, tol=tol, window=window)
