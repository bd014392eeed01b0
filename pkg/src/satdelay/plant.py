"""Agent dynamics, saturation, the four control laws and the stacked delay system.

Each agent is a saturated double integrator::

    x_i' = sat(vh_i),    vh_i' = u_i

and ``u_i`` is one of four consensus laws evaluated on the agent's own state
delayed by ``tau1`` and its in-neighbors' states delayed by ``tau2``. With
``Ã = D^{-1} A`` the row-normalized adjacency:

* U1: ``u_i = -v_i1 + sum_j ã_ij (x_j2 - x_i1)``
* U2: ``u_i = sum_j ã_ij ((v_j2 - v_i1) + (x_j2 - x_i1))``
* U3: ``u_i = -v_i1 + sum_j a_ij (x_j2 - x_i1)``
* U4: ``u_i = sum_j a_ij ((v_j2 - v_i1) + (x_j2 - x_i1))``

where suffix 1 means ``t - tau1`` and suffix 2 means ``t - tau2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ZeroRowSum
from .topology import Topology

__all__ = [
    "Saturation",
    "ControlLaw",
    "DelayPair",
    "DelayedStates",
    "DelayedSystem",
    "saturate",
    "control_input",
    "stack_system",
    "averaging_matrix",
    "disagreement_projector",
    "difference_matrix",
    "disagreement",
]


@dataclass(frozen=True)
class Saturation:
    """Symmetric clamp ``[-delta, delta]``; ``inf`` disables it."""

    delta: float = 50.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"saturation bound must be positive, got {self.delta}")


class ControlLaw(enum.Enum):
    U1 = "u1"
    U2 = "u2"
    U3 = "u3"
    U4 = "u4"

    @classmethod
    def parse(cls, value) -> "ControlLaw":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown control law {value!r}; expected u1..u4") from None

    @property
    def normalized(self) -> bool:
        return self in (ControlLaw.U1, ControlLaw.U2)

    @property
    def uses_neighbor_velocity(self) -> bool:
        return self in (ControlLaw.U2, ControlLaw.U4)


@dataclass(frozen=True)
class DelayPair:
    """Input delay ``tau1`` on the agent's own state, communication delay ``tau2``.

    ``tau1 > tau2`` is allowed here; analyses that need the ordering check it.
    """

    tau1: float = 0.0
    tau2: float = 0.0

    def __post_init__(self):
        if self.tau1 < 0 or self.tau2 < 0:
            raise ValueError(f"delays must be nonnegative, got {self.tau1}, {self.tau2}")

    @property
    def ordered(self) -> bool:
        return self.tau1 <= self.tau2


@dataclass(frozen=True)
class DelayedStates:
    """Positions/velocities of all agents sampled at ``t - tau1`` and ``t - tau2``."""

    x1: np.ndarray
    v1: np.ndarray
    x2: np.ndarray
    v2: np.ndarray


@dataclass(frozen=True)
class DelayedSystem:
    """Linear element ``X' = A0 X(t) + A1 X(t - tau1) + A2 X(t - tau2)``."""

    a0: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    delays: DelayPair
    law: ControlLaw
    topology: Topology

    @property
    def n(self) -> int:
        return self.topology.n


def saturate(value, sat: Saturation):
    """Clamp to ``[-delta, delta]``."""
    return np.clip(value, -sat.delta, sat.delta)


def _row_sums(topology: Topology, law: ControlLaw) -> np.ndarray:
    rs = topology.in_degree
    if law.normalized:
        for i, s in enumerate(rs):
            if s <= 0:
                raise ZeroRowSum(i)
    return rs


def control_input(law: ControlLaw, topology: Topology, histories: DelayedStates, i: int) -> float:
    """Evaluate one agent's control law term by term."""
    law = ControlLaw.parse(law)
    a = topology.adjacency
    rs = _row_sums(topology, law)
    xi, vi = float(histories.x1[i]), float(histories.v1[i])
    coupling = 0.0
    for j in topology.in_neighbors(i):
        w = a[i, j] / rs[i] if law.normalized else a[i, j]
        term = float(histories.x2[j]) - xi
        if law.uses_neighbor_velocity:
            term += float(histories.v2[j]) - vi
        coupling += w * term
    if law.uses_neighbor_velocity:
        return coupling
    return -vi + coupling


def stack_system(topology: Topology, law: ControlLaw, delays: DelayPair) -> DelayedSystem:
    """Block matrices of the linearized closed loop in ``X = (x, v)``."""
    law = ControlLaw.parse(law)
    n = topology.n
    a = topology.adjacency
    rs = _row_sums(topology, law)
    eye, zero = np.eye(n), np.zeros((n, n))
    a0 = np.block([[zero, eye], [zero, zero]])
    if law is ControlLaw.U1:
        at = a / rs[:, None]
        a1 = np.block([[zero, zero], [-eye, -eye]])
        a2 = np.block([[zero, zero], [at, zero]])
    elif law is ControlLaw.U2:
        at = a / rs[:, None]
        a1 = np.block([[zero, zero], [-eye, -eye]])
        a2 = np.block([[zero, zero], [at, at]])
    elif law is ControlLaw.U3:
        d = np.diag(rs)
        a1 = np.block([[zero, zero], [-d, -eye]])
        a2 = np.block([[zero, zero], [a, zero]])
    else:
        d = np.diag(rs)
        a1 = np.block([[zero, zero], [-d, -d]])
        a2 = np.block([[zero, zero], [a, a]])
    return DelayedSystem(a0=a0, a1=a1, a2=a2, delays=delays, law=law, topology=topology)


def averaging_matrix(n: int) -> np.ndarray:
    """``Phi01``: block-diagonal averaging over positions and over velocities."""
    avg = np.full((n, n), 1.0 / n)
    zero = np.zeros((n, n))
    return np.block([[avg, zero], [zero, avg]])


def disagreement_projector(n: int) -> np.ndarray:
    """``E = I - Phi01``, the orthogonal projector onto the disagreement subspace."""
    return np.eye(2 * n) - averaging_matrix(n)


def difference_matrix(n: int) -> np.ndarray:
    """``Gamma``: cyclic neighbor differences of positions and of velocities."""
    g = np.eye(n) - np.roll(np.eye(n), 1, axis=1)
    zero = np.zeros((n, n))
    return np.block([[g, zero], [zero, g]])


def disagreement(state) -> np.ndarray:
    """Mean-centered positions and velocities, ``Psi = E X``.

    Works on a single 2n-vector or on a stack of them along the last axis.
    """
    x = np.asarray(state, dtype=float)
    n = x.shape[-1] // 2
    pos, vel = x[..., :n], x[..., n:]
    return np.concatenate(
        [pos - pos.mean(axis=-1, keepdims=True), vel - vel.mean(axis=-1, keepdims=True)], axis=-1
    )
