"""Feasibility decisions and Lyapunov delay margins."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..errors import DelayOrderViolation
from ..plant import ControlLaw, DelayPair
from ..topology import Topology
from .assembly import SYMMETRIC, VariableSpace, constraint_blocks
from .reduction import ReducedSystem, reduce
from .sdp import LmiBlock, maximize_margin

__all__ = [
    "FeasibilityReport",
    "LmiMargin",
    "LmiSweep",
    "check_feasible",
    "check_reduced",
    "verify_certificate",
    "max_tau2_lmi",
    "lmi_margin",
    "equal_delay_margin_lmi",
    "sweep_lmi",
]

TRACE_BOUND = 1e6
BLOCK_NAMES = ("-G", "P", "Q1", "Q2", "Z1", "Z2", "Z3", "MH", "MI", "MJ")
VERIFY_TOL = 1e-9


@dataclass
class FeasibilityReport:
    """``status`` is ``feasible``, ``infeasible`` or ``stalled``.

    A stalled run is reported with ``feasible = False``. The certificate
    satisfies every strict constraint with margin at least 1.
    """

    feasible: bool
    status: str
    certificate: dict | None
    worst_eigenvalue: float
    solver_iterations: int
    delays: DelayPair = field(default_factory=DelayPair)

    def certificate_json(self) -> str:
        if self.certificate is None:
            return "null"
        data = {k: [[float(f"{v:.17g}") for v in row] for row in m.tolist()]
                for k, m in self.certificate.items()}
        return json.dumps(data, indent=1)


def _affine_maps(reduced: ReducedSystem):
    """Probe the assembly with every unit variable at three delay pairs.

    Every constraint is affine in the delays, ``M = M0 + tau1 Mb + tau2 Mc``,
    so three batched probes give the full dependence.
    """
    space = VariableSpace(reduced.dim)
    eye = np.eye(space.dim)
    probes = {}
    for key, dp in (("a", DelayPair(0.0, 0.0)), ("ac", DelayPair(0.0, 1.0)), ("abc", DelayPair(1.0, 1.0))):
        mats = constraint_blocks(reduced, dp, space.unpack(eye))
        probes[key] = [mk.reshape(space.dim, -1).T.copy() for mk in mats]
    m0 = probes["a"]
    mc = [b - a for a, b in zip(probes["a"], probes["ac"])]
    mb = [b - a for a, b in zip(probes["ac"], probes["abc"])]
    return space, m0, mb, mc


@lru_cache(maxsize=32)
def _cached_maps(key):
    topology_bytes, n, law = key
    adj = np.frombuffer(topology_bytes, dtype=float).reshape(n, n)
    reduced = reduce(Topology(adj), law)
    return (reduced,) + _affine_maps(reduced)


def _maps_for(topology: Topology, law: ControlLaw):
    return _cached_maps((topology.adjacency.tobytes(), topology.n, law))


def verify_certificate(reduced: ReducedSystem, delays: DelayPair, variables: dict,
                       tol: float = VERIFY_TOL) -> tuple[bool, float]:
    """Direct eigenvalue check; returns (ok, smallest eigenvalue over all blocks)."""
    mats = constraint_blocks(reduced, delays, variables)
    worst = min(float(np.linalg.eigvalsh(0.5 * (mk + mk.T))[0]) for mk in mats)
    return worst > tol, worst


def _trace_weights(space: VariableSpace) -> np.ndarray:
    """Linear functional giving the summed trace of every symmetric variable."""
    a = np.zeros(space.dim)
    iu = np.triu_indices(space.r)
    diag = np.nonzero(iu[0] == iu[1])[0]
    for k, (lo, _) in space.offsets().items():
        if k in SYMMETRIC:
            a[lo + diag] = 1.0
    return a


def check_reduced(reduced: ReducedSystem, maps, delays: DelayPair, *, seed: int = 0,
                  tol: float = 1e-7, bound: float = TRACE_BOUND) -> FeasibilityReport:
    """Phase-one problem with unit margins.

    Maximize ``s`` with ``-G >= (1 + s) I``, ``X >= (1 + s) I`` for the
    definite variables, frames ``>= s I`` and the summed trace of all
    symmetric variables at most ``bound * r``. A value ``s >= 0`` gives a
    strictly feasible point.
    """
    space, m0, mb, mc = maps
    t1, t2 = delays.tau1, delays.tau2
    blocks = []
    for k, (a0, b, c) in enumerate(zip(m0, mb, mc)):
        dim = int(round(math.sqrt(a0.shape[0])))
        const = -np.eye(dim) if k < 7 else np.zeros((dim, dim))
        blocks.append(LmiBlock.from_dense(const, a0 + t1 * b + t2 * c))
    weights = _trace_weights(space)
    cap = bound * space.r
    blocks.append(LmiBlock.from_dense(np.array([[cap]]), -weights[None, :], margin=False))
    x0 = space.pack(space.initial()) * 2.0
    rng = np.random.default_rng(seed)
    pert = x0 + 1e-2 * rng.standard_normal(len(x0)) * (weights == 0)
    res = None
    total = 0
    for start in (x0, pert):
        res = maximize_margin(blocks, start, tol=tol)
        total += res.iterations
        if res.status != "stalled":
            break
    if res.status == "feasible":
        variables = space.unpack(res.x)
        ok, worst = verify_certificate(reduced, delays, variables)
        if ok:
            return FeasibilityReport(True, "feasible", variables, worst, total, delays)
        return FeasibilityReport(False, "stalled", None, -res.margin, total, delays)
    return FeasibilityReport(False, res.status, None, -res.margin, total, delays)


def check_feasible(topology: Topology, law, delays: DelayPair, *, seed: int = 0,
                   tol: float = 1e-7) -> FeasibilityReport:
    """Decide strict feasibility of the reduced LMIs at ``delays``.

    ``worst_eigenvalue`` is the smallest eigenvalue over the certificate's
    constraint blocks when feasible, otherwise the best achievable
    normalized violation ``max_k lambda_max(-M_k)``.
    """
    law = ControlLaw.parse(law)
    if not delays.ordered:
        raise DelayOrderViolation(f"tau1={delays.tau1} exceeds tau2={delays.tau2}")
    reduced, *maps = _maps_for(topology, law)
    return check_reduced(reduced, maps, delays, seed=seed, tol=tol)


@dataclass
class LmiMargin:
    value: float | None
    trace: list
    inconclusive: bool

    @property
    def status(self) -> str:
        if self.inconclusive:
            return "inconclusive"
        return "none" if self.value is None else "ok"


def _bisect(check, lo, hi, resolution, trace):
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        rep = check(mid)
        trace.append((mid, rep.status))
        if rep.feasible:
            lo = mid
        else:
            hi = mid
    return lo


def lmi_margin(topology: Topology, law, tau1: float, *, hi: float = 3.0, resolution: float = 0.01,
               seed: int = 0) -> LmiMargin:
    """Bisection on ``tau2 in [tau1, hi]`` with the solver trace."""
    law = ControlLaw.parse(law)
    trace = []

    def check(t2):
        return check_feasible(topology, law, DelayPair(tau1, t2), seed=seed)

    first = check(tau1)
    trace.append((tau1, first.status))
    if not first.feasible:
        return LmiMargin(None, trace, first.status == "stalled")
    top = check(hi)
    trace.append((hi, top.status))
    if top.feasible:
        return LmiMargin(hi, trace, False)
    value = _bisect(check, tau1, hi, resolution, trace)
    return LmiMargin(value, trace, any(s == "stalled" for _, s in trace))


def max_tau2_lmi(topology: Topology, law, tau1: float, *, hi: float = 3.0,
                 resolution: float = 0.01, seed: int = 0) -> float | None:
    """Largest feasible ``tau2`` to ``resolution``; ``None`` if ``tau2 = tau1`` fails."""
    return lmi_margin(topology, law, tau1, hi=hi, resolution=resolution, seed=seed).value


def equal_delay_margin_lmi(topology: Topology, law, *, hi: float = 3.0, resolution: float = 0.01,
                           seed: int = 0) -> LmiMargin:
    """Largest ``tau`` with ``tau1 = tau2 = tau`` feasible."""
    law = ControlLaw.parse(law)
    trace = []

    def check(t):
        return check_feasible(topology, law, DelayPair(t, t), seed=seed)

    first = check(0.0)
    trace.append((0.0, first.status))
    if not first.feasible:
        return LmiMargin(None, trace, first.status == "stalled")
    value = _bisect(check, 0.0, hi, resolution, trace)
    return LmiMargin(value, trace, any(s == "stalled" for _, s in trace))


@dataclass
class LmiSweep:
    tau1_grid: list
    margins: list

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write("tau1,tau2_max,status\n")
            for t1, mg in zip(self.tau1_grid, self.margins):
                val = "none" if mg.value is None else f"{mg.value:.4f}"
                fh.write(f"{t1:.6g},{val},{mg.status}\n")


def sweep_lmi(topology: Topology, law, tau1_grid, *, seed: int = 0) -> LmiSweep:
    grid = [float(t) for t in tau1_grid]
    return LmiSweep(grid, [lmi_margin(topology, law, t, seed=seed) for t in grid])
