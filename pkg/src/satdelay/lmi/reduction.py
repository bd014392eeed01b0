"""Order reduction of the stacked delay system onto the disagreement subspace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InadmissibleTopology
from ..plant import ControlLaw, DelayPair, disagreement_projector, stack_system
from ..topology import Topology, classify

__all__ = ["ReductionBasis", "ReducedSystem", "admitted", "reduction_basis", "reduce"]


@dataclass(frozen=True)
class ReductionBasis:
    """Orthogonal eigenbasis of ``E`` with the two null vectors last."""

    U: np.ndarray

    @property
    def reduced_dim(self) -> int:
        return self.U.shape[0] - 2


@dataclass(frozen=True)
class ReducedSystem:
    """Leading blocks of ``U^T E A_i U`` and of ``U^T E U``."""

    f0: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    e: np.ndarray
    basis: ReductionBasis
    law: ControlLaw
    full: tuple

    @property
    def dim(self) -> int:
        return self.f0.shape[0]


def admitted(topology: Topology, law) -> bool:
    """k-regular graphs admit every law; graphs with a spanning tree admit u1/u2."""
    law = ControlLaw.parse(law)
    gc = classify(topology)
    if gc.k_regular is not None:
        return True
    return gc.has_spanning_tree and law.normalized


def reduction_basis(n: int) -> ReductionBasis:
    e = disagreement_projector(n)
    w, v = np.linalg.eigh(e)
    order = np.argsort(-w, kind="stable")
    return ReductionBasis(v[:, order])


def reduce(topology: Topology, law, tol: float = 1e-8) -> ReducedSystem:
    """Project ``E A_i`` onto the disagreement subspace.

    Raises
    ------
    InadmissibleTopology
        If the graph/law pair is outside the admitted cases, or if the
        projection leaves a nonzero trailing block.
    """
    law = ControlLaw.parse(law)
    if not admitted(topology, law):
        raise InadmissibleTopology(
            f"law {law.value} needs a k-regular graph"
            + (" or a spanning tree" if law.normalized else "")
        )
    n = topology.n
    sysm = stack_system(topology, law, DelayPair())
    e = disagreement_projector(n)
    basis = reduction_basis(n)
    u = basis.U
    r = 2 * n - 2
    blocks = []
    full = []
    for a in (sysm.a0, sysm.a1, sysm.a2):
        fi = e @ a
        proj = u.T @ fi @ u
        trailing = max(np.abs(proj[r:, :]).max(initial=0.0), np.abs(proj[:, r:]).max(initial=0.0))
        if trailing > tol:
            raise InadmissibleTopology(
                f"projection of law {law.value} leaves a trailing block of size {trailing:.3g}"
            )
        blocks.append(proj[:r, :r])
        full.append(fi)
    e_red = (u.T @ e @ u)[:r, :r]
    return ReducedSystem(*blocks, e=e_red, basis=basis, law=law, full=tuple(full))
