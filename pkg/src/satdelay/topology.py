"""Communication graphs, their derived matrices and structural classes.

Convention: ``adjacency[i, j] > 0`` means agent ``j``'s state flows to agent
``i``. Row sums are therefore in-degrees and column sums out-degrees.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceFailure, InvalidTopology, ZeroRowSum

__all__ = [
    "Topology",
    "DerivedMatrices",
    "GraphClass",
    "normalize",
    "classify",
    "spectrum",
    "load_graph",
    "graph_from_dict",
    "ring",
]

SNAP_IMAG = 1e-9


@dataclass(frozen=True)
class Topology:
    """Directed weighted communication graph.

    Parameters
    ----------
    adjacency : array_like
        Square nonnegative matrix with zero diagonal.
    """

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidTopology(f"adjacency must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidTopology("adjacency has non-finite entries")
        if np.any(a < 0):
            raise InvalidTopology("adjacency has negative entries")
        if np.any(np.diag(a) != 0):
            raise InvalidTopology("adjacency diagonal must be exactly zero")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def in_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def out_degree(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    def in_neighbors(self, i: int) -> list[int]:
        return [int(j) for j in np.nonzero(self.adjacency[i])[0]]

    def out_neighbors(self, j: int) -> list[int]:
        return [int(i) for i in np.nonzero(self.adjacency[:, j])[0]]

    def permuted(self, perm) -> "Topology":
        """Relabel vertices so that new vertex ``k`` is old vertex ``perm[k]``."""
        p = np.asarray(perm)
        return Topology(self.adjacency[np.ix_(p, p)])

    def to_dict(self) -> dict:
        return {"matrix": self.adjacency.tolist()}


@dataclass(frozen=True)
class DerivedMatrices:
    normalized: np.ndarray
    degree: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class GraphClass:
    has_spanning_tree: bool
    balanced: bool
    k_regular: int | None


def spectrum(matrix) -> np.ndarray:
    """All eigenvalues of a small real matrix.

    Eigenvalues whose imaginary part is below 1e-9 in magnitude are snapped to
    the real axis. The result is sorted by (real, imag) for determinism.

    Raises
    ------
    ConvergenceFailure
        If the underlying QR iteration does not converge.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("spectrum needs a square matrix")
    try:
        lam = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc), matrix=m) from exc
    lam = lam.astype(complex)
    small = np.abs(lam.imag) < SNAP_IMAG
    lam[small] = lam[small].real
    order = np.lexsort((lam.imag, lam.real))
    return lam[order]


def normalize(topology: Topology) -> DerivedMatrices:
    """Row-normalize the adjacency and compute the spectrum of the result.

    Raises
    ------
    ZeroRowSum
        If some agent has no in-neighbors.
    """
    a = topology.adjacency
    rs = a.sum(axis=1)
    for i, s in enumerate(rs):
        if s <= 0:
            raise ZeroRowSum(i)
    at = a / rs[:, None]
    return DerivedMatrices(normalized=at, degree=np.diag(rs), eigenvalues=spectrum(at))


def _reachable_from(a: np.ndarray, root: int) -> set[int]:
    seen = {root}
    queue = deque([root])
    while queue:
        j = queue.popleft()
        for i in np.nonzero(a[:, j])[0]:
            if int(i) not in seen:
                seen.add(int(i))
                queue.append(int(i))
    return seen


def classify(topology: Topology, atol: float = 1e-12) -> GraphClass:
    """Spanning-tree, balance and regularity flags of a graph."""
    a = topology.adjacency
    n = topology.n
    tree = any(len(_reachable_from(a, r)) == n for r in range(n))
    indeg, outdeg = a.sum(axis=1), a.sum(axis=0)
    balanced = bool(np.allclose(indeg, outdeg, rtol=0, atol=atol))
    k = None
    if balanced and np.allclose(indeg, indeg[0], rtol=0, atol=atol):
        kf = float(indeg[0])
        if kf > 0 and abs(kf - round(kf)) <= atol:
            k = int(round(kf))
    return GraphClass(has_spanning_tree=tree, balanced=balanced, k_regular=k)


def graph_from_dict(data: dict) -> Topology:
    """Build a topology from the edge-list or matrix JSON form."""
    if "matrix" in data:
        return Topology(np.asarray(data["matrix"], dtype=float))
    if "n" in data and "edges" in data:
        n = int(data["n"])
        a = np.zeros((n, n))
        for edge in data["edges"]:
            if len(edge) not in (2, 3):
                raise InvalidTopology(f"edge must be [i, j] or [i, j, w], got {edge}")
            i, j = int(edge[0]), int(edge[1])
            w = float(edge[2]) if len(edge) == 3 else 1.0
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidTopology(f"edge {edge} out of range for n={n}")
            a[i, j] = w
        return Topology(a)
    raise InvalidTopology("graph JSON needs either 'matrix' or 'n' and 'edges'")


def load_graph(path) -> Topology:
    """Read a graph JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidTopology(f"cannot read graph file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidTopology("graph JSON must be an object")
    return graph_from_dict(data)


def ring(n: int) -> Topology:
    """Undirected n-cycle with unit weights."""
    a = np.zeros((n, n))
    for i in range(n):
        a[i, (i + 1) % n] = 1.0
        a[i, (i - 1) % n] = 1.0
    np.fill_diagonal(a, 0.0)
    return Topology(a)
