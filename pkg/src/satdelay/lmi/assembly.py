"""Variable layout and assembly of the delay-dependent stability LMIs.

With ``d = tau2 - tau1`` and ``Xi = tau1 Z1 + tau2 Z2 + d Z3`` the conditions
are ``G < 0`` for the 3x3 block matrix below, ``P, Q1, Q2, Z1..Z3 > 0`` and

    [[H11  H12  H13  H14]
     [H12' H22  H23  H24]
     [H13' H23' H33  H34]   >= 0,
     [H14' H24' H34' Z1 ]]

likewise for the I blocks with Z2 and the J blocks with Z3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DelayOrderViolation
from ..plant import DelayPair
from .reduction import ReducedSystem

__all__ = [
    "SYMMETRIC",
    "GENERAL",
    "VariableSpace",
    "assemble",
    "constraint_blocks",
    "full_order_assemble",
    "lift",
]

_PAIRS = ("11", "12", "13", "14", "22", "23", "24", "33", "34")
SYMMETRIC = ("P", "Q1", "Q2", "Z1", "Z2", "Z3") + tuple(f"{f}{k}" for f in "HIJ" for k in ("11", "22", "33"))
GENERAL = tuple(f"{f}{k}" for f in "HIJ" for k in _PAIRS if k[0] != k[1])


@dataclass(frozen=True)
class VariableSpace:
    """Packing of the matrix variables into one real vector.

    Symmetric variables store their upper triangle, general ones every entry.
    """

    r: int

    @property
    def names(self) -> tuple:
        return SYMMETRIC + GENERAL

    def size(self, name: str) -> int:
        r = self.r
        return r * (r + 1) // 2 if name in SYMMETRIC else r * r

    @property
    def dim(self) -> int:
        return sum(self.size(k) for k in self.names)

    def offsets(self) -> dict:
        out, pos = {}, 0
        for k in self.names:
            out[k] = (pos, pos + self.size(k))
            pos += self.size(k)
        return out

    def unpack(self, vec) -> dict:
        """Matrices from a packed vector, or from a stack of them (last axis)."""
        r = self.r
        vec = np.asarray(vec, dtype=float)
        lead = vec.shape[:-1]
        iu = np.triu_indices(r)
        out = {}
        for k, (a, b) in self.offsets().items():
            chunk = vec[..., a:b]
            if k in SYMMETRIC:
                m = np.zeros(lead + (r, r))
                m[..., iu[0], iu[1]] = chunk
                m[..., iu[1], iu[0]] = chunk
                out[k] = m
            else:
                out[k] = chunk.reshape(lead + (r, r)).copy()
        return out

    def pack(self, variables: dict) -> np.ndarray:
        r = self.r
        iu = np.triu_indices(r)
        parts = []
        for k in self.names:
            m = np.asarray(variables[k], dtype=float)
            parts.append(m[iu] if k in SYMMETRIC else m.ravel())
        return np.concatenate(parts)

    def initial(self) -> dict:
        """Identity for the definite variables, zero for the couplings."""
        eye, zero = np.eye(self.r), np.zeros((self.r, self.r))
        return {k: (eye.copy() if k in ("P", "Q1", "Q2", "Z1", "Z2", "Z3") else zero.copy())
                for k in self.names}

    def random(self, rng) -> dict:
        r = self.r
        out = {}
        for k in self.names:
            m = rng.standard_normal((r, r))
            out[k] = (m + m.T) / 2 if k in SYMMETRIC else m
        return out


def _check(delays: DelayPair):
    if not delays.ordered:
        raise DelayOrderViolation(f"tau1={delays.tau1} exceeds tau2={delays.tau2}")


def _t(m):
    return np.swapaxes(m, -1, -2)


def _bmat(rows):
    return np.concatenate([np.concatenate(row, axis=-1) for row in rows], axis=-2)


def _frame(v: dict, zname: str, f: str) -> np.ndarray:
    g = lambda k: v[f + k]  # noqa: E731
    return _bmat([
        [g("11"), g("12"), g("13"), g("14")],
        [_t(g("12")), g("22"), g("23"), g("24")],
        [_t(g("13")), _t(g("23")), g("33"), g("34")],
        [_t(g("14")), _t(g("24")), _t(g("34")), v[zname]],
    ])


def assemble(reduced: ReducedSystem, delays: DelayPair, variables: dict) -> dict:
    """Constraint matrices ``G`` (must be < 0) and ``MH``, ``MI``, ``MJ`` (>= 0).

    Variables may carry leading batch dimensions.
    """
    _check(delays)
    t1, t2 = delays.tau1, delays.tau2
    d = t2 - t1
    f0, f1, f2 = reduced.f0, reduced.f1, reduced.f2
    v = variables
    P, Q1, Q2 = v["P"], v["Q1"], v["Q2"]
    H = lambda k: v["H" + k]  # noqa: E731
    I = lambda k: v["I" + k]  # noqa: E731,E741
    J = lambda k: v["J" + k]  # noqa: E731
    xi = t1 * v["Z1"] + t2 * v["Z2"] + d * v["Z3"]
    g11 = (f0.T @ P + P @ f0 + Q1 + Q2 + f0.T @ xi @ f0
           + t1 * H("11") + H("14") + _t(H("14"))
           + t2 * I("11") + I("14") + _t(I("14"))
           + d * J("11"))
    g12 = (P @ f1 + f0.T @ xi @ f1
           + t1 * H("12") - H("14") + _t(H("24"))
           + t2 * I("12") + _t(I("24"))
           + d * J("12") + J("14"))
    g13 = (P @ f2 + f0.T @ xi @ f2
           + t1 * H("13") + _t(H("34"))
           + t2 * I("13") - I("14") + _t(I("34"))
           + d * J("13") - J("14"))
    g22 = (-Q1 + f1.T @ xi @ f1
           + t1 * H("22") - H("24") - _t(H("24"))
           + t2 * I("22")
           + d * J("22") + J("24") + _t(J("24")))
    g23 = (f1.T @ xi @ f2
           + t1 * H("23") - _t(H("34"))
           + t2 * I("23") - I("24")
           + d * J("23") - J("24") + _t(J("34")))
    g33 = (-Q2 + f2.T @ xi @ f2
           + t1 * H("33")
           + t2 * I("33") - I("34") - _t(I("34"))
           + d * J("33") - J("34") - _t(J("34")))
    G = _bmat([[g11, g12, g13], [_t(g12), g22, g23], [_t(g13), _t(g23), g33]])
    return {
        "G": G,
        "MH": _frame(v, "Z1", "H"),
        "MI": _frame(v, "Z2", "I"),
        "MJ": _frame(v, "Z3", "J"),
    }


def constraint_blocks(reduced: ReducedSystem, delays: DelayPair, variables: dict) -> list:
    """Every constraint as a matrix that must be positive (semi)definite.

    Order: ``-G``, ``P``, ``Q1``, ``Q2``, ``Z1``, ``Z2``, ``Z3``, ``MH``,
    ``MI``, ``MJ``.
    """
    mats = assemble(reduced, delays, variables)
    v = variables
    return [-mats["G"], v["P"], v["Q1"], v["Q2"], v["Z1"], v["Z2"], v["Z3"],
            mats["MH"], mats["MI"], mats["MJ"]]


def lift(reduced: ReducedSystem, variables: dict) -> dict:
    """Embed reduced variables in full order: ``X = U diag(X~, 0) U^T``."""
    u = reduced.basis.U
    r = reduced.dim
    out = {}
    for k, m in variables.items():
        big = np.zeros((r + 2, r + 2))
        big[:r, :r] = m
        out[k] = u @ big @ u.T
    return out


def full_order_assemble(reduced: ReducedSystem, delays: DelayPair, full_vars: dict) -> dict:
    """Full-order conditions written as a quadratic form in ``xi = (X, X1, X2)``.

    ``X' = F xi`` with ``F = [E A0, E A1, E A2]``; the free-weighting terms
    pair ``N_H`` with ``X - X1``, ``N_I`` with ``X - X2`` and ``N_J`` with
    ``X1 - X2``. This is an independent route to the same matrices.
    """
    _check(delays)
    t1, t2 = delays.tau1, delays.tau2
    d = t2 - t1
    v = full_vars
    m = reduced.full[0].shape[0]
    eye = np.eye(m)
    zero = np.zeros((m, m))
    s0 = np.hstack([eye, zero, zero])
    s1 = np.hstack([zero, eye, zero])
    s2 = np.hstack([zero, zero, eye])
    big_f = np.hstack(reduced.full)
    xi = t1 * v["Z1"] + t2 * v["Z2"] + d * v["Z3"]

    def sym(a):
        return a + a.T

    def upper(f):
        k = lambda s: v[f + s]  # noqa: E731
        return np.block([[k("11"), k("12"), k("13")],
                         [k("12").T, k("22"), k("23")],
                         [k("13").T, k("23").T, k("33")]])

    def column(f):
        return np.vstack([v[f + "14"], v[f + "24"], v[f + "34"]])

    G = (sym(s0.T @ v["P"] @ big_f)
         + s0.T @ (v["Q1"] + v["Q2"]) @ s0 - s1.T @ v["Q1"] @ s1 - s2.T @ v["Q2"] @ s2
         + big_f.T @ xi @ big_f
         + t1 * upper("H") + t2 * upper("I") + d * upper("J")
         + sym(column("H") @ (s0 - s1))
         + sym(column("I") @ (s0 - s2))
         + sym(column("J") @ (s1 - s2)))
    frames = {}
    for f, z in (("H", "Z1"), ("I", "Z2"), ("J", "Z3")):
        c = column(f)
        frames["M" + f] = np.block([[upper(f), c], [c.T, v[z]]])
    return {"G": G, **frames}
