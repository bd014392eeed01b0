"""Small primal-dual interior-point solver for LMI feasibility with a margin variable.

The solver maximizes ``s`` subject to

    C_k + M_k(x) - s I >= 0   for blocks that carry the margin,
    C_k + M_k(x)       >= 0   for the remaining (bounding) blocks.

This is the dual form of a standard SDP pair: with ``y = (x, s)`` the slack
is ``S = C - sum_i y_i A_i``. The primal variable ``X`` supplies an upper
bound ``<C, X>`` on the optimal margin once ``A(X) = b`` holds, which
certifies infeasibility when it is negative. Iterations follow the HKM
search direction with a Mehrotra predictor-corrector step. The iterate
``y`` stays strictly feasible throughout, so any ``s > tol`` is a
certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = ["LmiBlock", "BarrierResult", "maximize_margin"]


@dataclass
class LmiBlock:
    """Affine symmetric map ``x -> const + mat(basis @ x[active])``."""

    dim: int
    const: np.ndarray
    basis: sp.csr_matrix
    active: np.ndarray
    margin: bool = True

    @classmethod
    def from_dense(cls, const: np.ndarray, full: np.ndarray, margin: bool = True) -> "LmiBlock":
        cols = np.nonzero(np.any(full != 0, axis=0))[0]
        dim = const.shape[0]
        return cls(dim, np.asarray(const, dtype=float), sp.csr_matrix(full[:, cols]), cols, margin)

    def evaluate(self, x: np.ndarray, s: float = 0.0) -> np.ndarray:
        m = self.const + (self.basis @ x[self.active]).reshape(self.dim, self.dim)
        m = 0.5 * (m + m.T)
        if self.margin:
            m = m - s * np.eye(self.dim)
        return m


@dataclass
class BarrierResult:
    status: str  # "feasible", "infeasible" or "stalled"
    x: np.ndarray
    margin: float
    upper_bound: float
    iterations: int


class _Block:
    """Block data in SDP form: ``S = C - sum_i y[idx_i] A_i``.

    ``basis`` holds ``vec(A_i)`` as sparse columns; each variable touches only
    a handful of entries, which keeps the Schur assembly cheap.
    """

    def __init__(self, blk: LmiBlock, m: int):
        d = blk.dim
        basis = -sp.csc_matrix(blk.basis)
        idx = np.asarray(blk.active)
        if blk.margin:
            basis = sp.hstack([basis, sp.csc_matrix(np.eye(d).reshape(-1, 1))], format="csc")
            idx = np.append(idx, m)
        # symmetrize each column: vec(A^T) is a fixed row permutation of vec(A)
        perm = np.arange(d * d).reshape(d, d).T.ravel()
        self.basis = (0.5 * (basis + basis[perm])).tocsc()
        self.basis_t = self.basis.T.tocsr()
        self.idx = idx
        self.full = np.array_equal(idx, np.arange(m + 1))
        self.dim = d

    def op(self, mat):
        """``A(mat)`` restricted to this block's variables."""
        return self.basis_t @ mat.ravel()

    def adj(self, dy):
        return (self.basis @ dy[self.idx]).reshape(self.dim, self.dim)

    def schur(self, xk, sinv):
        """``[tr(A_i X A_j S^-1)]_ij`` as ``B^T kron(S^-1, X) B``."""
        # kron(S^-1, X) is symmetric, so B^T K = (K B)^T
        kb = self.basis_t @ np.kron(sinv, xk)
        return self.basis_t @ kb.T


def _max_step(mat, dmat):
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return 0.0
    linv = sla.solve_triangular(chol, np.eye(len(mat)), lower=True)
    low = np.linalg.eigvalsh(linv @ dmat @ linv.T)[0]
    return np.inf if low >= 0 else -1.0 / low


def _is_pd(mat):
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return False
    return True


def maximize_margin(blocks: list, x0: np.ndarray, *, tol: float = 1e-7, max_iter: int = 120,
                    stop_early: bool = True, safety: float = 10.0) -> BarrierResult:
    """Maximize the common margin ``s``; ``x0`` must satisfy the non-margin blocks strictly.

    With a primal residual ``r = b - A(X)`` weak duality gives
    ``s* <= <C, X> + r . y*``. The unknown optimum ``y*`` is replaced by the
    current iterate inflated by ``safety``.
    """
    m = len(x0)
    x = np.array(x0, dtype=float)
    for b in blocks:
        if not b.margin and not _is_pd(b.evaluate(x)):
            raise ValueError("starting point violates a bounding block")
    s = min(np.linalg.eigvalsh(b.evaluate(x))[0] for b in blocks if b.margin) - 1.0
    y = np.append(x, s)
    data = [_Block(b, m) for b in blocks]
    bvec = np.zeros(m + 1)
    bvec[m] = 1.0
    nu = float(sum(b.dim for b in blocks))
    xs = [np.eye(b.dim) for b in blocks]
    upper = np.inf

    for it in range(max_iter + 1):
        ss = [b.evaluate(y[:m], y[m]) for b in blocks]
        if stop_early and y[m] > tol:
            return BarrierResult("feasible", y[:m], y[m], upper, it)
        ax = np.zeros(m + 1)
        for d, xk in zip(data, xs):
            ax[d.idx] += d.op(xk)
        rp = bvec - ax
        pobj = sum(float(np.sum(b.const * xk)) for b, xk in zip(blocks, xs))
        gap = sum(float(np.sum(xk * sk)) for xk, sk in zip(xs, ss))
        upper = pobj + safety * float(np.abs(rp) @ np.maximum(np.abs(y), 1.0))
        if upper < -tol:
            return BarrierResult("infeasible", y[:m], y[m], upper, it)
        if it == max_iter or (gap < 1e-10 * max(1.0, abs(y[m])) and upper - y[m] < 1e-8):
            return BarrierResult("feasible" if y[m] > tol else "stalled", y[:m], y[m], upper, it)
        mu = gap / nu

        sinv = [np.linalg.inv(sk) for sk in ss]
        sinv = [0.5 * (si + si.T) for si in sinv]
        schur = np.zeros((m + 1, m + 1))
        for d, xk, si in zip(data, xs, sinv):
            if d.full:
                schur += d.schur(xk, si)
            else:
                schur[np.ix_(d.idx, d.idx)] += d.schur(xk, si)
        schur = 0.5 * (schur + schur.T)
        schur[np.diag_indices(m + 1)] += 1e-14 * max(1.0, np.abs(np.diag(schur)).max())
        try:
            fac = sla.cho_factor(schur)
        except np.linalg.LinAlgError:
            return BarrierResult("stalled", y[:m], y[m], upper, it)

        def direction(targets):
            # targets[k] is where X_k should move, before the X dS S^-1 correction
            rhs = rp.copy()
            for d, xk, tk in zip(data, xs, targets):
                rhs[d.idx] -= d.op(tk - xk)
            dy = sla.cho_solve(fac, rhs)
            dss = [-d.adj(dy) for d in data]
            dxs = []
            for xk, tk, dsk, si in zip(xs, targets, dss, sinv):
                dxk = tk - xk - xk @ dsk @ si
                dxs.append(0.5 * (dxk + dxk.T))
            return dy, dxs, dss

        def lengths(dxs, dss):
            ap = min(_max_step(xk, dxk) for xk, dxk in zip(xs, dxs))
            ad = min(_max_step(sk, dsk) for sk, dsk in zip(ss, dss))
            return min(1.0, ap), min(1.0, ad)

        _, dx_a, ds_a = direction([np.zeros_like(xk) for xk in xs])
        ap, ad = lengths(dx_a, ds_a)
        mu_aff = sum(float(np.sum((xk + ap * dxk) * (sk + ad * dsk)))
                     for xk, dxk, sk, dsk in zip(xs, dx_a, ss, ds_a)) / nu
        sigma = min(1.0, (mu_aff / mu) ** 3)
        targets = [sigma * mu * si - dxk @ dsk @ si for si, dxk, dsk in zip(sinv, dx_a, ds_a)]
        dy, dxs, dss = direction(targets)
        ap, ad = lengths(dxs, dss)
        ap, ad = min(1.0, 0.95 * ap), min(1.0, 0.95 * ad)

        y_new = y + ad * dy
        while ad > 1e-12 and not all(_is_pd(b.evaluate(y_new[:m], y_new[m])) for b in blocks):
            ad *= 0.5
            y_new = y + ad * dy
        xs_new = [xk + ap * dxk for xk, dxk in zip(xs, dxs)]
        while ap > 1e-12 and not all(_is_pd(xk) for xk in xs_new):
            ap *= 0.5
            xs_new = [xk + ap * dxk for xk, dxk in zip(xs, dxs)]
        if ad <= 1e-12 and ap <= 1e-12:
            return BarrierResult("stalled", y[:m], y[m], upper, it)
        y = y_new
        if ap > 1e-12:
            xs = xs_new
    raise AssertionError("unreachable")
