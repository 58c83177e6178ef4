"""Sparse linear-algebra helpers shared by the solvers.

The Liouvillians here live on a lattice of photon numbers, so a geometric
nested-dissection ordering of that lattice gives LU factors with far less
fill than the generic column orderings.  Systems below ``DIRECT_LIMIT`` are
factorised exactly; larger ones use an incomplete LU with the same ordering
as a preconditioner for restarted GMRES.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .exceptions import SolverError

DIRECT_LIMIT = 20_000
_LEAF = 64


def nd_permutation(dims, protected=(), keep=None) -> np.ndarray:
    """Nested-dissection ordering of a column-stacked operator space.

    Parameters
    ----------
    dims : sequence of int
        Hilbert-space factor dimensions in composite (row-major) order.
    protected : sequence of int
        Indices into ``dims`` whose axes must never be split (e.g. the atom,
        whose couplings are not nearest-neighbour).
    keep : array of int, optional
        Composite Hilbert-space indices spanning a restricted basis.  The
        operator space is then ``len(keep)**2`` and the ordering is built
        from the lattice coordinates of the kept states.

    Returns
    -------
    numpy.ndarray
        Permutation ``p`` such that ``A[p][:, p]`` is the reordered matrix.
    """
    dims = tuple(int(x) for x in dims)
    k = len(dims)
    if keep is None:
        keep = np.arange(int(np.prod(dims)))
    keep = np.asarray(keep)
    site = np.stack(np.unravel_index(keep, dims), axis=1)
    m = len(keep)
    # vec index = row + m*col
    rows, cols = np.arange(m * m) % m, np.arange(m * m) // m
    coords = np.concatenate([site[rows], site[cols]], axis=1)
    frozen = set(protected) | {k + i for i in protected}
    splittable = [ax for ax in range(2 * k) if ax not in frozen]
    out = []

    def rec(ids):
        if ids.size <= _LEAF:
            out.append(ids)
            return
        c = coords[ids]
        extent = c.max(axis=0) - c.min(axis=0)
        ax = max(splittable, key=lambda j: extent[j])
        if extent[ax] < 2:
            out.append(ids)
            return
        mid = (c[:, ax].min() + c[:, ax].max()) // 2
        rec(ids[c[:, ax] < mid])
        rec(ids[c[:, ax] > mid])
        out.append(ids[c[:, ax] == mid])

    rec(np.arange(m * m))
    return np.concatenate(out)


def bordered(L: sp.spmatrix, d: int, row: int = 0) -> sp.csc_matrix:
    """Copy of ``L`` whose ``row`` (a diagonal entry index) is the trace functional."""
    L = sp.csr_matrix(L, dtype=complex, copy=True)
    L = L.tolil()
    L[row, :] = 0
    L = L.tocsr()
    tr = sp.csr_matrix(
        (np.ones(d, dtype=complex), (np.full(d, row), np.arange(d) * (d + 1))), shape=L.shape
    )
    return (L + tr).tocsc()


class FactorizedOperator:
    """Solve ``A x = b`` repeatedly for a fixed sparse ``A``.

    Parameters
    ----------
    A : sparse matrix
    perm : array, optional
        Symmetric fill-reducing permutation; ``None`` uses COLAMD.
    method : {"auto", "direct", "iterative"}
    rtol : float
        GMRES relative tolerance for the iterative path.
    """

    def __init__(self, A, perm=None, method="auto", rtol=1e-13, drop_tol=1e-6, fill_factor=20,
                 restart=200, maxiter=20):
        self.n = A.shape[0]
        if method == "auto":
            method = "direct" if self.n <= DIRECT_LIMIT else "iterative"
        if method not in ("direct", "iterative"):
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self.rtol = rtol
        self.restart = restart
        self.maxiter = maxiter
        self.iterations = 0
        self.perm = perm
        if perm is not None:
            self.iperm = np.argsort(perm)
            Ap = sp.csc_matrix(A)[perm][:, perm].tocsc()
            spec = "NATURAL"
        else:
            self.iperm = None
            Ap = sp.csc_matrix(A)
            spec = "COLAMD"
        self.Ap = Ap
        try:
            if method == "direct":
                opts = {"SymmetricMode": True} if perm is not None else {}
                self._lu = sla.splu(Ap, permc_spec=spec, diag_pivot_thresh=0.0 if perm is not None else 1.0,
                                    options=opts)
            else:
                self._lu = sla.spilu(Ap, drop_tol=drop_tol, fill_factor=fill_factor, permc_spec=spec,
                                     diag_pivot_thresh=0.0 if perm is not None else 0.1)
        except RuntimeError as exc:
            raise SolverError(f"sparse factorisation failed: {exc}") from exc

    def _solve_permuted(self, b):
        if self.method == "direct":
            return self._lu.solve(b)
        M = sla.LinearOperator(self.Ap.shape, matvec=self._lu.solve, dtype=complex)
        count = [0]

        def cb(_):
            count[0] += 1

        x0 = self._lu.solve(b)
        x, info = sla.gmres(self.Ap, b, x0=x0, M=M, rtol=self.rtol, atol=0.0, restart=self.restart,
                            maxiter=self.maxiter, callback=cb, callback_type="pr_norm")
        self.iterations += count[0]
        if info != 0:
            res = np.linalg.norm(self.Ap @ x - b) / max(np.linalg.norm(b), 1e-300)
            if res > 1e3 * self.rtol:
                raise SolverError(f"GMRES did not converge (info={info}, relative residual {res:.2e})")
        return x

    def solve(self, b):
        b = np.asarray(b, dtype=complex)
        if self.perm is None:
            return self._solve_permuted(b)
        return self._solve_permuted(b[self.perm])[self.iperm]
