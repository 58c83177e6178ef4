"""Steady states, time evolution and dark-state diagnostics."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from ._linalg import FactorizedOperator, bordered, nd_permutation
from .exceptions import (
    DegenerateSteadyStateError,
    DimensionError,
    ParameterError,
    SolverError,
)
from .fock import Truncation, coherent_state, mode_operators
from .model import (
    SystemParams,
    Superoperator,
    build_reduced_liouvillian,
    build_single_mode_liouvillian,
    derived_couplings,
    trace_row,
    unvec,
    vec,
)

__all__ = [
    "DensityMatrix",
    "SteadyMethod",
    "SteadyReport",
    "CutoffReport",
    "steady_state",
    "evolve",
    "dark_residual",
    "cutoff_report",
    "coherent_product_state",
    "fidelity_to_pure",
    "trace_distance",
    "partial_trace_atom",
    "solve_reduced",
    "PSD_CLIP",
]

# eigenvalues in [-PSD_CLIP, 0) are set to zero; anything more negative is an error
PSD_CLIP = 1e-8
CUTOFF_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Dense density matrix with subsystem dimensions.

    ``displacement = (beta_a, beta_b)`` records that ``data`` is expressed in
    the frame displaced by those coherent amplitudes, so that lab-frame mode
    operators act as ``a + beta_a`` on it.  Local-unitary invariants
    (negativity, fluctuation moments) are unaffected by the frame.
    """

    data: np.ndarray
    dims: tuple
    displacement: tuple = (0j, 0j)

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex)
        d = int(np.prod(self.dims))
        if arr.shape != (d, d):
            raise DimensionError(f"density matrix shape {arr.shape} does not match dims {self.dims}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "displacement", tuple(complex(x) for x in self.displacement))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def trunc(self) -> Truncation:
        da, db = self.dims[-2:]
        return Truncation(da - 1, db - 1)

    @property
    def displaced(self) -> bool:
        return any(self.displacement)

    def expect(self, op) -> complex:
        """``Tr(op rho)`` for a dense or sparse operator."""
        if sp.issparse(op):
            return complex((op.multiply(self.data.T)).sum())
        return complex(np.einsum("ij,ji->", np.asarray(op), self.data))

    def mode_operators(self):
        """Lab-frame ``(a, b)`` as they act in this state's frame."""
        if len(self.dims) != 2:
            raise DimensionError("mode operators are defined for two-mode states")
        a, b = mode_operators(self.trunc)
        I = sp.identity(self.dim, dtype=complex, format="csr")
        return (a + self.displacement[0] * I).tocsr(), (b + self.displacement[1] * I).tocsr()

    def validate(self, tol: float = 1e-10):
        herm = np.abs(self.data - self.data.conj().T).max()
        if herm > tol:
            raise ValueError(f"not Hermitian (deviation {herm:.2e})")
        tr = np.trace(self.data)
        if abs(tr - 1) > tol:
            raise ValueError(f"trace {tr} differs from 1")
        emin = la.eigvalsh(self.data).min()
        if emin < -PSD_CLIP:
            raise ValueError(f"not positive semidefinite (min eigenvalue {emin:.2e})")
        return self


class SteadyMethod(str, enum.Enum):
    NULL_SPACE = "NullSpace"
    LINEAR_SOLVE = "LinearSolve"
    TIME_EVOLUTION = "TimeEvolution"


@dataclass(frozen=True)
class CutoffReport:
    """Truncation diagnostics.

    ``joint_edge`` is the population of the outermost jointly excited shell
    ``min(n_a, n_b) = joint_max`` when a restricted basis was used.
    """

    top_population: tuple
    threshold: float
    adequate: bool
    recommended: Truncation
    joint_edge: float | None = None


@dataclass(frozen=True)
class SteadyReport:
    rho: DensityMatrix
    residual: float
    method: SteadyMethod
    iterations: int = 0
    cutoff: CutoffReport | None = None
    info: dict = field(default_factory=dict)


def _repair(rho: np.ndarray, clip: float = PSD_CLIP) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real
    w, V = la.eigh(rho)
    if w.min() < -clip:
        raise SolverError(f"steady state has eigenvalue {w.min():.2e} below -{clip:g}")
    if w.min() < 0:
        if w.min() < -1e-12:
            warnings.warn(f"clipping negative eigenvalues down to {w.min():.2e}", stacklevel=3)
        w = np.clip(w, 0, None)
        rho = (V * w) @ V.conj().T
        rho = rho / np.trace(rho).real
    return rho


def cutoff_report(rho, threshold: float = CUTOFF_THRESHOLD, step: int = 4,
                  joint_max: int | None = None) -> CutoffReport:
    """Population of the highest Fock level of each mode.

    The truncation is adequate when both values (and the joint-shell
    population for a restricted basis) are below ``threshold``; otherwise
    the recommendation is the cutoff enlarged by ``step``.
    """
    data = np.asarray(rho)
    dims = rho.dims if isinstance(rho, DensityMatrix) else Truncation.infer(data.shape[0]).dims
    p = np.real(np.diag(data)).reshape(dims)
    if len(dims) == 1:
        ok = p[-1] < threshold
        return CutoffReport((float(p[-1]),), threshold, ok, Truncation(dims[0] - 1 + (0 if ok else step), 0))
    if len(dims) == 3:
        p = p.sum(axis=0)
    top = (float(p[-1, :].sum()), float(p[:, -1].sum()))
    edge = None
    if joint_max is not None:
        na, nb = np.indices(p.shape)
        edge = float(p[np.minimum(na, nb) == joint_max].sum())
    ok = max(top) < threshold and (edge is None or edge < threshold)
    trunc = Truncation(dims[-2] - 1, dims[-1] - 1)
    rec = trunc if max(top) < threshold else trunc.enlarged(step)
    return CutoffReport(top, threshold, ok, rec, edge)


def _permutation(L: Superoperator):
    protected = (0,) if L.is_full else ()
    return nd_permutation(L.dims, protected, keep=L.keep)


def _finish(L, x, method, iterations, info, clip=PSD_CLIP):
    d = L.hilbert_dim
    rho = _repair(unvec(x, d), clip)
    residual = float(np.linalg.norm(L.matrix @ vec(rho)))
    joint_max = None
    if L.keep is not None:
        full = np.zeros((int(np.prod(L.dims)),) * 2, dtype=complex)
        full[np.ix_(L.keep, L.keep)] = rho
        rho = full
        joint_max = L.meta.get("joint_max")
    dm = DensityMatrix(rho, L.dims, L.displacement)
    return SteadyReport(dm, residual, method, iterations, cutoff_report(dm, joint_max=joint_max), info)


def _steady_linear(L: Superoperator, solver: str):
    d = L.hilbert_dim
    A = bordered(L.matrix, d, row=0)
    rhs = np.zeros(L.dim, dtype=complex)
    rhs[0] = 1.0
    try:
        fac = FactorizedOperator(A, perm=_permutation(L), method=solver)
        x = fac.solve(rhs)
    except (SolverError, RuntimeError) as exc:
        if "singular" in str(exc).lower():
            raise DegenerateSteadyStateError(2, f"bordered generator is singular: {exc}") from exc
        raise
    if not np.all(np.isfinite(x)):
        raise DegenerateSteadyStateError(2, "bordered generator is numerically singular")
    return x, fac.iterations, {"solver": fac.method}


def _steady_eigen(L: Superoperator, k: int = 3):
    """Null vector(s) by shift-invert; also estimates the null-space dimension."""
    n = L.dim
    scale = max(abs(L.matrix).max(), 1e-300)
    if n <= 1600:
        w, V = la.eig(L.matrix.toarray())
        order = np.argsort(np.abs(w))
        w, V = w[order], V[:, order]
    else:
        k = min(k, n - 2)
        sigma = 1e-9 * scale
        w, V = sla.eigs(L.matrix.tocsc(), k=k, sigma=sigma, which="LM", tol=1e-13)
        order = np.argsort(np.abs(w))
        w, V = w[order], V[:, order]
    null = np.abs(w) < 1e-10 * scale
    null_dim = int(null.sum())
    if null_dim > 1:
        raise DegenerateSteadyStateError(null_dim)
    if null_dim == 0 and abs(w[0]) > 1e-6 * scale:
        raise SolverError(f"no stationary eigenvalue found (smallest |lambda| = {abs(w[0]):.2e})")
    x = V[:, 0]
    tr = trace_row(L.hilbert_dim) @ x
    x = x / tr[0]
    return x, 0, {"eigenvalues": w[: min(4, len(w))].tolist()}


def steady_state(
    L: Superoperator,
    tol: float = 1e-9,
    method: str | SteadyMethod = SteadyMethod.LINEAR_SOLVE,
    *,
    solver: str = "auto",
    t_final: float | None = None,
    rho0=None,
) -> SteadyReport:
    """Stationary state of ``L``.

    Parameters
    ----------
    L : Superoperator
    tol : float
        Bound on ``||L vec(rho)||_2`` required for success.
    method : {"LinearSolve", "NullSpace", "TimeEvolution"}
        ``LinearSolve`` replaces one diagonal-index row of ``L`` by the trace
        functional and solves the resulting regular system.  ``NullSpace``
        computes the eigenvector(s) nearest zero and reports degeneracy.
        ``TimeEvolution`` propagates ``rho0`` (vacuum by default) to
        ``t_final``.
    solver : {"auto", "direct", "iterative"}
        Linear-solve backend; ``iterative`` is ILU-preconditioned GMRES.

    Raises
    ------
    DegenerateSteadyStateError
        If the stationary state is not unique.
    SolverError
        If the residual exceeds ``tol``.
    """
    method = SteadyMethod(method)
    if method is SteadyMethod.LINEAR_SOLVE:
        x, its, info = _steady_linear(L, solver)
    elif method is SteadyMethod.NULL_SPACE:
        x, its, info = _steady_eigen(L)
    else:
        if t_final is None:
            raise ParameterError("TimeEvolution needs t_final")
        d = L.hilbert_dim
        if rho0 is None:
            rho0 = np.zeros((d, d), dtype=complex)
            rho0[0, 0] = 1.0
        x = vec(evolve(L, rho0, t_final))
        its, info = 0, {"t_final": t_final}
    rep = _finish(L, x, method, its, info)
    if rep.residual > tol:
        raise SolverError(f"steady-state residual {rep.residual:.2e} exceeds tolerance {tol:.2e}")
    return rep


def evolve(L: Superoperator, rho0, t: float, tol: float = 1e-9) -> np.ndarray:
    """``unvec(exp(L t) vec(rho0))`` via scipy's Krylov-free action of the exponential."""
    if t < 0:
        raise ParameterError("t must be >= 0")
    if L.keep is not None:
        raise ParameterError("time evolution is not supported on a restricted basis")
    rho0 = np.asarray(rho0, dtype=complex)
    d = L.hilbert_dim
    if rho0.shape != (d, d):
        raise DimensionError(f"rho0 has shape {rho0.shape}, expected {(d, d)}")
    if t == 0:
        return rho0.copy()
    v = sla.expm_multiply(L.matrix.tocsc() * t, vec(rho0))
    rho = unvec(v, d)
    drift = abs(np.trace(rho) - np.trace(rho0))
    if drift > tol:
        raise SolverError(f"trace drift {drift:.2e} during evolution")
    return rho


def dark_residual(rho, Gamma: float, trunc: Truncation | None = None) -> float:
    """Frobenius norm of the two-photon-loss dissipator applied to ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    trunc = trunc or Truncation.infer(rho.shape[0])
    if rho.shape != (trunc.dim, trunc.dim):
        raise DimensionError(f"rho has shape {rho.shape}, expected {(trunc.dim, trunc.dim)}")
    a, b = mode_operators(trunc)
    c = (b @ a).toarray()
    cdc = c.conj().T @ c
    out = c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
    return float(Gamma * np.linalg.norm(out))


def coherent_product_state(p: SystemParams, trunc: Truncation, displacement=(0.0, 0.0)) -> np.ndarray:
    """Ket of the drive/loss steady state at zero two-photon loss.

    The amplitudes are ``alpha_k = -2i Omega_k / kappa_k``.  With a frame
    ``displacement`` the ket is returned in that frame, i.e. with amplitudes
    ``alpha_k - beta_k``.
    """
    if p.kappa_a <= 0 or p.kappa_b <= 0:
        raise ParameterError("closed form needs kappa_a, kappa_b > 0")
    ba, bb = displacement
    ca = coherent_state(-2j * p.Omega_a / p.kappa_a - ba, trunc.n_a_max).amplitudes
    cb = coherent_state(-2j * p.Omega_b / p.kappa_b - bb, trunc.n_b_max).amplitudes
    return np.kron(ca, cb)


def fidelity_to_pure(rho, ket) -> float:
    ket = np.asarray(ket, dtype=complex).ravel()
    return float(np.real(np.vdot(ket, np.asarray(rho) @ ket)))


def trace_distance(rho, sigma) -> float:
    diff = np.asarray(rho) - np.asarray(sigma)
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(la.eigvalsh(diff)).sum())


def partial_trace_atom(rho_full, trunc: Truncation) -> np.ndarray:
    """Trace over the atom of an ``atom (x) a (x) b`` density matrix."""
    r = np.asarray(rho_full).reshape(4, trunc.dim, 4, trunc.dim)
    return np.einsum("kikj->ij", r)


def _product_steady(p, trunc, include_eps_correction, beta, tol, solver):
    """Steady state of a generator without inter-mode coupling, mode by mode."""
    parts = []
    for mode, cutoff, b in (("a", trunc.n_a_max, beta[0]), ("b", trunc.n_b_max, beta[1])):
        Lm = build_single_mode_liouvillian(p, mode, cutoff, include_eps_correction, displacement=b)
        parts.append(steady_state(Lm, tol, solver=solver))
    rho = np.kron(parts[0].rho.data, parts[1].rho.data)
    dm = DensityMatrix(rho, trunc.dims, beta)
    L = build_reduced_liouvillian(p, trunc, include_eps_correction, displacement=beta)
    residual = float(np.linalg.norm(L.matrix @ vec(rho)))
    return SteadyReport(dm, residual, SteadyMethod.LINEAR_SOLVE, 0, cutoff_report(dm), {"solver": "product"})


def solve_reduced(
    p: SystemParams,
    trunc: Truncation,
    *,
    frame: str = "lab",
    include_eps_correction: bool = False,
    tol: float = 1e-9,
    solver: str = "auto",
    beta0=None,
    max_iter: int = 6,
    beta_tol: float = 1e-6,
    use_product: bool = True,
    joint_max: int | None = None,
) -> SteadyReport:
    """Build the reduced generator and solve for its steady state.

    Parameters
    ----------
    frame : {"lab", "displaced"}
        ``"displaced"`` works in the frame displaced by the mean fields,
        found self-consistently: starting from ``beta0`` (default: the
        zero-loss amplitudes ``-2i Omega_k / kappa_k``), solve, set
        ``beta_k = <a_k>`` and repeat until the update is below ``beta_tol``.
        The state is returned in the displaced frame (see
        :class:`DensityMatrix`).
    use_product : bool
        With ``Gamma = U = 0`` the modes are uncoupled; solve each mode on its
        own and take the tensor product.  The residual is still evaluated
        with the full two-mode generator.
    joint_max : int, optional
        Solve on the restricted basis ``min(n_a, n_b) <= joint_max`` (see
        :func:`~twophoton.fock.joint_basis`) and embed the result in the
        product space.  Ignored on the product route.
    """
    if frame not in ("lab", "displaced"):
        raise ParameterError(f"unknown frame {frame!r}")
    c = derived_couplings(p)
    product = use_product and c.Gamma == 0 and c.U == 0

    def solve(beta):
        if product:
            rep = _product_steady(p, trunc, include_eps_correction, beta, tol, solver)
            if rep.residual > tol:
                raise SolverError(f"steady-state residual {rep.residual:.2e} exceeds tolerance {tol:.2e}")
            return rep
        L = build_reduced_liouvillian(p, trunc, include_eps_correction, displacement=beta, joint_max=joint_max)
        return steady_state(L, tol, solver=solver)

    if frame == "lab":
        return solve((0j, 0j))
    if p.kappa_a <= 0 or p.kappa_b <= 0:
        raise ParameterError("displaced frame needs kappa_a, kappa_b > 0")
    if beta0 is None:
        beta0 = (-2j * p.Omega_a / p.kappa_a, -2j * p.Omega_b / p.kappa_b)
    beta = tuple(complex(x) for x in beta0)
    history = []
    for _ in range(max_iter):
        rep = solve(beta)
        a, b = rep.rho.mode_operators()
        new = (rep.rho.expect(a), rep.rho.expect(b))
        step = max(abs(new[0] - beta[0]), abs(new[1] - beta[1]))
        history.append(step)
        if step < beta_tol:
            break
        beta = new
    info = dict(rep.info, displacement_updates=history)
    return SteadyReport(rep.rho, rep.residual, rep.method, rep.iterations, rep.cutoff, info)
