"""Entanglement diagnostics for two-mode density matrices."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .exceptions import DimensionError, ParameterError, SolverError
from .fock import Truncation, ces_state, mode_operators
from .steady import DensityMatrix

__all__ = [
    "DuanResult",
    "CesFit",
    "partial_transpose_a",
    "negativity",
    "fluctuation_moments",
    "duan_variance",
    "unordered_epr_variance",
    "optimize_phase",
    "fock_populations",
    "mean_photon_number",
    "fidelity",
    "fit_ces_mixture",
]

_IMAG_TOL = 1e-10


def _unpack(rho, trunc):
    """Dense array, truncation and lab-frame (a, b) for ``rho``."""
    if isinstance(rho, DensityMatrix):
        if len(rho.dims) != 2:
            raise DimensionError("expected a two-mode density matrix")
        t = rho.trunc
        if trunc is not None and trunc != t:
            raise DimensionError(f"truncation {trunc} does not match state dims {rho.dims}")
        a, b = rho.mode_operators()
        return rho.data, t, a, b
    data = np.asarray(rho, dtype=complex)
    t = trunc or Truncation.infer(data.shape[0])
    if data.shape != (t.dim, t.dim):
        raise DimensionError(f"rho has shape {data.shape}, expected {(t.dim, t.dim)}")
    a, b = mode_operators(t)
    return data, t, a, b


def partial_transpose_a(rho, trunc: Truncation | None = None) -> np.ndarray:
    """Partial transpose with respect to mode ``a``.

    ``<m_a n_b| rho^{T_a} |m'_a n'_b> = <m'_a n_b| rho |m_a n'_b>``.
    """
    data, t, _, _ = _unpack(rho, trunc)
    r = data.reshape(t.dim_a, t.dim_b, t.dim_a, t.dim_b)
    return r.transpose(2, 1, 0, 3).reshape(t.dim, t.dim)


def negativity(rho, trunc: Truncation | None = None) -> float:
    """``(||rho^{T_a}||_1 - 1) / 2``; positive values certify entanglement."""
    pt = partial_transpose_a(rho, trunc)
    pt = 0.5 * (pt + pt.conj().T)
    return float((np.abs(la.eigvalsh(pt)).sum() - 1.0) / 2.0)


@dataclass(frozen=True)
class DuanResult:
    """Normally ordered total EPR variance at quadrature phase ``phi``.

    ``entangled_flag`` is true when the variance is negative.
    """

    phi: float
    variance: float
    entangled_flag: bool
    imag_residual: float = 0.0


def fluctuation_moments(rho, trunc: Truncation | None = None) -> dict:
    """Second moments of the mean-subtracted mode operators.

    Returns ``{"ada": <da^dag da>, "bdb": <db^dag db>, "ab": <da db>,
    "mean_a": <a>, "mean_b": <b>}`` with ``da = a - <a>``.
    """
    data, _, a, b = _unpack(rho, trunc)

    def ex(op):
        return complex((op.multiply(data.T)).sum())

    ma, mb = ex(a), ex(b)
    ada = ex(a.conj().T @ a) - abs(ma) ** 2
    bdb = ex(b.conj().T @ b) - abs(mb) ** 2
    ab = ex(a @ b) - ma * mb
    return {"ada": ada, "bdb": bdb, "ab": ab, "mean_a": ma, "mean_b": mb}


def _duan_from_moments(m, phi):
    val = 2 * (m["ada"] + m["bdb"] + m["ab"] * np.exp(-2j * phi) + np.conj(m["ab"]) * np.exp(2j * phi))
    return val


def duan_variance(rho, phi: float = np.pi / 2, trunc: Truncation | None = None) -> DuanResult:
    """Normally ordered total variance of the EPR operators ``x_a + x_b`` and ``p_a - p_b``.

    ``2[<da^dag da> + <db^dag db> + <da db> e^{-2i phi} + <da^dag db^dag> e^{2i phi}]``;
    negative values certify entanglement.
    """
    m = fluctuation_moments(rho, trunc)
    ada_bdb_imag = abs(m["ada"].imag) + abs(m["bdb"].imag)
    val = _duan_from_moments(m, phi)
    resid = max(abs(val.imag), ada_bdb_imag)
    if resid > _IMAG_TOL * max(1.0, abs(val)):
        raise SolverError(f"EPR variance has imaginary part {resid:.2e}; rho is not Hermitian")
    return DuanResult(float(phi), float(val.real), bool(val.real < 0), float(resid))


def unordered_epr_variance(rho, phi: float = np.pi / 2, trunc: Truncation | None = None) -> float:
    """``<(du)^2 + (dv)^2>`` built from explicit quadrature matrices (no normal ordering).

    Equals :func:`duan_variance` + 2 when the truncation edge is unpopulated.
    """
    data, t, a, b = _unpack(rho, trunc)
    a, b = a.toarray(), b.toarray()
    e = np.exp(-1j * phi)
    xa = (a * e + a.conj().T * np.conj(e)) / np.sqrt(2)
    pa = (a * e - a.conj().T * np.conj(e)) / (np.sqrt(2) * 1j)
    xb = (b * e + b.conj().T * np.conj(e)) / np.sqrt(2)
    pb = (b * e - b.conj().T * np.conj(e)) / (np.sqrt(2) * 1j)
    I = np.eye(t.dim)
    out = 0.0
    for X in (xa + xb, pa - pb):
        dX = X - np.trace(X @ data) * I
        out += np.trace(dX @ dX @ data)
    return float(out.real)


def optimize_phase(rho, trunc: Truncation | None = None) -> DuanResult:
    """Phase minimising the EPR variance, in closed form.

    The minimum is ``2[<da^dag da> + <db^dag db> - 2|<da db>|]`` at
    ``phi* = (pi + arg<da db>) / 2`` (reduced to ``[0, pi)``).
    """
    m = fluctuation_moments(rho, trunc)
    phi = float(np.mod((np.pi + np.angle(m["ab"])) / 2, np.pi))
    return duan_variance(rho, phi, trunc)


def fock_populations(rho, trunc: Truncation | None = None) -> np.ndarray:
    """Photon-number distribution ``P[n_a, n_b]``.

    Only defined for lab-frame states; displaced-frame states must be
    transformed back first.
    """
    if isinstance(rho, DensityMatrix) and rho.displaced:
        raise ParameterError("Fock populations need a lab-frame state (displacement is non-zero)")
    data, t, _, _ = _unpack(rho, trunc)
    return np.real(np.diag(data)).reshape(t.dim_a, t.dim_b).copy()


def mean_photon_number(rho, trunc: Truncation | None = None) -> float:
    """``<a^dag a + b^dag b>`` (valid in any frame)."""
    data, _, a, b = _unpack(rho, trunc)
    n = a.conj().T @ a + b.conj().T @ b
    return float(np.real((n.multiply(data.T)).sum()))


def _sqrt_psd(rho):
    w, V = la.eigh(0.5 * (rho + rho.conj().T))
    # round-off eigenvalues would otherwise contribute O(sqrt(eps))
    w = np.where(w > 1e-14 * max(w.max(), 1e-300), w, 0.0)
    return (V * np.sqrt(w)) @ V.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    s = _sqrt_psd(np.asarray(rho))
    m = s @ np.asarray(sigma) @ s
    w = la.eigvalsh(0.5 * (m + m.conj().T))
    return float(np.sqrt(np.clip(w, 0, None)).sum() ** 2)


@dataclass(frozen=True)
class CesFit:
    """Two-branch coherent-entangled-state mixture fitted to a density matrix.

    Attributes
    ----------
    p1, p2 : float
        Weights of the symmetric (``+``) and antisymmetric (``-``) branches.
    alpha1, alpha2 : complex
        Fitted amplitudes of the two branches.
    overlap : float
        Similarity between ``rho`` and the fit according to ``metric``.
    metric : {"fidelity", "trace"}
        ``"trace"`` is ``1 - ||rho - rho_fit||_1 / 2`` with the unnormalised
        ``rho_fit = p1 P+ + p2 P-``; ``"fidelity"`` is the Uhlmann fidelity
        with ``rho_fit / Tr rho_fit``.
    trace_overlap, fidelity : float
        Both metrics, whatever ``metric`` selects.
    branch_overlaps : tuple of float
        ``|<CES+-(alpha_i)|v_i>|^2`` for the fitted eigenvectors.
    """

    p1: float
    p2: float
    alpha1: complex
    alpha2: complex
    overlap: float
    metric: str = "trace"
    trace_overlap: float = float("nan")
    fidelity: float = float("nan")
    branch_overlaps: tuple = ()
    converged: bool = True
    rho_fit: np.ndarray = field(default=None, repr=False, compare=False)


def _parity_sectors(rho, t):
    """Leading (eigenvalue, eigenvector) in the even and odd mode-swap sectors.

    Returns ``None`` when the truncation is not square or ``rho`` mixes the
    two sectors.
    """
    if t.n_a_max != t.n_b_max:
        return None
    n = t.dim_a
    i, j = np.triu_indices(n)
    # orthonormal bases of the symmetric and antisymmetric subspaces
    even = np.zeros((t.dim, i.size))
    even[i * n + j, np.arange(i.size)] += 1.0
    even[j * n + i, np.arange(i.size)] += 1.0
    even /= np.linalg.norm(even, axis=0)
    i, j = np.triu_indices(n, k=1)
    odd = np.zeros((t.dim, i.size))
    odd[i * n + j, np.arange(i.size)] = 1.0 / np.sqrt(2)
    odd[j * n + i, np.arange(i.size)] = -1.0 / np.sqrt(2)
    if odd.shape[1] == 0 or np.abs(even.T @ rho @ odd).max() > 1e-8:
        return None
    out = []
    for B in (even, odd):
        w, U = la.eigh(B.T @ rho @ B)
        out.append((w[-1], B @ U[:, -1]))
    return out


def _seed(v, t):
    c00, c10, c20 = v[0], v[t.dim_b], v[2 * t.dim_b] if t.n_a_max >= 2 else 0
    if abs(c10) > 1e-12 and t.n_a_max >= 2:
        return np.sqrt(2) * c20 / c10
    if abs(c00) > 1e-12:
        return 2 * c10 / c00
    return 1.0


def _fit_branch(v, sign, t, alpha0, tol):
    def neg_overlap(x):
        try:
            psi = ces_state(complex(x[0], x[1]), sign, t).amplitudes
        except Exception:
            return 1.0
        return -abs(np.vdot(psi, v)) ** 2

    x0 = np.array([alpha0.real, alpha0.imag])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = minimize(neg_overlap, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": tol, "maxiter": 4000, "initial_simplex":
                                np.array([x0, x0 + [0.1, 0], x0 + [0, 0.1]])})
    alpha = complex(res.x[0], res.x[1])
    return alpha, -float(res.fun), bool(res.success)


def fit_ces_mixture(
    rho,
    trunc: Truncation | None = None,
    *,
    alpha0=None,
    metric: str = "trace",
    tol: float = 1e-8,
) -> CesFit:
    """Fit ``p1 |CES+(alpha1)><.| + p2 |CES-(alpha2)><.|`` to ``rho``.

    The two branches are matched to eigenvectors of ``rho`` with even and
    odd mode-swap parity (for symmetric truncations); otherwise the two
    leading eigenvectors are used in order.  Each amplitude is found by a
    simplex search over ``(Re alpha, Im alpha)`` maximising the overlap with
    its eigenvector, seeded by ``alpha0`` or by the eigenvector's low Fock
    amplitudes.
    """
    if metric not in ("fidelity", "trace"):
        raise ParameterError("metric must be 'fidelity' or 'trace'")
    data, t, _, _ = _unpack(rho, trunc)
    if isinstance(rho, DensityMatrix) and rho.displaced:
        raise ParameterError("CES fit needs a lab-frame state")
    herm = 0.5 * (data + data.conj().T)
    w, V = la.eigh(herm)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    sectors = _parity_sectors(herm, t)
    if sectors is not None:
        (w1, v1), (w2, v2) = sectors
    else:
        w1, w2, v1, v2 = w[0], w[1], V[:, 0], V[:, 1]
    if abs(w[0] - w[1]) < 1e-8 * max(abs(w[0]), 1e-300):
        warnings.warn("leading eigenvalues are degenerate; branch assignment may be arbitrary", stacklevel=2)
    p1, p2 = float(w1), float(w2)
    seeds = alpha0 if alpha0 is not None else (_seed(v1, t), _seed(v2, t))
    if np.isscalar(seeds):
        seeds = (seeds, seeds)
    a1, o1, ok1 = _fit_branch(v1, +1, t, complex(seeds[0]), tol)
    a2, o2, ok2 = _fit_branch(v2, -1, t, complex(seeds[1]), tol)
    k1 = ces_state(a1, +1, t).amplitudes
    k2 = ces_state(a2, -1, t).amplitudes
    rho_fit = p1 * np.outer(k1, k1.conj()) + p2 * np.outer(k2, k2.conj())
    diff = data - rho_fit
    tr_ov = 1.0 - 0.5 * float(np.abs(la.eigvalsh(0.5 * (diff + diff.conj().T))).sum())
    fid = fidelity(data, rho_fit / np.trace(rho_fit).real)
    ov = fid if metric == "fidelity" else tr_ov
    return CesFit(p1, p2, a1, a2, ov, metric, tr_ov, fid, (o1, o2), ok1 and ok2, rho_fit)
