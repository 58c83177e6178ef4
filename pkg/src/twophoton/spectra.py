"""Two-time correlators and two-mode squeezing spectra of the cavity fields.

Stationary correlators follow the quantum regression theorem::

    <X(tau) Y(0)> = Tr[X exp(L tau) (Y rho)],   <Y(0) X(tau)> = Tr[X exp(L tau) (rho Y)].

Their one-sided Fourier transforms are resolvents,
``int_0^inf exp(i w tau) Tr[X exp(L tau) M] dtau = -Tr[X (L + i w)^{-1} M]``,
which are well defined at every ``w`` because ``M`` is traceless: replacing one
diagonal-index row of ``L + i w`` by the trace functional (right-hand side 0)
removes the stationary direction without shifting the spectrum.

For many frequencies the resolvents are evaluated in a block Krylov space of
``L^{-1}`` built from the four source vectors, with an a posteriori residual
check at each frequency and a direct sparse solve as fallback.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from ._linalg import FactorizedOperator, bordered, nd_permutation
from .exceptions import DimensionError, NonStationaryError, ParameterError
from .model import Superoperator, unvec, vec
from .steady import DensityMatrix

__all__ = [
    "Side",
    "CorrelatorSpec",
    "SpectrumSeries",
    "ResolventEngine",
    "two_time_correlator",
    "squeezing_spectra",
    "time_domain_spectra",
    "integrated_cavity_check",
    "narrowband_output_criterion",
    "to_db",
    "default_omega_grid",
    "wide_omega_grid",
]

_IMAG_TOL = 1e-8


def to_db(S):
    """Homodyne noise relative to shot noise, ``10 log10(1 + S)``."""
    return 10 * np.log10(1 + np.asarray(S))


def default_omega_grid(n: int = 801, width: float = 0.2) -> np.ndarray:
    return np.linspace(-width, width, n)


def wide_omega_grid(scale: float, width: float, n_half: int = 2000) -> np.ndarray:
    """Symmetric grid, uniform near zero (spacing ~ ``scale / 20``) and stretched out to ``width``.

    ``omega = scale * sinh(t)`` on a uniform ``t`` grid, so Lorentzian tails
    are resolved at a cost logarithmic in ``width``.
    """
    tmax = np.arcsinh(width / scale)
    t = np.linspace(0.0, tmax, n_half + 1)
    pos = scale * np.sinh(t)
    return np.concatenate([-pos[:0:-1], pos])


class Side(str, enum.Enum):
    RIGHT = "RightActing"  # <A(t+tau) B(t)>
    LEFT = "LeftActing"  # <B(t) A(t+tau)>


@dataclass(frozen=True)
class CorrelatorSpec:
    """Stationary correlator of mean-subtracted operators.

    ``RightActing``: ``phase * <dA(t+tau) dB(t)>``;
    ``LeftActing``: ``phase * <dB(t) dA(t+tau)>``.
    """

    left_op: object
    right_op: object
    side: Side = Side.RIGHT
    phase: complex = 1.0


@dataclass(frozen=True)
class SpectrumSeries:
    omega_grid: np.ndarray
    S_u: np.ndarray
    S_v: np.ndarray
    phi: float
    kappa: float
    imag_residual_max: float = 0.0
    info: dict = field(default_factory=dict, compare=False)

    def at(self, omega: float = 0.0) -> tuple[float, float]:
        """Linear interpolation of ``(S_u, S_v)`` at ``omega``."""
        return (float(np.interp(omega, self.omega_grid, self.S_u)),
                float(np.interp(omega, self.omega_grid, self.S_v)))

    def db(self):
        return to_db(self.S_u), to_db(self.S_v)

    def parity_error(self) -> float:
        """``max |S(w) - S(-w)|`` over grid points whose mirror is on the grid."""
        w = self.omega_grid
        idx = np.searchsorted(w, -w)
        ok = (idx < len(w)) & (np.abs(w[np.minimum(idx, len(w) - 1)] + w) <= 1e-12 * max(1.0, np.abs(w).max()))
        if not ok.any():
            return 0.0
        i, j = np.nonzero(ok)[0], idx[ok]
        return float(max(np.abs(self.S_u[i] - self.S_u[j]).max(), np.abs(self.S_v[i] - self.S_v[j]).max()))


def _rho_and_ops(L: Superoperator, rho_ss):
    if len(L.dims) != 2:
        raise DimensionError("spectra are defined for the two-mode model")
    if L.keep is not None:
        raise ParameterError("spectra need a generator on the full product basis")
    if isinstance(rho_ss, DensityMatrix):
        if tuple(rho_ss.displacement) != tuple(L.displacement):
            raise ParameterError("state and generator are expressed in different frames")
        a, b = rho_ss.mode_operators()
        return rho_ss.data, a, b
    rho = np.asarray(rho_ss, dtype=complex)
    dm = DensityMatrix(rho, L.dims, L.displacement)
    a, b = dm.mode_operators()
    return rho, a, b


def _check_stationary(L, rho, tol):
    res = float(np.linalg.norm(L.matrix @ vec(rho)))
    if res > tol:
        raise NonStationaryError(f"||L rho|| = {res:.2e} exceeds {tol:.2e}; not a steady state")
    return res


def _delta(op, rho):
    op = sp.csr_matrix(op, dtype=complex)
    m = complex((op.multiply(rho.T)).sum())
    return (op - m * sp.identity(op.shape[0], dtype=complex, format="csr")).tocsr()


def _source(dA, dB, rho, side):
    """Source vector ``M`` and observable ``X`` for a correlator spec."""
    M = dB @ rho if side is Side.RIGHT else (dB.T @ rho.T).T
    return vec(np.asarray(M)), dA


def _trace_with(X, v, d):
    """``Tr[X unvec(v)]`` for sparse ``X``."""
    m = unvec(v, d)
    return complex((X.multiply(m.T)).sum())


def two_time_correlator(L: Superoperator, rho_ss, spec: CorrelatorSpec, tau_grid, *, tol: float = 1e-8):
    """Stationary two-time correlator on ``tau_grid`` by propagating the source.

    Returns a complex array ``C(tau)`` (see :class:`CorrelatorSpec`).
    """
    rho, _, _ = _rho_and_ops(L, rho_ss)
    _check_stationary(L, rho, tol)
    tau = np.asarray(tau_grid, dtype=float)
    if np.any(tau < 0):
        raise ParameterError("tau_grid must be non-negative")
    dA = _delta(spec.left_op, rho)
    dB = _delta(spec.right_op, rho)
    v, X = _source(dA, dB, rho, Side(spec.side))
    d = L.hilbert_dim
    order = np.argsort(tau)
    out = np.empty(len(tau), dtype=complex)
    A = L.matrix.tocsc()
    t_prev = 0.0
    for k in order:
        dt = tau[k] - t_prev
        if dt > 0:
            v = sla.expm_multiply(A * dt, v)
        t_prev = tau[k]
        out[k] = _trace_with(X, v, d)
    return spec.phase * out


class ResolventEngine:
    """Evaluate ``-Tr[X (L + i w)^{-1} M]`` for fixed sources over many ``w``.

    Parameters
    ----------
    L : Superoperator
    sources : list of ndarray
        Traceless vectorised source operators ``M``.
    krylov_steps : int
        Number of block steps of the shift-invert Krylov space.
    residual_tol : float
        Relative residual accepted from the projected solve before falling
        back to a direct solve at that frequency.
    """

    def __init__(self, L: Superoperator, sources, krylov_steps: int = 50, residual_tol: float = 1e-9,
                 solver: str = "auto"):
        self.L = L
        self.A = L.matrix.tocsr()
        self.d = L.hilbert_dim
        self.n = L.dim
        self.residual_tol = residual_tol
        self.solver = solver
        self.sources = [np.asarray(s, dtype=complex) for s in sources]
        self.perm = nd_permutation(L.dims)
        self.fallbacks = 0
        self._factor = FactorizedOperator(bordered(self.A, self.d), self.perm, method=solver)
        self._build(krylov_steps)

    def _T(self, v):
        v = v.copy()
        v[0] = 0.0
        return self._factor.solve(v)

    def _build(self, steps):
        B = np.column_stack(self.sources)
        V, _ = np.linalg.qr(B)
        blocks = [V]
        cur = V
        for _ in range(steps):
            W = np.column_stack([self._T(cur[:, j]) for j in range(cur.shape[1])])
            Vall = np.hstack(blocks)
            for _ in range(2):
                W -= Vall @ (Vall.conj().T @ W)
            Q, R = np.linalg.qr(W)
            keep = np.abs(np.diag(R)) > 1e-12 * max(1.0, np.abs(R).max())
            if not keep.any():
                break
            blocks.append(Q[:, keep])
            cur = Q[:, keep]
        self.V = np.hstack(blocks)
        self.LV = np.asarray(self.A @ self.V)
        H = self.V.conj().T @ self.LV
        self.evals, self.S = la.eig(H)
        self.Sinv = la.inv(self.S)
        self.coef = [self.Sinv @ (self.V.conj().T @ s) for s in self.sources]
        self.snorm = [np.linalg.norm(s) for s in self.sources]

    def _direct(self, w, M):
        Aw = (self.A + 1j * w * sp.identity(self.n, dtype=complex, format="csr")).tocsr()
        fac = FactorizedOperator(bordered(Aw, self.d), self.perm, method=self.solver)
        rhs = M.copy()
        rhs[0] = 0.0
        return fac.solve(rhs)

    def solve(self, w: float, k: int):
        """``(L + i w)^{-1} M_k`` and its relative residual."""
        y = self.S @ (self.coef[k] / (self.evals + 1j * w))
        r = self.LV @ y + 1j * w * (self.V @ y) - self.sources[k]
        res = np.linalg.norm(r) / max(self.snorm[k], 1e-300)
        x = self.V @ y
        if res > self.residual_tol:
            self.fallbacks += 1
            x = self._direct(w, self.sources[k])
            res = np.linalg.norm(self.A @ x + 1j * w * x - self.sources[k]) / max(self.snorm[k], 1e-300)
        return x, res

    def transform(self, X, k: int, omegas):
        """``-Tr[X (L + i w)^{-1} M_k]`` for each ``w``; also the worst residual."""
        out = np.empty(len(omegas), dtype=complex)
        worst = 0.0
        for i, w in enumerate(omegas):
            x, res = self.solve(float(w), k)
            worst = max(worst, res)
            out[i] = -_trace_with(X, x, self.d)
        return out, worst


def _quadrature_terms(rho, a, b, phi):
    """Observables, sources and phase weights for S_u (f = da + db) and S_v (g = da - db)."""
    da, db = _delta(a, rho), _delta(b, rho)
    f = (da + db).tocsr()
    g = (da - db).tocsr()
    e = np.exp(-2j * phi)
    terms = {}
    for name, op, s in (("u", f, 1.0), ("v", g, -1.0)):
        opd = op.conj().T.tocsr()
        src_r = vec(np.asarray(op @ rho))  # op rho
        src_l = vec(np.asarray((opd.T @ rho.T).T))  # rho op^dag
        # (observable, source, weight): <op(tau) op>, <op^dag op(tau)>, <op^dag(tau) op>, <op^dag op^dag(tau)>
        terms[name] = [(op, src_r, s * e), (op, src_l, 1.0), (opd, src_r, 1.0), (opd, src_l, s * np.conj(e))]
    return terms


def _kappa(L):
    p = L.meta.get("params")
    if p is None:
        raise ParameterError("generator carries no parameters; cannot read kappa")
    if p.kappa_a != p.kappa_b:
        raise ParameterError("squeezing spectra need kappa_a == kappa_b")
    return p.kappa_a


def squeezing_spectra(
    L: Superoperator,
    rho_ss,
    phi: float,
    omega_grid,
    *,
    method: str = "krylov",
    krylov_steps: int = 50,
    tol: float = 1e-8,
    solver: str = "auto",
) -> SpectrumSeries:
    """Two-mode squeezing spectra ``S_u(w)``, ``S_v(w)`` of the cavity fields.

    ``S(w) = 2 kappa int_0^inf cos(w tau) C(tau) dtau`` with ``C`` the
    normally and time ordered fluctuation correlator of ``u`` (built from
    ``f = a + b``) or ``v`` (from ``g = a - b``) at quadrature phase ``phi``.

    Parameters
    ----------
    method : {"krylov", "direct"}
        ``"direct"`` factorises ``L + i w`` at every frequency.
    """
    kappa = _kappa(L)
    rho, a, b = _rho_and_ops(L, rho_ss)
    stat_res = _check_stationary(L, rho, tol)
    omegas = np.asarray(omega_grid, dtype=float)
    both = np.concatenate([omegas, -omegas])
    terms = _quadrature_terms(rho, a, b, phi)
    sources = [terms["u"][0][1], terms["u"][1][1], terms["v"][0][1], terms["v"][1][1]]
    src_index = {("u", 0): 0, ("u", 1): 1, ("v", 0): 2, ("v", 1): 3}
    info = {"stationary_residual": stat_res, "method": method}
    if method == "krylov":
        eng = ResolventEngine(L, sources, krylov_steps, solver=solver)
    elif method == "direct":
        eng = _DirectEngine(L, sources, solver)
    else:
        raise ParameterError(f"unknown method {method!r}")
    out = {}
    worst = 0.0
    for name in ("u", "v"):
        total = np.zeros(len(both), dtype=complex)
        for j, (X, _, wgt) in enumerate(terms[name]):
            k = src_index[(name, j % 2)]
            vals, res = eng.transform(X, k, both)
            worst = max(worst, res)
            total += wgt * vals
        n = len(omegas)
        out[name] = 0.5 * kappa * (total[:n] + total[n:])
    imag = max(np.abs(out["u"].imag).max(initial=0.0), np.abs(out["v"].imag).max(initial=0.0))
    if imag > _IMAG_TOL:
        raise ParameterError(f"spectra have imaginary residual {imag:.2e}")
    info.update(resolvent_residual=worst, fallbacks=getattr(eng, "fallbacks", 0),
                krylov_dim=getattr(eng, "V", np.empty((0, 0))).shape[1])
    return SpectrumSeries(omegas, out["u"].real.copy(), out["v"].real.copy(), float(phi), float(kappa),
                          float(imag), info)


class _DirectEngine:
    def __init__(self, L, sources, solver):
        self.A = L.matrix.tocsr()
        self.d = L.hilbert_dim
        self.n = L.dim
        self.sources = sources
        self.perm = nd_permutation(L.dims)
        self.solver = solver
        self._cache = {}

    def _fac(self, w):
        if w not in self._cache:
            Aw = (self.A + 1j * w * sp.identity(self.n, dtype=complex, format="csr")).tocsr()
            self._cache = {w: FactorizedOperator(bordered(Aw, self.d), self.perm, method=self.solver)}
        return self._cache[w]

    def transform(self, X, k, omegas):
        out = np.empty(len(omegas), dtype=complex)
        worst = 0.0
        M = self.sources[k]
        for i, w in enumerate(omegas):
            rhs = M.copy()
            rhs[0] = 0.0
            x = self._fac(float(w)).solve(rhs)
            res = np.linalg.norm(self.A @ x + 1j * w * x - M) / max(np.linalg.norm(M), 1e-300)
            worst = max(worst, res)
            out[i] = -_trace_with(X, x, self.d)
        return out, worst


def time_domain_spectra(
    L: Superoperator,
    rho_ss,
    phi: float,
    omega_grid,
    *,
    panel: float | None = None,
    order: int = 24,
    decay_tol: float = 1e-14,
    tau_max: float = 1e6,
    tol: float = 1e-8,
) -> SpectrumSeries:
    """Squeezing spectra by explicit quadrature of the regression correlators.

    The correlators are propagated panel by panel with dense matrix
    exponentials and integrated against ``cos(w tau)`` with Gauss-Legendre
    nodes.  Propagation stops when the propagated sources have decayed below
    ``decay_tol`` relative to their initial norm.  Intended for small
    truncations (dense ``d^2 x d^2`` exponentials).
    """
    kappa = _kappa(L)
    rho, a, b = _rho_and_ops(L, rho_ss)
    _check_stationary(L, rho, tol)
    if L.dim > 5000:
        raise DimensionError("time-domain spectra use dense propagators; truncation too large")
    omegas = np.asarray(omega_grid, dtype=float)
    terms = _quadrature_terms(rho, a, b, phi)
    A = L.matrix.toarray()
    if panel is None:
        rate = np.abs(A).sum(axis=0).max()
        panel = min(20.0 / max(rate, 1e-12), 50.0)
        panel = max(panel, 1.0)
        if omegas.size:
            panel = min(panel, 2.0 / max(np.abs(omegas).max(), 1e-12) * 10)
    x, wq = np.polynomial.legendre.leggauss(order)
    nodes = 0.5 * panel * (x + 1)
    weights = 0.5 * panel * wq
    P_nodes = [la.expm(A * t) for t in nodes]
    P_panel = la.expm(A * panel)
    out = {}
    taus_used = 0.0
    for name in ("u", "v"):
        vs = [src for (_, src, _) in terms[name][:2]]
        V = np.column_stack(vs)
        norm0 = np.linalg.norm(V, axis=0).max()
        obs = [(X.toarray().T.ravel(order="F"), k % 2, wgt) for k, (X, _, wgt) in enumerate(terms[name])]
        total = np.zeros(len(omegas), dtype=complex)
        t0 = 0.0
        while t0 < tau_max:
            for tj, wj, Pj in zip(nodes, weights, P_nodes):
                Vt = Pj @ V
                tau = t0 + tj
                c = 0.0
                for xrow, k, wgt in obs:
                    c = c + wgt * (xrow @ Vt[:, k])
                total += wj * np.cos(omegas * tau) * c
            V = P_panel @ V
            t0 += panel
            if np.linalg.norm(V, axis=0).max() < decay_tol * norm0:
                break
        taus_used = max(taus_used, t0)
        # C = 1/2 [...], S = 2 kappa int cos C
        out[name] = kappa * total
    imag = max(np.abs(out["u"].imag).max(initial=0.0), np.abs(out["v"].imag).max(initial=0.0))
    return SpectrumSeries(omegas, out["u"].real.copy(), out["v"].real.copy(), float(phi), float(kappa),
                          float(imag), {"method": "time-domain", "tau_max": taus_used, "panel": panel})


def integrated_cavity_check(series: SpectrumSeries, rho_ss, *, edge_tol: float = 1e-4) -> tuple[float, float]:
    """Both sides of the integral identity for the cavity EPR variance.

    Returns ``(lhs, rhs)`` with ``lhs = (1/(2 pi kappa)) int (S_u + S_v) dw``
    (trapezoid rule on the series grid) and ``rhs`` the normally ordered EPR
    variance of ``rho_ss`` at the series phase.  Warns if the spectra at the
    grid edges exceed ``edge_tol`` times their maximum.
    """
    from .entanglement import duan_variance

    s = series.S_u + series.S_v
    peak = np.abs(s).max(initial=0.0)
    if peak > 1e-12 and max(abs(s[0]), abs(s[-1])) > edge_tol * peak:
        warnings.warn("omega grid too narrow: spectra have not decayed at the edges", stacklevel=2)
    lhs = float(np.trapezoid(s, series.omega_grid)) / (2 * np.pi * series.kappa)
    rhs = duan_variance(rho_ss, series.phi).variance
    return lhs, rhs


def narrowband_output_criterion(series: SpectrumSeries, delta_omega: float) -> float:
    """Band average ``(1/dw) int_{-dw/2}^{dw/2} (S_u + S_v) dw``.

    Negative values certify entanglement of the narrow-band output modes.
    For ``delta_omega`` below the grid spacing this is ``S_u(0) + S_v(0)``.
    """
    if delta_omega <= 0:
        raise ParameterError("delta_omega must be positive")
    w = series.omega_grid
    s = series.S_u + series.S_v
    h = np.min(np.diff(w)) if len(w) > 1 else np.inf
    if delta_omega <= h:
        return float(np.interp(0.0, w, s))
    fine = np.linspace(-delta_omega / 2, delta_omega / 2, 201)
    return float(np.trapezoid(np.interp(fine, w, s), fine) / delta_omega)
