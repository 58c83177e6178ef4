"""Physical parameters and Liouvillian assembly for the reduced and full models.

All rates and detunings are dimensionless, in units of ``gamma42``.

Vectorisation is column stacking: ``vec(rho)[i + d*j] = rho[i, j]``.  For a
Hamiltonian ``H`` and jump operators ``C_k`` the generator is::

    L = -i (I (x) H - H^T (x) I)
        + sum_k [conj(C_k) (x) C_k - 1/2 I (x) C_k^dag C_k - 1/2 (C_k^dag C_k)^T (x) I]
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, ParameterError
from .fock import (
    N_ATOM_LEVELS,
    annihilation_op,
    Truncation,
    full_operators,
    identity,
    joint_basis,
    mode_operators,
)

__all__ = [
    "SystemParams",
    "DerivedCouplings",
    "Superoperator",
    "derived_couplings",
    "lindblad",
    "build_reduced_liouvillian",
    "build_gamma_dissipator",
    "build_single_mode_liouvillian",
    "build_full_liouvillian",
    "apply",
    "vec",
    "unvec",
    "trace_row",
    "MAX_VEC_DIM",
]

# default guard on the vectorised dimension (d^2)
MAX_VEC_DIM = 2_000_000

_COMPLEX_FIELDS = ("Omega_a", "Omega_b", "Omega_L", "g_a", "g_b")


@dataclass(frozen=True)
class SystemParams:
    """Model parameters in units of ``gamma42``.

    Parameters
    ----------
    gamma31, gamma32, gamma42 : float
        Atomic decay rates ``|3> -> |1>``, ``|3> -> |2>`` and ``|4> -> |2>``.
    kappa_a, kappa_b : float
        Cavity field decay rates.
    Omega_a, Omega_b : complex
        Cavity drive Rabi frequencies.
    Omega_L : complex
        Laser Rabi frequency on ``|2> <-> |3>``.
    g_a, g_b : complex
        Atom-cavity couplings on ``|1> <-> |3>`` and ``|2> <-> |4>``.
    delta, Delta, epsilon : float
        Detunings.
    """

    gamma31: float = 1.0
    gamma32: float = 1.0
    gamma42: float = 1.0
    kappa_a: float = 1e-2
    kappa_b: float = 1e-2
    Omega_a: complex = 0.0
    Omega_b: complex = 0.0
    Omega_L: complex = 1.0
    g_a: complex = 0.0
    g_b: complex = 0.0
    delta: float = 0.0
    Delta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in _COMPLEX_FIELDS:
                v = complex(v)
                if not np.isfinite(v):
                    raise ParameterError(f"{f.name} must be finite")
            else:
                if isinstance(v, complex):
                    raise ParameterError(f"{f.name} must be real")
                v = float(v)
                if not np.isfinite(v):
                    raise ParameterError(f"{f.name} must be finite")
            object.__setattr__(self, f.name, v)
        for name in ("gamma31", "gamma32", "gamma42", "kappa_a", "kappa_b"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if self.gamma42 <= 0:
            raise ParameterError("gamma42 must be > 0")

    @property
    def gamma3(self) -> float:
        """Total decay rate of level ``|3>``."""
        return self.gamma31 + self.gamma32

    @property
    def symmetric(self) -> bool:
        return self.kappa_a == self.kappa_b and self.Omega_a == self.Omega_b

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, complex):
                out[f.name] = v.real if v.imag == 0 else [v.real, v.imag]
            else:
                out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SystemParams":
        """Inverse of :meth:`to_dict`; complex values may be ``[re, im]`` pairs or strings."""
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown parameter(s): {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            if isinstance(v, (list, tuple)):
                if len(v) != 2:
                    raise ParameterError(f"{k}: complex values are [re, im] pairs")
                v = complex(float(v[0]), float(v[1]))
            elif isinstance(v, str):
                try:
                    v = complex(v.replace(" ", ""))
                except ValueError as exc:
                    raise ParameterError(f"{k}: cannot parse {v!r}") from exc
                if k not in _COMPLEX_FIELDS:
                    if v.imag != 0:
                        raise ParameterError(f"{k} must be real")
                    v = v.real
            kw[k] = v
        return cls(**kw)

    @classmethod
    def from_rates(
        cls,
        Gamma: float,
        *,
        kappa: float = 1e-2,
        Omega: complex = 0.0,
        Omega_L: complex = 1.0,
        Delta: float = 0.0,
        **kw,
    ) -> "SystemParams":
        """Symmetric parameters that realise a given two-photon loss rate.

        Chooses ``g_a = g_b = g`` real with
        ``g^4 = Gamma |Omega_L|^2 (Delta^2 + gamma42^2/4) / gamma42``.
        """
        if Gamma < 0:
            raise ParameterError("Gamma must be >= 0")
        gamma42 = kw.get("gamma42", 1.0)
        g = (Gamma * abs(Omega_L) ** 2 * (Delta**2 + gamma42**2 / 4) / gamma42) ** 0.25
        return cls(
            kappa_a=kappa,
            kappa_b=kappa,
            Omega_a=Omega,
            Omega_b=Omega,
            Omega_L=Omega_L,
            g_a=g,
            g_b=g,
            Delta=Delta,
            **kw,
        )


@dataclass(frozen=True)
class DerivedCouplings:
    """Effective couplings of the reduced two-mode model (units of ``gamma42``)."""

    Gamma: float
    U: float
    A_factor: complex
    Gamma1: float
    H1_shift: float


def derived_couplings(p: SystemParams) -> DerivedCouplings:
    """Two-photon loss rate, photon-photon interaction and finite-detuning terms.

    Raises
    ------
    ParameterError
        If ``Omega_L`` vanishes.
    """
    OL2 = abs(p.Omega_L) ** 2
    if OL2 == 0:
        raise ParameterError("Omega_L must be non-zero to eliminate the atom")
    ga2 = abs(p.g_a) ** 2
    gb2 = abs(p.g_b) ** 2
    denom = (p.Delta**2 + p.gamma42**2 / 4) * OL2
    Gamma = ga2 * gb2 * p.gamma42 / denom
    U = ga2 * gb2 * p.Delta / denom
    A = -1.0 / ((p.Delta + 0.5j * p.gamma42) * OL2)
    eps = p.epsilon
    Gamma1 = p.gamma3 * ga2 * eps**2 / OL2**2
    H1 = -ga2 * (p.delta * eps**2 + eps * OL2) / (2 * OL2**2)
    return DerivedCouplings(float(Gamma), float(U), complex(A), float(Gamma1), float(H1))


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Sparse Liouvillian acting on column-stacked density matrices.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        The ``d^2 x d^2`` generator.
    dims : tuple of int
        Subsystem dimensions of the Hilbert space, e.g. ``(dim_a, dim_b)`` or
        ``(4, dim_a, dim_b)``.
    displacement : tuple of complex
        Coherent displacement ``(beta_a, beta_b)`` of the frame in which the
        matrix is expressed; ``(0, 0)`` for the lab frame.
    meta : dict
        Parameters and couplings used to build it.
    keep : numpy.ndarray, optional
        Composite indices of a restricted basis of the ``dims`` product
        space (see :func:`~twophoton.fock.joint_basis`); the matrix then
        acts on ``len(keep)**2`` dimensional vectors.
    """

    matrix: sp.csr_matrix
    dims: tuple
    displacement: tuple = (0j, 0j)
    meta: dict = field(default_factory=dict)
    keep: np.ndarray | None = None

    def __post_init__(self):
        d = self.hilbert_dim
        if self.matrix.shape != (d * d, d * d):
            raise DimensionError(f"matrix shape {self.matrix.shape} inconsistent with dims {self.dims}")

    @property
    def hilbert_dim(self) -> int:
        return int(np.prod(self.dims)) if self.keep is None else len(self.keep)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_full(self) -> bool:
        return len(self.dims) == 3

    @property
    def trunc(self) -> Truncation:
        da, db = self.dims[-2:]
        return Truncation(da - 1, db - 1)

    def __matmul__(self, v):
        return self.matrix @ v

    def trace_residual(self) -> float:
        """``max |vec(I)^dag L|``, zero for a trace-preserving generator."""
        r = trace_row(self.hilbert_dim) @ self.matrix
        return float(abs(r).max()) if r.nnz else 0.0


def vec(rho) -> np.ndarray:
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, d: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise DimensionError(f"vector of length {v.size} is not a vectorised {d}x{d} matrix")
    return v.reshape(d, d, order="F")


def trace_row(d: int) -> sp.csr_matrix:
    """Row vector ``vec(I)^T`` so that ``trace_row(d) @ vec(rho) = Tr rho``."""
    idx = np.arange(d) * (d + 1)
    return sp.csr_matrix((np.ones(d, dtype=complex), (np.zeros(d, dtype=int), idx)), shape=(1, d * d))


def lindblad(H, jumps, *, check: bool = True, max_vec_dim: int = MAX_VEC_DIM) -> sp.csr_matrix:
    """Column-stacking Lindblad generator for ``H`` and jump operators ``jumps``."""
    d = H.shape[0]
    if d * d > max_vec_dim:
        raise DimensionError(f"vectorised dimension {d * d} exceeds limit {max_vec_dim}")
    H = sp.csr_matrix(H, dtype=complex)
    Id = identity(d)
    L = -1j * (sp.kron(Id, H) - sp.kron(H.T, Id))
    for c in jumps:
        c = sp.csr_matrix(c, dtype=complex)
        if c.nnz == 0:
            continue
        cdc = (c.conj().T @ c).tocsr()
        L = L + sp.kron(c.conj(), c) - 0.5 * sp.kron(Id, cdc) - 0.5 * sp.kron(cdc.T, Id)
    L = sp.csr_matrix(L)
    L.sum_duplicates()
    L.eliminate_zeros()
    if check:
        res = abs(trace_row(d) @ L).max() if L.nnz else 0.0
        scale = max(1.0, abs(L).max())
        if res > 1e-12 * scale:
            raise ParameterError(f"generator is not trace preserving (residual {res:.2e})")
    return L


def _reduced_parts(p, trunc, include_eps_correction, displacement, keep=None):
    a, b = mode_operators(trunc)
    Id = identity(trunc.dim)
    ba, bb = (complex(x) for x in displacement)
    if ba:
        a = a + ba * Id
    if bb:
        b = b + bb * Id
    if keep is not None:
        P = Id[keep]
        a, b = (P @ a @ P.T).tocsr(), (P @ b @ P.T).tocsr()
    c = derived_couplings(p)
    H = p.Omega_a.conjugate() * a + p.Omega_b.conjugate() * b
    H = H + H.conj().T
    ab = b @ a
    if c.U:
        H = H + c.U * (ab.conj().T @ ab)
    jumps = [np.sqrt(p.kappa_a) * a, np.sqrt(p.kappa_b) * b, np.sqrt(c.Gamma) * ab]
    if include_eps_correction:
        if c.H1_shift:
            H = H + c.H1_shift * (a.conj().T @ a)
        jumps.append(np.sqrt(c.Gamma1) * a)
    return H, jumps, c


def build_reduced_liouvillian(
    p: SystemParams,
    trunc: Truncation,
    include_eps_correction: bool = False,
    *,
    displacement=(0.0, 0.0),
    joint_max: int | None = None,
    max_vec_dim: int = MAX_VEC_DIM,
) -> Superoperator:
    """Liouvillian of the two-mode model with engineered two-photon loss.

    ``H = Omega_a^* a + Omega_a a^dag + Omega_b^* b + Omega_b b^dag + U (ba)^dag (ba)``
    with jumps ``sqrt(kappa_a) a``, ``sqrt(kappa_b) b`` and ``sqrt(Gamma) ba``.
    With ``include_eps_correction`` the mode-a shift ``H1_shift a^dag a`` and
    jump ``sqrt(Gamma1) a`` are added.

    Parameters
    ----------
    displacement : (complex, complex)
        Express the generator in the frame displaced by ``(beta_a, beta_b)``,
        i.e. substitute ``a -> a + beta_a``, ``b -> b + beta_b``.  This is an
        exact change of frame; a state ``rho'`` in that frame corresponds to
        ``D rho' D^dag`` in the lab frame.  Large coherent amplitudes then fit
        in a much smaller truncation.
    joint_max : int, optional
        Keep only ``|n_a, n_b>`` with ``min(n_a, n_b) <= joint_max``
        (mode operators are projected onto that basis).
    """
    if trunc.dim < 1:
        raise DimensionError("empty truncation")
    keep = None if joint_max is None else joint_basis(trunc, joint_max)
    H, jumps, c = _reduced_parts(p, trunc, include_eps_correction, displacement, keep)
    L = lindblad(H, jumps, max_vec_dim=max_vec_dim)
    return Superoperator(
        L,
        trunc.dims,
        tuple(complex(x) for x in displacement),
        {"params": p, "couplings": c, "eps_correction": bool(include_eps_correction), "model": "reduced",
         "joint_max": joint_max},
        keep,
    )


def build_single_mode_liouvillian(
    p: SystemParams,
    mode: str,
    cutoff: int,
    include_eps_correction: bool = False,
    *,
    displacement: complex = 0.0,
) -> Superoperator:
    """Generator of one driven, damped mode in isolation.

    When ``Gamma = U = 0`` the reduced generator is ``L_a (x) 1 + 1 (x) L_b``
    (up to the vec ordering) and its steady state is the product of the
    single-mode steady states returned by these generators.
    """
    if mode not in ("a", "b"):
        raise ValueError("mode must be 'a' or 'b'")
    a = annihilation_op(cutoff)
    if displacement:
        a = (a + complex(displacement) * identity(cutoff + 1)).tocsr()
    Om = p.Omega_a if mode == "a" else p.Omega_b
    kappa = p.kappa_a if mode == "a" else p.kappa_b
    H = Om.conjugate() * a
    H = H + H.conj().T
    jumps = [np.sqrt(kappa) * a]
    if include_eps_correction and mode == "a":
        c = derived_couplings(p)
        H = H + c.H1_shift * (a.conj().T @ a)
        jumps.append(np.sqrt(c.Gamma1) * a)
    L = lindblad(H, jumps)
    return Superoperator(L, (cutoff + 1,), (complex(displacement),), {"params": p, "model": f"mode-{mode}"})


def build_gamma_dissipator(Gamma: float, trunc: Truncation) -> Superoperator:
    """Two-photon loss dissipator alone (jump ``sqrt(Gamma) ba``)."""
    if Gamma < 0:
        raise ParameterError("Gamma must be >= 0")
    a, b = mode_operators(trunc)
    H = sp.csr_matrix((trunc.dim, trunc.dim), dtype=complex)
    L = lindblad(H, [np.sqrt(Gamma) * (b @ a)])
    return Superoperator(L, trunc.dims, meta={"model": "gamma-only", "Gamma": Gamma})


def build_full_liouvillian(
    p: SystemParams, trunc: Truncation, *, max_vec_dim: int = MAX_VEC_DIM
) -> Superoperator:
    """Liouvillian of the four-level atom coupled to both modes (rotated frame).

    ``H0 = -[eps s22 + delta s33 + (Delta + eps) s44 + Omega_L s32 + Omega_L^* s23]``,
    ``H_C = -g_a a s31 - g_b b s42 + h.c.``, cavity drive and loss as in the
    reduced model, atomic jumps ``sqrt(gamma31) s13``, ``sqrt(gamma32) s23``
    and ``sqrt(gamma42) s24``.  No ``|4> -> |1>`` channel is included.
    """
    ops = full_operators(trunc)
    s = lambda i, j: ops[("s", i, j)]  # noqa: E731
    a, b = ops["a"], ops["b"]
    H0 = -(
        p.epsilon * s(2, 2)
        + p.delta * s(3, 3)
        + (p.Delta + p.epsilon) * s(4, 4)
        + p.Omega_L * s(3, 2)
        + p.Omega_L.conjugate() * s(2, 3)
    )
    HC = -p.g_a * (a @ s(3, 1)) - p.g_b * (b @ s(4, 2))
    HC = HC + HC.conj().T
    Hin = p.Omega_a.conjugate() * a + p.Omega_b.conjugate() * b
    Hin = Hin + Hin.conj().T
    jumps = [
        np.sqrt(p.gamma31) * s(1, 3),
        np.sqrt(p.gamma32) * s(2, 3),
        np.sqrt(p.gamma42) * s(2, 4),
        np.sqrt(p.kappa_a) * a,
        np.sqrt(p.kappa_b) * b,
    ]
    L = lindblad(H0 + HC + Hin, jumps, max_vec_dim=max_vec_dim)
    return Superoperator(L, (N_ATOM_LEVELS,) + trunc.dims, meta={"params": p, "model": "full"})


def apply(Lsup: Superoperator, rho) -> np.ndarray:
    """Un-vectorised action ``unvec(L vec(rho))``."""
    rho = np.asarray(rho)
    d = Lsup.hilbert_dim
    if rho.shape != (d, d):
        raise DimensionError(f"rho has shape {rho.shape}, expected {(d, d)}")
    return unvec(Lsup.matrix @ vec(rho).astype(complex), d)
