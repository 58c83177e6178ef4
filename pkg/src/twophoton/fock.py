"""Truncated Fock-space operators, embeddings and reference states.

Index conventions
-----------------
Composite spaces are ordered ``mode a (x) mode b`` for the two-mode model
and ``atom (x) mode a (x) mode b`` for the full model.  Composite indices are
row-major, i.e. ``i = i_A * dim_B + i_B`` (the convention of ``numpy.kron``).
Atomic levels ``|1>..|4>`` map to indices ``0..3``.

Operators are ``scipy.sparse.csr_matrix`` instances with complex dtype.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .exceptions import DegenerateStateError, DimensionError, TruncationError

__all__ = [
    "Truncation",
    "StateLabel",
    "PureState",
    "annihilation_op",
    "identity",
    "kron",
    "mode_operators",
    "atom_op",
    "full_operators",
    "fock_ket",
    "coherent_state",
    "noon_state",
    "ces_state",
    "projector",
    "N_ATOM_LEVELS",
    "joint_basis",
]

N_ATOM_LEVELS = 4

# renormalisation is reported when the truncated norm misses more than this
NORM_DEFICIT_WARN = 1e-6


@dataclass(frozen=True)
class Truncation:
    """Fock cutoffs for the two cavity modes (``n_max`` inclusive)."""

    n_a_max: int
    n_b_max: int

    def __post_init__(self):
        for name in ("n_a_max", "n_b_max"):
            v = getattr(self, name)
            if int(v) != v or v < 0:
                raise TruncationError(f"{name} must be a non-negative integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def dim_a(self) -> int:
        return self.n_a_max + 1

    @property
    def dim_b(self) -> int:
        return self.n_b_max + 1

    @property
    def dims(self) -> tuple[int, int]:
        return (self.dim_a, self.dim_b)

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b

    def enlarged(self, step: int = 4) -> "Truncation":
        return Truncation(self.n_a_max + step, self.n_b_max + step)

    @classmethod
    def square(cls, n_max: int) -> "Truncation":
        return cls(n_max, n_max)

    @classmethod
    def infer(cls, dim: int) -> "Truncation":
        """Square truncation matching a two-mode dimension ``dim``."""
        n = int(round(np.sqrt(dim)))
        if n * n != dim:
            raise DimensionError(f"cannot infer a square truncation from dimension {dim}")
        return cls(n - 1, n - 1)


class StateLabel(str, Enum):
    FOCK = "Fock"
    COHERENT = "Coherent"
    NOON = "NOON"
    CES_PLUS = "CESplus"
    CES_MINUS = "CESminus"
    CUSTOM = "Custom"


@dataclass(frozen=True)
class PureState:
    """Normalised ket on a (possibly composite) truncated space.

    ``norm_deficit`` is ``1 - ||psi_truncated||^2`` before renormalisation;
    it is zero for states that fit exactly in the truncation.
    """

    amplitudes: np.ndarray
    label: StateLabel = StateLabel.CUSTOM
    dims: tuple = ()
    norm_deficit: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).ravel()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if not self.dims:
            object.__setattr__(self, "dims", (amps.size,))
        if int(np.prod(self.dims)) != amps.size:
            raise DimensionError(f"dims {self.dims} do not match {amps.size} amplitudes")

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def dm(self) -> np.ndarray:
        return projector(self.amplitudes)

    def overlap(self, other) -> complex:
        other = other.amplitudes if isinstance(other, PureState) else np.asarray(other)
        return complex(np.vdot(self.amplitudes, other))


def projector(ket) -> np.ndarray:
    """Dense ``|psi><psi|``."""
    v = ket.amplitudes if isinstance(ket, PureState) else np.asarray(ket, dtype=complex).ravel()
    return np.outer(v, v.conj())


def annihilation_op(cutoff: int) -> sp.csr_matrix:
    """Single-mode annihilation operator on ``span{|0>, ..., |cutoff>}``."""
    if int(cutoff) != cutoff or cutoff < 0:
        raise TruncationError(f"cutoff must be a non-negative integer, got {cutoff!r}")
    cutoff = int(cutoff)
    if cutoff == 0:
        return sp.csr_matrix((1, 1), dtype=complex)
    n = np.arange(1, cutoff + 1)
    return sp.csr_matrix(
        (np.sqrt(n).astype(complex), (n - 1, n)), shape=(cutoff + 1, cutoff + 1)
    )


def identity(dim: int) -> sp.csr_matrix:
    return sp.identity(dim, dtype=complex, format="csr")


def kron(*ops) -> sp.csr_matrix:
    """Kronecker product ``ops[0] (x) ops[1] (x) ...`` (row-major composite index)."""
    if not ops:
        raise ValueError("kron needs at least one operator")
    for op in ops:
        if op.shape[0] != op.shape[1]:
            raise DimensionError(f"operator of shape {op.shape} is not square")
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), ops).astype(complex).tocsr()


def mode_operators(trunc: Truncation) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Annihilation operators ``(a, b)`` on the two-mode space ``a (x) b``."""
    a = kron(annihilation_op(trunc.n_a_max), identity(trunc.dim_b))
    b = kron(identity(trunc.dim_a), annihilation_op(trunc.n_b_max))
    return a, b


def joint_basis(trunc: Truncation, joint_max: int) -> np.ndarray:
    """Composite indices of ``|n_a, n_b>`` with ``min(n_a, n_b) <= joint_max``.

    Strong two-photon loss confines the field to the two Fock axes, so a
    basis that is deep along the axes but shallow in jointly excited states
    captures it at a fraction of the product dimension.
    """
    if int(joint_max) != joint_max or joint_max < 0:
        raise TruncationError(f"joint_max must be a non-negative integer, got {joint_max!r}")
    na, nb = np.divmod(np.arange(trunc.dim), trunc.dim_b)
    return np.flatnonzero(np.minimum(na, nb) <= joint_max)


def atom_op(i: int, j: int) -> sp.csr_matrix:
    """Atomic transition operator ``|i><j|`` with levels numbered 1..4."""
    if not (1 <= i <= N_ATOM_LEVELS and 1 <= j <= N_ATOM_LEVELS):
        raise ValueError(f"atomic levels are 1..{N_ATOM_LEVELS}, got ({i}, {j})")
    return sp.csr_matrix(([1.0 + 0j], ([i - 1], [j - 1])), shape=(N_ATOM_LEVELS, N_ATOM_LEVELS))


def full_operators(trunc: Truncation) -> dict:
    """Operators embedded in ``atom (x) a (x) b``.

    Returns a dict with keys ``"a"``, ``"b"``, ``"I"`` and ``("s", i, j)`` for
    the atomic projector/transition ``|i><j| (x) 1``.
    """
    ia = identity(trunc.dim_a)
    ib = identity(trunc.dim_b)
    iat = identity(N_ATOM_LEVELS)
    ops = {
        "a": kron(iat, annihilation_op(trunc.n_a_max), ib),
        "b": kron(iat, ia, annihilation_op(trunc.n_b_max)),
        "I": identity(N_ATOM_LEVELS * trunc.dim),
    }
    field_id = identity(trunc.dim)
    for i in range(1, N_ATOM_LEVELS + 1):
        for j in range(1, N_ATOM_LEVELS + 1):
            ops[("s", i, j)] = kron(atom_op(i, j), field_id)
    return ops


def fock_ket(trunc: Truncation, n_a: int, n_b: int) -> PureState:
    if not (0 <= n_a <= trunc.n_a_max and 0 <= n_b <= trunc.n_b_max):
        raise TruncationError(f"|{n_a},{n_b}> outside truncation {trunc}")
    v = np.zeros(trunc.dim, dtype=complex)
    v[n_a * trunc.dim_b + n_b] = 1.0
    return PureState(v, StateLabel.FOCK, trunc.dims)


def _coherent_amplitudes(alpha: complex, cutoff: int) -> tuple[np.ndarray, float]:
    c = np.empty(cutoff + 1, dtype=complex)
    c[0] = np.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, cutoff + 1):
        c[n] = c[n - 1] * alpha / np.sqrt(n)
    deficit = max(0.0, 1.0 - float(np.vdot(c, c).real))
    return c / np.linalg.norm(c), deficit


def coherent_state(alpha: complex, cutoff: int) -> PureState:
    """Single-mode coherent state, renormalised after truncation.

    A :class:`UserWarning` is emitted when the truncated norm deficit exceeds
    ``1e-6``; the deficit is kept on ``PureState.norm_deficit``.
    """
    if int(cutoff) != cutoff or cutoff < 0:
        raise TruncationError(f"cutoff must be a non-negative integer, got {cutoff!r}")
    amps, deficit = _coherent_amplitudes(complex(alpha), int(cutoff))
    if deficit > NORM_DEFICIT_WARN:
        warnings.warn(
            f"coherent state |alpha|^2={abs(alpha) ** 2:.3g} truncated at n={cutoff}: "
            f"norm deficit {deficit:.2e}",
            stacklevel=2,
        )
    return PureState(amps, StateLabel.COHERENT, (int(cutoff) + 1,), deficit, {"alpha": complex(alpha)})


def noon_state(N: int, trunc: Truncation) -> PureState:
    """``(|N,0> + |0,N>)/sqrt(2)``; ``N = 0`` gives the two-mode vacuum."""
    if N < 0 or N > min(trunc.n_a_max, trunc.n_b_max):
        raise TruncationError(f"NOON state with N={N} does not fit in {trunc}")
    v = np.zeros(trunc.dim, dtype=complex)
    v[N * trunc.dim_b] += 1.0
    v[N] += 1.0
    return PureState(v / np.linalg.norm(v), StateLabel.NOON, trunc.dims, meta={"N": N})


def ces_state(alpha: complex, sign: int, trunc: Truncation) -> PureState:
    """Coherent entangled state ``(|alpha,0> +/- |0,alpha>)`` normalised.

    Each branch is a renormalised truncated coherent state; the final ket is
    normalised numerically, which reduces to ``1/sqrt(2(1 +/- exp(-|alpha|^2)))``
    when the truncation is adequate.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    alpha = complex(alpha)
    if sign == -1 and -np.expm1(-abs(alpha) ** 2) < 1e-14:
        raise DegenerateStateError("CES- is undefined for alpha = 0 (zero norm)")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ca, da = _coherent_amplitudes(alpha, trunc.n_a_max)
        cb, db = _coherent_amplitudes(alpha, trunc.n_b_max)
    deficit = max(da, db)
    if deficit > NORM_DEFICIT_WARN:
        warnings.warn(
            f"CES with |alpha|^2={abs(alpha) ** 2:.3g} truncated by {trunc}: norm deficit {deficit:.2e}",
            stacklevel=2,
        )
    del caught
    e0a = np.zeros(trunc.dim_a)
    e0a[0] = 1.0
    e0b = np.zeros(trunc.dim_b)
    e0b[0] = 1.0
    v = np.kron(ca, e0b) + sign * np.kron(e0a, cb)
    label = StateLabel.CES_PLUS if sign == 1 else StateLabel.CES_MINUS
    return PureState(v / np.linalg.norm(v), label, trunc.dims, deficit, {"alpha": alpha, "sign": sign})
