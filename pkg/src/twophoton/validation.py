"""Checks of the reduced two-mode model: validity inequalities, parameter
selection, perturbative atomic coherences and comparison with the full
atom-plus-cavity model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError
from .fock import Truncation, mode_operators
from .model import (
    SystemParams,
    build_full_liouvillian,
    derived_couplings,
)
from .steady import partial_trace_atom, solve_reduced, steady_state, trace_distance

__all__ = [
    "ConditionCheck",
    "ConditionReport",
    "FeasiblePoint",
    "ComparisonReport",
    "check_conditions",
    "choose_parameters",
    "perturbative_coherences",
    "full_model_coherences",
    "compare_full_vs_reduced",
]

DEFAULT_MARGIN = 10.0
_REL = 1e-9


@dataclass(frozen=True)
class ConditionCheck:
    """One ``lhs << rhs`` inequality with ``margin = rhs / lhs``."""

    name: str
    lhs: float
    rhs: float
    margin: float
    passed: bool


@dataclass(frozen=True)
class ConditionReport:
    checks: tuple
    margin_factor: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def table(self) -> str:
        rows = [f"{'condition':<50} {'lhs':>11} {'rhs':>11} {'margin':>10}  ok"]
        for c in self.checks:
            rows.append(f"{c.name:<50} {c.lhs:11.4g} {c.rhs:11.4g} {c.margin:10.4g}  {'yes' if c.passed else 'NO'}")
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {
            "margin_factor": self.margin_factor,
            "passed": self.passed,
            "checks": [
                {"name": c.name, "lhs": c.lhs, "rhs": c.rhs,
                 "margin": c.margin if np.isfinite(c.margin) else None, "pass": c.passed}
                for c in self.checks
            ],
        }


def _check(name, lhs, rhs, factor):
    lhs, rhs = float(abs(lhs)), float(rhs)
    margin = np.inf if lhs == 0 else rhs / lhs
    return ConditionCheck(name, lhs, rhs, margin, bool(margin >= factor * (1 - _REL)))


def check_conditions(p: SystemParams, trunc: Truncation, margin_factor: float = DEFAULT_MARGIN) -> ConditionReport:
    """Evaluate every validity inequality of the reduced model.

    Covered: atomic rates dominating the cavity/drive scales, the
    expansion-order bounds ``N_k |g_k|^2 / |Omega_L|^2 << 1`` and the
    finite two-photon-detuning conditions.  ``N_a``, ``N_b`` are the
    truncation cutoffs.  Each check passes when ``rhs / lhs >= margin_factor``.
    """
    c = derived_couplings(p)
    Na, Nb = trunc.n_a_max, trunc.n_b_max
    OL2 = abs(p.Omega_L) ** 2
    gmin = min(p.gamma31, p.gamma32, p.gamma42)
    checks = []
    slow = {
        "kappa_a": p.kappa_a,
        "kappa_b": p.kappa_b,
        "sqrt(Na Nb) Gamma": np.sqrt(Na * Nb) * c.Gamma,
        "|Omega_a|": abs(p.Omega_a),
        "|Omega_b|": abs(p.Omega_b),
        "|delta|": abs(p.delta),
    }
    for k, v in slow.items():
        checks.append(_check(f"elimination: {k} << gamma", v, gmin, margin_factor))
    checks.append(_check("expansion: Na|g_a|^2/|Omega_L|^2 << 1", Na * abs(p.g_a) ** 2 / OL2, 1.0, margin_factor))
    checks.append(_check("expansion: Nb|g_b|^2/|Omega_L|^2 << 1", Nb * abs(p.g_b) ** 2 / OL2, 1.0, margin_factor))
    checks.append(_check("detuning: Gamma1 << kappa_a", c.Gamma1, p.kappa_a, margin_factor))
    checks.append(_check("detuning: |epsilon| << gamma", p.epsilon, gmin, margin_factor))
    checks.append(_check("detuning: |eps|(gamma3+gamma42)/|Omega_L|^2 << 1",
                         abs(p.epsilon) * (p.gamma3 + p.gamma42) / OL2, 1.0, margin_factor))
    checks.append(_check("detuning: |delta eps|/|Omega_L|^2 << 1", p.delta * p.epsilon / OL2, 1.0, margin_factor))
    return ConditionReport(tuple(checks), float(margin_factor))


@dataclass(frozen=True)
class FeasiblePoint:
    """Couplings realising a target two-photon loss rate (units of the atomic rate).

    ``g_t = sqrt(N Gamma_t / x) / 2`` and ``OmegaL_t = N sqrt(Gamma_t) / (2x)``.
    ``Gamma_roundtrip`` is the loss rate recomputed from these couplings.
    """

    N: int
    Gamma_t: float
    x: float
    g_t: float
    OmegaL_t: float
    Gamma_roundtrip: float = float("nan")

    def to_params(self, kappa: float = 1e-2, Omega: complex = 0.0, **kw) -> SystemParams:
        return SystemParams(kappa_a=kappa, kappa_b=kappa, Omega_a=Omega, Omega_b=Omega,
                            Omega_L=self.OmegaL_t, g_a=self.g_t, g_b=self.g_t, **kw)


def choose_parameters(N: int, Gamma_t: float, x: float) -> FeasiblePoint:
    """Coupling and laser strength for cutoff ``N``, loss rate ``Gamma_t`` and small parameter ``x``.

    Assumes equal atomic rates, equal modes and ``Delta = 0``.
    """
    if int(N) != N or N < 1:
        raise ParameterError("N must be a positive integer")
    if not Gamma_t > 0:
        raise ParameterError("Gamma_t must be positive")
    if not 0 < x < 1:
        raise ParameterError("x must lie in (0, 1)")
    if not N * Gamma_t < 1:
        raise ParameterError("N * Gamma_t must be < 1")
    g = 0.5 * np.sqrt(N * Gamma_t / x)
    OL = N * np.sqrt(Gamma_t) / (2 * x)
    pt = FeasiblePoint(int(N), float(Gamma_t), float(x), float(g), float(OL))
    G = derived_couplings(pt.to_params()).Gamma
    if abs(G - Gamma_t) > 1e-12 * max(1.0, Gamma_t):
        raise ParameterError(f"round trip gave Gamma = {G!r}")
    return FeasiblePoint(pt.N, pt.Gamma_t, pt.x, pt.g_t, pt.OmegaL_t, float(G))


def perturbative_coherences(rho_F, p: SystemParams, trunc: Truncation | None = None):
    """Leading-order atomic coherences implied by a field state.

    ``rho_31 = A g_a |g_b|^2 b^dag b a rho_F`` and
    ``rho_42 = A g_b |g_a|^2 b a rho_F a^dag`` with
    ``A = -1 / ((Delta + i gamma42/2) |Omega_L|^2)``.
    """
    if p.epsilon != 0:
        raise ParameterError("perturbative coherences are derived for epsilon = 0")
    rho = np.asarray(rho_F, dtype=complex)
    trunc = trunc or Truncation.infer(rho.shape[0])
    a, b = mode_operators(trunc)
    A = derived_couplings(p).A_factor
    r31 = A * p.g_a * abs(p.g_b) ** 2 * ((b.conj().T @ b @ a) @ rho)
    r42 = A * p.g_b * abs(p.g_a) ** 2 * np.asarray((b @ a) @ rho @ a.conj().T.toarray())
    return np.asarray(r31), r42


def full_model_coherences(rho_full, trunc: Truncation):
    """Blocks ``<3|rho|1>`` and ``<4|rho|2>`` of an ``atom (x) a (x) b`` state."""
    r = np.asarray(rho_full).reshape(4, trunc.dim, 4, trunc.dim)
    return r[2, :, 0, :].copy(), r[3, :, 1, :].copy()


@dataclass(frozen=True)
class ComparisonReport:
    """Result of :func:`compare_full_vs_reduced`; ``float(report)`` is the distance."""

    distance: float
    conditions: ConditionReport
    rho_field_full: np.ndarray = field(repr=False)
    rho_reduced: np.ndarray = field(repr=False)
    rho_full: np.ndarray = field(repr=False, default=None)

    def __float__(self):
        return self.distance


def compare_full_vs_reduced(
    p: SystemParams,
    trunc: Truncation,
    *,
    margin_factor: float = DEFAULT_MARGIN,
    tol: float = 1e-9,
) -> ComparisonReport:
    """Trace distance between the atom-traced full steady state and the reduced one.

    A warning names the failed validity conditions when ``p`` violates them
    at ``margin_factor``; the comparison is still carried out.
    """
    report = check_conditions(p, trunc, margin_factor)
    if not report.passed:
        warnings.warn(f"validity conditions violated: {report.failed}", stacklevel=2)
    full = steady_state(build_full_liouvillian(p, trunc), tol)
    rho_field = partial_trace_atom(full.rho.data, trunc)
    red = solve_reduced(p, trunc, tol=tol)
    dist = trace_distance(rho_field, red.rho.data)
    return ComparisonReport(float(dist), report, rho_field, red.rho.data, full.rho.data)
