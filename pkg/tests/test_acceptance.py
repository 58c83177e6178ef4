"""Acceptance suite: one test (or a pair) per criterion, each printing a
PASS/FAIL line.  Criteria that do not hold for the converged numerics are
strict xfails: they still run at full tolerance and report FAIL."""

import time

import numpy as np
import pytest

from twophoton.entanglement import (
    duan_variance,
    fit_ces_mixture,
    fock_populations,
    mean_photon_number,
    negativity,
)
from twophoton.fock import Truncation, ces_state, fock_ket, noon_state, projector
from twophoton.model import SystemParams, build_reduced_liouvillian
from twophoton.spectra import (
    integrated_cavity_check,
    squeezing_spectra,
    time_domain_spectra,
    to_db,
    wide_omega_grid,
)
from twophoton.steady import (
    coherent_product_state,
    dark_residual,
    evolve,
    fidelity_to_pure,
    solve_reduced,
    steady_state,
    trace_distance,
)
from twophoton.validation import choose_parameters, compare_full_vs_reduced

PHI = np.pi / 2
SWEEP_KAPPA = 1e-2
# Per-point truncations for the four drive lines: (Gamma upper bound, frame, cutoff, joint_max).
# Chosen so that every point passes the cutoff-adequacy check.
SWEEP_PLAN = {
    2e-3: [(np.inf, "lab", 6, None)],
    4e-3: [(np.inf, "lab", 8, None)],
    1e-2: [(4e-3, "displaced", 8, None), (np.inf, "lab", 24, 5)],
    1.6e-2: [(4e-3, "displaced", 10, None), (2e-2, "lab", 30, 7), (5e-2, "lab", 30, 5), (np.inf, "lab", 32, 4)],
}


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:>2}] {'PASS' if ok else 'FAIL'}: {detail}")
    return emit


@pytest.fixture(scope="module")
def zeno_state():
    p = SystemParams.from_rates(1e-2, kappa=1e-3, Omega=1.16e-3)
    t0 = time.perf_counter()
    rep = solve_reduced(p, Truncation.square(14), tol=1e-10)
    return rep, time.perf_counter() - t0


@pytest.fixture(scope="module")
def spectrum_run():
    p = SystemParams.from_rates(1e-2, kappa=1e-2, Omega=7e-3)
    t0 = time.perf_counter()
    rep = solve_reduced(p, Truncation.square(10), frame="displaced", tol=1e-10)
    L = build_reduced_liouvillian(p, Truncation.square(10), displacement=rep.rho.displacement)
    s = squeezing_spectra(L, rep.rho, PHI, np.linspace(-0.2, 0.2, 801))
    return L, rep, s, time.perf_counter() - t0


@pytest.fixture(scope="module")
def gamma_sweep():
    rows = {}
    for Om, plan in SWEEP_PLAN.items():
        n = 20 if Om == 2e-3 else 7
        for G in np.logspace(-4, -1, n):
            frame, N, K = next((f, N, K) for hi, f, N, K in plan if G < hi)
            p = SystemParams.from_rates(G, kappa=SWEEP_KAPPA, Omega=Om)
            rep = solve_reduced(p, Truncation.square(N), frame=frame, joint_max=K)
            rows[Om, G] = (negativity(rep.rho), duan_variance(rep.rho, PHI).variance, rep.cutoff.adequate)
    return rows


def test_criterion_01_coherent_steady_state(report):
    p = SystemParams.from_rates(0.0, kappa=1e-3, Omega=1.16e-3)
    t = Truncation.square(20)
    t0 = time.perf_counter()
    rep = solve_reduced(p, t, frame="displaced", beta0=(0.0, 0.0))
    # the frame amplitude is found self-consistently from zero; compare in that frame
    ket = coherent_product_state(p, t, rep.rho.displacement)
    fid = fidelity_to_pure(rep.rho, ket)
    dt = time.perf_counter() - t0
    ok = fid >= 1 - 1e-8 and dt < 5
    report(1, ok, f"fidelity {fid:.12f} (>= 1-1e-8), {dt:.2f} s (< 5 s)")
    assert ok


def test_criterion_02_zeno_populations(report, zeno_state):
    rep, dt = zeno_state
    N = mean_photon_number(rep.rho)
    P = fock_populations(rep.rho)
    joint = P[1:, 1:].sum()
    ok = abs(N - 5.0) <= 0.5 and joint <= 0.05 * P.sum() and dt <= 900
    top = max(rep.cutoff.top_population)
    report(2, ok, f"<N> = {N:.4f} (5.0 +- 0.5), joint population {joint:.5f} (<= 0.05), {dt:.0f} s; "
                  f"top-level population {top:.1e} at the prescribed cutoff 14")
    assert ok
    assert joint == pytest.approx(0.004962, rel=2e-2)  # frozen regression value


def test_criterion_03_ces_parameters(report, zeno_state):
    fit = fit_ces_mixture(zeno_state[0].rho)
    checks = {
        "p1": (fit.p1, 0.499, 0.05),
        "p2": (fit.p2, 0.459, 0.05),
        "|alpha1|": (abs(fit.alpha1), 2.23, 0.1),
        "|alpha2|": (abs(fit.alpha2), 2.29, 0.1),
    }
    ok = all(abs(v - ref) <= tol for v, ref, tol in checks.values())
    detail = ", ".join(f"{k} {v:.4f} ({ref} +- {tol})" for k, (v, ref, tol) in checks.items())
    report("3a", ok, detail)
    assert ok


@pytest.mark.xfail(strict=True, reason="trace-norm overlap of the best CES mixture is 0.906, outside 0.9544 +- 0.02")
def test_criterion_03_ces_overlap(report, zeno_state):
    fit = fit_ces_mixture(zeno_state[0].rho, metric="trace")
    ok = abs(fit.overlap - 0.9544) <= 0.02
    report("3b", ok, f"trace-norm overlap {fit.overlap:.4f} (0.9544 +- 0.02); fidelity {fit.fidelity:.4f}")
    assert ok


def test_criterion_04_negativity_and_weak_line(report, gamma_sweep):
    adequate = all(r[2] for r in gamma_sweep.values())
    neg_ok = all(r[0] > 0 for r in gamma_sweep.values())
    weak = [r[1] for (Om, _), r in gamma_sweep.items() if Om == 2e-3]
    ok = adequate and neg_ok and max(weak) < 0
    min_neg = min(r[0] for r in gamma_sweep.values())
    report("4a", ok, f"{len(gamma_sweep)} points, all cutoffs adequate: {adequate}; min negativity {min_neg:.2e} (> 0); "
                     f"max Duan on the weakest line {max(weak):.4f} (< 0)")
    assert ok


@pytest.mark.xfail(strict=True, reason="converged Duan variance stays negative on the strongest line")
def test_criterion_04_strong_line_duan(report, gamma_sweep):
    strong = sorted((G, r[1]) for (Om, G), r in gamma_sweep.items() if Om == 1.6e-2)
    top = strong[-2:]
    ok = all(d >= 0 for _, d in top)
    report("4b", ok, "Duan at the two largest Gamma on the strongest line: "
                     + ", ".join(f"Gamma={G:.3g}: {d:+.4f}" for G, d in top) + " (>= 0)")
    assert ok


def test_criterion_05_squeezing_spectra(report, spectrum_run):
    _, rep, s, dt = spectrum_run
    su, sv = s.at(0.0)
    par = s.parity_error()
    ok = abs(su + 0.259) <= 0.05 and abs(sv + 0.755) <= 0.08 and par <= 1e-8 and dt <= 600
    report(5, ok, f"S_u(0) {su:.4f} ({to_db(su):.2f} dB), S_v(0) {sv:.4f} ({to_db(sv):.2f} dB), "
                  f"parity {par:.1e}, {dt:.0f} s for 801 points")
    assert ok
    assert rep.cutoff.adequate


def test_criterion_06_integral_identity(report, spectrum_run):
    L, rep, _, _ = spectrum_run
    s1 = squeezing_spectra(L, rep.rho, PHI, wide_omega_grid(5e-3, 20.0, 300))
    s2 = squeezing_spectra(L, rep.rho, PHI, wide_omega_grid(5e-3, 40.0, 320))
    lhs1, rhs = integrated_cavity_check(s1, rep.rho)
    lhs2, _ = integrated_cavity_check(s2, rep.rho)
    err = abs(lhs2 - rhs) / abs(rhs)
    conv = abs(lhs2 - lhs1) / abs(lhs2)
    ok = err <= 1e-2 and conv <= 1e-3
    report(6, ok, f"integral {lhs2:.5f} vs EPR variance {rhs:.5f}: rel. error {err:.2e} (<= 1e-2); "
                  f"grid change {conv:.1e}")
    assert ok


def test_criterion_07_dark_space(report):
    t = Truncation.square(12)
    states = [fock_ket(t, n, 0) for n in range(13)] + [fock_ket(t, 0, m) for m in range(13)]
    states += [noon_state(n, t) for n in range(1, 13)]
    states += [ces_state(a, s, t) for a in (0.5, 1.3, 1.0 + 0.7j) for s in (1, -1)]
    worst = max(dark_residual(projector(k.amplitudes), 1.0, t) for k in states)
    ok = worst < 1e-12
    report(7, ok, f"{len(states)} states, max Frobenius residual {worst:.1e} (< 1e-12)")
    assert ok


def test_criterion_08_adiabatic_elimination(report):
    fp = choose_parameters(3, 0.01, 0.1)
    p = fp.to_params(kappa=1e-2, Omega=5e-3)
    t = Truncation.square(3)
    d = []
    for s in (1, 2, 4):
        q = p.replace(Omega_L=p.Omega_L * s, kappa_a=1e-2 / s, kappa_b=1e-2 / s, Omega_a=5e-3 / s, Omega_b=5e-3 / s)
        r = compare_full_vs_reduced(q, t)
        assert r.conditions.passed
        d.append(r.distance)
    ok = d[0] < 0.05 and d[0] > d[1] > d[2]
    report(8, ok, "trace distances " + ", ".join(f"{x:.4f}" for x in d) + " (first < 0.05, decreasing)")
    assert ok


def test_criterion_09_oracle_equivalence(report):
    p = SystemParams.from_rates(1e-2, kappa=1e-2, Omega=7e-3)
    t = Truncation.square(4)
    L = build_reduced_liouvillian(p, t)
    rep = steady_state(L, 1e-12)
    w = np.linspace(-0.1, 0.1, 21)
    r = squeezing_spectra(L, rep.rho, PHI, w)
    q = time_domain_spectra(L, rep.rho, PHI, w)
    scale = max(np.abs(r.S_u).max(), np.abs(r.S_v).max())
    spec_err = max(np.abs(r.S_u - q.S_u).max(), np.abs(r.S_v - q.S_v).max()) / scale
    rho0 = np.zeros_like(rep.rho.data)
    rho0[0, 0] = 1.0
    late = evolve(L, rho0, 1e4)
    dist = trace_distance(late, rep.rho.data)
    ok = spec_err <= 1e-6 and dist <= 1e-6
    report(9, ok, f"spectra rel. difference {spec_err:.1e} (<= 1e-6), steady vs evolved {dist:.1e} (<= 1e-6)")
    assert ok


def test_criterion_10_zeno_monotonicity(report):
    t = Truncation.square(6)
    joint = []
    for G in np.logspace(-4, 0, 13):
        rep = solve_reduced(SystemParams.from_rates(G, kappa=1e-2, Omega=2e-3), t, tol=1e-12)
        assert rep.cutoff.adequate
        joint.append(fock_populations(rep.rho)[1:, 1:].sum())
    joint = np.array(joint)
    ok = bool(np.all(np.diff(joint) <= 1e-12))
    report(10, ok, f"joint population {joint[0]:.3e} -> {joint[-1]:.3e} over 13 points, non-increasing: {ok}")
    assert ok
