import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from twophoton.exceptions import ParameterError
from twophoton.fock import Truncation, fock_ket
from twophoton.model import SystemParams, derived_couplings
from twophoton.validation import (
    check_conditions,
    choose_parameters,
    compare_full_vs_reduced,
    full_model_coherences,
    perturbative_coherences,
)

T3 = Truncation.square(3)


def feasible(x=0.1, kappa=1e-2, Omega=5e-3):
    return choose_parameters(3, 0.01, x).to_params(kappa=kappa, Omega=Omega)


@pytest.fixture(scope="module")
def feasible_report():
    return compare_full_vs_reduced(feasible(), T3)


def test_choose_parameters_n3():
    fp = choose_parameters(3, 0.01, 0.1)
    assert fp.g_t == pytest.approx(np.sqrt(0.3) / 2, rel=1e-14)
    assert fp.g_t == pytest.approx(0.2739, abs=1e-4)
    assert fp.OmegaL_t == pytest.approx(1.5, rel=1e-14)


def test_choose_parameters_n5():
    fp = choose_parameters(5, 0.01, 0.1)
    assert fp.g_t == pytest.approx(0.3536, abs=1e-4)
    assert fp.OmegaL_t == pytest.approx(2.5, rel=1e-14)
    assert fp.OmegaL_t / fp.g_t == pytest.approx(np.sqrt(50), rel=1e-14)


def test_choose_parameters_round_trip():
    fp = choose_parameters(3, 0.01, 0.1)
    assert abs(fp.Gamma_roundtrip - 0.01) < 1e-12
    assert abs(derived_couplings(fp.to_params()).Gamma - 0.01) < 1e-12


@pytest.mark.parametrize("args", [(0, 0.01, 0.1), (2.5, 0.01, 0.1), (3, 0.0, 0.1),
                                  (3, 0.01, 1.0), (3, 0.01, 0.0), (200, 0.01, 0.1)])
def test_choose_parameters_rejects(args):
    with pytest.raises(ParameterError):
        choose_parameters(*args)


@given(st.integers(1, 50), st.floats(1e-5, 0.9), st.floats(1e-3, 0.999))
def test_choose_parameters_properties(N, frac, x):
    G = frac / N
    fp = choose_parameters(N, G, x)
    # g < 1 needs N*Gamma < 4x, not only N*Gamma < 1 and x < 1
    assert (fp.g_t < 1) == (N * G < 4 * x * (1 - 1e-12)) or np.isclose(N * G, 4 * x)
    assert fp.OmegaL_t / fp.g_t == pytest.approx(np.sqrt(N / x), rel=1e-12)


def test_small_x_can_push_coupling_above_one():
    assert choose_parameters(1, 0.9, 0.01).g_t == pytest.approx(0.5 * np.sqrt(90))


def test_feasible_point_conditions_pass():
    rep = check_conditions(feasible(), T3)
    assert rep.passed and rep.failed == []
    assert all(c.passed == (c.margin >= 10 * (1 - 1e-9)) for c in rep.checks)
    assert "margin" in rep.table().splitlines()[0]


def test_twelve_photon_cutoff_conditions():
    fp = choose_parameters(5, 0.01, 0.1)
    rep = check_conditions(fp.to_params(kappa=1e-2, Omega=7e-3), Truncation.square(12))
    by = {c.name: c for c in rep.checks}
    assert by["expansion: Na|g_a|^2/|Omega_L|^2 << 1"].margin == pytest.approx(2.5 ** 2 / (12 * 0.125))
    assert set(rep.failed) == {"expansion: Na|g_a|^2/|Omega_L|^2 << 1",
                               "expansion: Nb|g_b|^2/|Omega_L|^2 << 1",
                               "elimination: sqrt(Na Nb) Gamma << gamma"}
    assert by["elimination: sqrt(Na Nb) Gamma << gamma"].margin == pytest.approx(1 / 0.12)


def test_zero_detuning_conditions_trivial():
    rep = check_conditions(feasible(), T3)
    for c in rep.checks:
        if c.name.startswith("detuning: |"):
            assert c.lhs == 0 and c.passed


def test_constructed_kappa_violation():
    rep = check_conditions(feasible(kappa=0.5), T3)
    c = {c.name: c for c in rep.checks}["elimination: kappa_a << gamma"]
    assert c.margin == pytest.approx(2.0) and not c.passed
    assert "elimination: kappa_a << gamma" in rep.failed


def test_conditions_to_dict_json_safe():
    import json
    d = check_conditions(feasible(), T3).to_dict()
    json.dumps(d, allow_nan=False)
    assert d["passed"] is True and d["margin_factor"] == 10.0


def test_perturbative_vacuum_zero():
    rho = np.zeros((16, 16), complex)
    rho[0, 0] = 1
    r31, r42 = perturbative_coherences(rho, feasible(), T3)
    assert np.all(r31 == 0) and np.all(r42 == 0)


def test_perturbative_single_pair():
    p = feasible()
    k11 = int(np.flatnonzero(fock_ket(T3, 1, 1).amplitudes)[0])
    k01 = int(np.flatnonzero(fock_ket(T3, 0, 1).amplitudes)[0])
    rho = np.zeros((16, 16), complex)
    rho[k11, k11] = 1
    r31, _ = perturbative_coherences(rho, p, T3)
    expect = derived_couplings(p).A_factor * p.g_a * abs(p.g_b) ** 2
    assert r31[k01, k11] == pytest.approx(expect, rel=1e-14)
    mask = np.ones_like(r31, bool)
    mask[k01, k11] = False
    assert np.all(r31[mask] == 0)


def test_perturbative_rejects_detuning():
    with pytest.raises(ParameterError):
        perturbative_coherences(np.eye(16) / 16, feasible().replace(epsilon=1e-3), T3)


@given(st.floats(0, 1), st.integers(0, 2 ** 31 - 1))
def test_perturbative_linear(w, seed):
    rng = np.random.default_rng(seed)
    p = feasible()

    def rand():
        m = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        r = m @ m.conj().T
        return r / np.trace(r)

    r1, r2 = rand(), rand()
    mix = perturbative_coherences(w * r1 + (1 - w) * r2, p, T3)
    parts = [perturbative_coherences(r, p, T3) for r in (r1, r2)]
    for k in range(2):
        np.testing.assert_allclose(mix[k], w * parts[0][k] + (1 - w) * parts[1][k], atol=1e-14)


def test_perturbative_matches_full_model():
    p = feasible(x=0.05)
    rep = compare_full_vs_reduced(p, T3)
    p31, p42 = perturbative_coherences(rep.rho_field_full, p, T3)
    f31, f42 = full_model_coherences(rep.rho_full, T3)
    assert np.linalg.norm(p31 - f31) < 0.1 * np.linalg.norm(f31)
    assert np.linalg.norm(p42 - f42) < 0.1 * np.linalg.norm(f42)


def test_decoupled_atom_exact():
    p = feasible().replace(g_a=0.0, g_b=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert compare_full_vs_reduced(p, T3).distance < 1e-9


def test_feasible_point_distance(feasible_report):
    assert feasible_report.conditions.passed
    assert feasible_report.distance < 0.05
    assert feasible_report.distance == pytest.approx(0.021712, abs=1e-5)
    assert float(feasible_report) == feasible_report.distance


def test_weak_laser_violation(feasible_report):
    p = feasible()
    with pytest.warns(UserWarning, match="expansion: Na"):
        weak = compare_full_vs_reduced(p.replace(Omega_L=p.Omega_L / 10), T3)
    assert weak.distance > feasible_report.distance
    assert "expansion: Nb|g_b|^2/|Omega_L|^2 << 1" in weak.conditions.failed


def test_distance_shrinks_along_family(feasible_report):
    d = [feasible_report.distance]
    p = feasible()
    for s in (2, 4):
        q = p.replace(Omega_L=p.Omega_L * s, kappa_a=1e-2 / s, kappa_b=1e-2 / s,
                      Omega_a=5e-3 / s, Omega_b=5e-3 / s)
        d.append(compare_full_vs_reduced(q, T3).distance)
    assert d[0] > d[1] > d[2]
    np.testing.assert_allclose(d, [0.021712, 0.0062105, 0.0014125], rtol=1e-3)
