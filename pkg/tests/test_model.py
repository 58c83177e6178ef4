import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twophoton.exceptions import DimensionError, ParameterError
from twophoton.fock import Truncation, fock_ket, noon_state, projector
from twophoton.model import (
    SystemParams,
    apply,
    build_full_liouvillian,
    build_gamma_dissipator,
    build_reduced_liouvillian,
    derived_couplings,
    lindblad,
    trace_row,
    unvec,
    vec,
)
from twophoton.steady import evolve, partial_trace_atom, solve_reduced, steady_state, trace_distance
from twophoton.validation import choose_parameters

rates = st.floats(0.0, 2.0)


def random_density(d, rng):
    x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    r = x @ x.conj().T
    return r / np.trace(r)


def test_params_defaults_and_validation():
    p = SystemParams()
    assert p.gamma42 == 1.0 and p.gamma3 == 2.0
    with pytest.raises(ParameterError):
        SystemParams(kappa_a=-1.0)
    with pytest.raises(ParameterError):
        SystemParams(gamma42=0.0)
    with pytest.raises(ParameterError):
        SystemParams(delta=1j)


def test_params_dict_roundtrip():
    p = SystemParams(Omega_a=1e-3 - 2e-3j, g_a=0.3, Delta=0.2)
    assert SystemParams.from_dict(p.to_dict()) == p
    assert SystemParams.from_dict({"Omega_a": "0.001-0.002j"}).Omega_a == 1e-3 - 2e-3j
    with pytest.raises(ParameterError):
        SystemParams.from_dict({"kappa": 1.0})


def test_gamma_closed_form():
    c = derived_couplings(SystemParams(g_a=0.274, g_b=0.274, Omega_L=1.5))
    assert c.Gamma == pytest.approx(0.274**4 / (0.25 * 2.25), rel=1e-14)
    assert c.Gamma == pytest.approx(0.01003, abs=1e-5)
    assert c.U == 0.0


def test_couplings_at_half_linewidth():
    # Delta^2 + gamma^2/4 = 1/2, so Gamma = 1/(1/2) and U = Delta/(1/2)
    c = derived_couplings(SystemParams(g_a=1, g_b=1, Omega_L=1, Delta=0.5))
    assert c.Gamma == pytest.approx(2.0, rel=1e-14)
    assert c.U == pytest.approx(1.0, rel=1e-14)
    assert c.U / c.Gamma == pytest.approx(0.5 / 1.0)


def test_eps_terms_vanish_at_zero_detuning():
    c = derived_couplings(SystemParams(g_a=0.3, g_b=0.2, delta=0.1))
    assert c.Gamma1 == 0.0 and c.H1_shift == 0.0


def test_omega_l_guard():
    with pytest.raises(ParameterError):
        derived_couplings(SystemParams(Omega_L=0))


@given(st.floats(1e-4, 0.5), st.floats(0.2, 5.0), st.floats(-2.0, 2.0))
def test_from_rates_roundtrip(G, OL, Delta):
    c = derived_couplings(SystemParams.from_rates(G, Omega_L=OL, Delta=Delta))
    assert c.Gamma == pytest.approx(G, rel=1e-12)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.1, 3.0))
def test_zero_delta_gives_zero_u(g1, g2, OL):
    assert derived_couplings(SystemParams(g_a=g1, g_b=g2, Omega_L=OL)).U == 0.0


def test_single_mode_decay_pattern():
    t = Truncation.square(2)
    L = build_reduced_liouvillian(SystemParams(kappa_a=1.0, kappa_b=1.0), t)
    out = apply(L, projector(fock_ket(t, 1, 0)))
    expected = -projector(fock_ket(t, 1, 0)) + projector(fock_ket(t, 0, 0))
    np.testing.assert_allclose(out, expected, atol=1e-14)


def test_gamma_only_on_11():
    t = Truncation.square(3)
    G = 0.37
    out = apply(build_gamma_dissipator(G, t), projector(fock_ket(t, 1, 1)))
    expected = -G * (projector(fock_ket(t, 1, 1)) - projector(fock_ket(t, 0, 0)))
    np.testing.assert_allclose(out, expected, atol=1e-14)


@pytest.mark.parametrize("n", range(5))
def test_gamma_only_axis_dark(n):
    t = Truncation.square(4)
    L = build_gamma_dissipator(0.5, t)
    assert np.abs(apply(L, projector(fock_ket(t, n, 0)))).max() < 1e-14
    assert np.abs(apply(L, projector(fock_ket(t, 0, n)))).max() < 1e-14


@given(st.lists(st.complex_numbers(max_magnitude=1, allow_nan=False), min_size=5, max_size=5),
       st.lists(st.complex_numbers(max_magnitude=1, allow_nan=False), min_size=5, max_size=5))
@settings(max_examples=30)
def test_dark_space_coherences(ca, cb):
    t = Truncation.square(4)
    L = build_gamma_dissipator(1.0, t)
    phi_a = np.zeros((5, 5), complex)
    phi_a[:, 0] = ca
    phi_b = np.zeros((5, 5), complex)
    phi_b[0, :] = cb
    va, vb = phi_a.ravel(), phi_b.ravel()
    for op in (np.outer(va, va.conj()), np.outer(vb, vb.conj()), np.outer(va, vb.conj())):
        assert np.abs(apply(L, op)).max() < 1e-12


@pytest.mark.parametrize("build", ["reduced", "full"])
def test_trace_preservation(build):
    p = SystemParams(g_a=0.3, g_b=0.25, Omega_L=1.2 + 0.3j, Omega_a=0.01j, Omega_b=0.02,
                     Delta=0.3, delta=0.05, epsilon=0.02)
    t = Truncation(2, 3)
    L = build_reduced_liouvillian(p, t, True) if build == "reduced" else build_full_liouvillian(p, t)
    assert L.trace_residual() < 1e-12
    rng = np.random.default_rng(7)
    d = L.hilbert_dim
    for _ in range(20):
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = h + h.conj().T
        out = apply(L, h)
        assert abs(np.trace(out)) < 1e-12
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


def test_hermiticity_preserved_random():
    p = SystemParams.from_rates(0.05, kappa=0.1, Omega=0.2, Delta=0.4)
    L = build_reduced_liouvillian(p, Truncation.square(4))
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.normal(size=(25, 25)) + 1j * rng.normal(size=(25, 25))
        out = apply(L, (x + x.conj().T) / 2)
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)


def test_vacuum_dark_for_loss():
    t = Truncation.square(3)
    L = build_reduced_liouvillian(SystemParams(kappa_a=0.3, kappa_b=0.4), t)
    assert np.abs(apply(L, projector(fock_ket(t, 0, 0)))).max() == 0.0


def test_apply_steady_state_vanishes():
    p = SystemParams.from_rates(0.02, kappa=0.05, Omega=0.03)
    t = Truncation.square(5)
    rep = solve_reduced(p, t)
    L = build_reduced_liouvillian(p, t)
    assert np.abs(apply(L, rep.rho.data)).max() < 1e-9


def test_apply_dimension_mismatch():
    L = build_reduced_liouvillian(SystemParams(), Truncation.square(2))
    with pytest.raises(DimensionError):
        apply(L, np.eye(4))


def test_vec_column_stacking():
    m = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(vec(m)[:3], m[:, 0])
    np.testing.assert_array_equal(unvec(vec(m)), m)
    assert trace_row(3) @ vec(m) == pytest.approx(np.trace(m))


def test_lindblad_vectorization_convention():
    rng = np.random.default_rng(11)
    H = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    H = H + H.conj().T
    C = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = random_density(3, rng)
    L = lindblad(H, [C])
    direct = -1j * (H @ rho - rho @ H) + C @ rho @ C.conj().T - 0.5 * (
        C.conj().T @ C @ rho + rho @ C.conj().T @ C)
    np.testing.assert_allclose(unvec(L @ vec(rho)), direct, atol=1e-13)


def test_vec_dim_guard():
    with pytest.raises(DimensionError):
        build_reduced_liouvillian(SystemParams(), Truncation.square(10), max_vec_dim=1000)


def test_full_model_decays_to_ground_state():
    # pump on |2> <-> |3> empties |2>; no coupling to the cavity
    p = SystemParams(g_a=0, g_b=0, Omega_L=1.0, kappa_a=0.5, kappa_b=0.5)
    t = Truncation.square(1)
    L = build_full_liouvillian(p, t)
    rho0 = np.zeros((16, 16), complex)
    rho0[15, 15] = 0.5
    rho0[2 * 4 + 3, 2 * 4 + 3] = 0.5
    rho_t = evolve(L, rho0, 200.0)
    target = np.zeros((16, 16))
    target[0, 0] = 1.0
    assert trace_distance(rho_t, target) < 1e-8
    assert trace_distance(steady_state(L).rho.data, target) < 1e-10


def test_full_vs_reduced_small_cutoff():
    fp = choose_parameters(3, 0.01, 0.1)
    p = fp.to_params(kappa=1e-2, Omega=5e-3)
    t = Truncation.square(2)
    full = steady_state(build_full_liouvillian(p, t))
    red = solve_reduced(p, t)
    assert trace_distance(partial_trace_atom(full.rho.data, t), red.rho.data) < 0.05
