import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ioncat import spin
from ioncat.fock import ProbeBasis, aligned_squeeze_phase, cat_state, coherent_state, fock_state
from ioncat.spin import (DecoherenceSpec, HamiltonianSpec, HeraldError, Propagator, SpinFockState,
                         build_hamiltonian, carrier_pi, collapse_operators, entangled_state, evolve_unitary,
                         herald_project, lamb_dicke_matrix_element, lamb_dicke_matrix_element_expm,
                         probe_hamiltonian, rabi_frequencies, sdf_alpha, squeezed_probe_elements)

finite = dict(allow_nan=False, allow_infinity=False)
N = 40
ETA = 0.047


def ground():
    return SpinFockState.product("down", fock_state(0, N))


# -- Hamiltonians -----------------------------------------------------------------------


@pytest.mark.parametrize("spec", [
    HamiltonianSpec("sdf", 1.3, phase=0.4),
    HamiltonianSpec("red", 2.0, ETA),
    HamiltonianSpec("blue", 2.0),
    HamiltonianSpec("squeezed", 1.0, ETA, r=0.7, phi_s=1.2),
    HamiltonianSpec("carrier_displacement", 1.0, beta=0.3 - 0.8j),
    HamiltonianSpec("carrier", 0.5),
    HamiltonianSpec("sum", terms=(HamiltonianSpec("red", 1.0), HamiltonianSpec("carrier_displacement", 1.0,
                                                                              beta=0.5j))),
])
def test_hamiltonians_hermitian(spec):
    H = build_hamiltonian(spec, N)
    assert H.shape == (2 * N, 2 * N)
    assert np.max(np.abs(H - H.conj().T)) < 1e-12


def test_red_sideband_elements():
    om = 3.0
    H = build_hamiltonian(HamiltonianSpec("red", om), N)
    for n in range(N - 1):
        # <down, n+1| H |up, n>
        assert H[n + 1, N + n] == pytest.approx(om * math.sqrt(n + 1) / 2, abs=1e-14)
    # no carrier or blue-sideband couplings
    assert np.all(H[:N, :N] == 0) and np.all(H[N:, N:] == 0)


def test_sdf_block_structure_and_zero_rate():
    assert not np.any(build_hamiltonian(HamiltonianSpec("sdf", 0.0), N))
    H = build_hamiltonian(HamiltonianSpec("sdf", 1.0), N)
    # sigma_x couples the spin blocks only
    assert not np.any(H[:N, :N]) and not np.any(H[N:, N:])


def test_squeezed_probe_reduces_to_red():
    a = build_hamiltonian(HamiltonianSpec("squeezed", 1.7, ETA, r=0.0, phi_s=0.9), N)
    b = build_hamiltonian(HamiltonianSpec("red", 1.7, ETA), N)
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_unknown_kind_and_negative_rate():
    with pytest.raises(ValueError):
        HamiltonianSpec("bogus")
    with pytest.raises(ValueError):
        HamiltonianSpec("red", -1.0)


def test_hamiltonian_spec_roundtrip():
    spec = HamiltonianSpec("sum", terms=(HamiltonianSpec("squeezed", 1.0, 0.05, 0.9, 2.0),
                                         HamiltonianSpec("carrier_displacement", 1.0, beta=1 - 2j)))
    assert HamiltonianSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        HamiltonianSpec.from_dict({"kind": "red", "omega": 1, "extra": 2})


def test_probe_hamiltonian_kinds():
    assert probe_hamiltonian(ProbeBasis.number(), 2.0).kind == "red"
    sq = probe_hamiltonian(ProbeBasis.squeezed(0.5, 0.3), 2.0)
    assert sq.kind == "squeezed" and sq.omega == pytest.approx(math.cosh(0.5))
    assert probe_hamiltonian(ProbeBasis.displaced(1j), 2.0).kind == "sum"


# -- evolution ----------------------------------------------------------------------------


def test_evolve_zero_time_is_identity():
    s = SpinFockState.product("up", coherent_state(1.2, N))
    H = build_hamiltonian(HamiltonianSpec("red", 1.0), N)
    out = evolve_unitary(s, H, 0.0)
    np.testing.assert_array_equal(out.vector(), s.vector())


def test_evolve_rejects_non_hermitian():
    H = np.zeros((2 * N, 2 * N), dtype=complex)
    H[0, 1] = 1.0
    with pytest.raises(ValueError):
        evolve_unitary(ground(), H, 1.0)


@given(st.floats(0.1, 5.0, **finite), st.floats(0.05, 1.2, **finite), st.floats(-math.pi, math.pi, **finite))
def test_sdf_matches_closed_form(omega, t, phase):
    n = 60
    H = build_hamiltonian(HamiltonianSpec("sdf", omega, phase=phase), n)
    g = SpinFockState.product("down", fock_state(0, n))
    out = evolve_unitary(g, H, t)
    assert abs(out.norm() - 1) < 1e-9
    ref = entangled_state(sdf_alpha(omega, t, phase), n)
    assert out.fidelity(ref) > 1 - 1e-8


def test_red_sideband_two_level_flopping():
    om = 2 * math.pi * 31e3
    for eta in (0.0, ETA):
        H = build_hamiltonian(HamiltonianSpec("red", om, eta), N)
        s = SpinFockState.product("up", fock_state(0, N))
        m0 = 1.0 if eta == 0 else abs(lamb_dicke_matrix_element(0, eta)) / eta
        for t in np.linspace(0, 100e-6, 7):
            pd = evolve_unitary(s, H, t).p_down()
            assert pd == pytest.approx(math.sin(om * m0 * t / 2) ** 2, abs=1e-10)


def test_krylov_path_matches_eigendecomposition(monkeypatch):
    H = build_hamiltonian(HamiltonianSpec("squeezed", 1.0, ETA, 0.4, 0.2), N)
    v = SpinFockState.product("up", coherent_state(1.0, N)).vector()
    a = Propagator(H).apply(v, 2.3)
    monkeypatch.setattr(spin, "EIGH_MAX_DIM", 0)
    b = Propagator(H).apply(v, 2.3)
    assert np.max(np.abs(a - b)) < 1e-9


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 10, **finite))
def test_unitary_norm_conservation(seed, t):
    rng = np.random.default_rng(seed)
    v = np.zeros(2 * N, dtype=complex)
    v[:10] = rng.normal(size=10) + 1j * rng.normal(size=10)
    v[N:N + 10] = rng.normal(size=10)
    v /= np.linalg.norm(v)
    H = build_hamiltonian(HamiltonianSpec("squeezed", 1.0, ETA, 0.5, 1.0), N)
    assert np.linalg.norm(evolve_unitary(v, H, t)) == pytest.approx(1, abs=1e-9)


def test_spin_fock_state_norm_invariant():
    with pytest.raises(ValueError):
        SpinFockState(np.ones(3), np.ones(3))


# -- heralding ----------------------------------------------------------------------------


@pytest.mark.parametrize("alpha", [0.8, 2.0, 3.0 - 1j])
def test_herald_branches(alpha):
    n = 80
    s = entangled_state(alpha, n)
    up, pu = herald_project(s, "up")
    down, pd = herald_project(s, "down")
    assert pu + pd == pytest.approx(1, abs=1e-12)
    assert up.fidelity(cat_state(alpha, "-", n)) == pytest.approx(1, abs=1e-12)
    assert down.fidelity(cat_state(alpha, "+", n)) == pytest.approx(1, abs=1e-12)
    flipped, pf = herald_project(s, "up", carrier_flip_first=True)
    assert flipped.fidelity(cat_state(alpha, "+", n)) == pytest.approx(1, abs=1e-12)
    assert pf == pytest.approx(pd, abs=1e-14)


def test_herald_probability_near_half_for_large_cat():
    _, p = herald_project(entangled_state(3, 80), "up")
    assert p == pytest.approx(0.5, abs=1e-7)


def test_herald_zero_probability_and_bad_outcome():
    with pytest.raises(HeraldError):
        herald_project(ground(), "up")
    with pytest.raises(ValueError):
        herald_project(ground(), "sideways")


def test_carrier_pi_swaps_spin():
    s = carrier_pi(ground())
    assert s.p_down() == 0 and abs(s.norm() - 1) < 1e-15


# -- Lamb-Dicke elements and Rabi rates ---------------------------------------------------


@pytest.mark.parametrize("n", [0, 1, 5, 20, 60])
@pytest.mark.parametrize("eta", [0.01, 0.047, 0.2])
def test_lamb_dicke_closed_vs_expm(n, eta):
    a = lamb_dicke_matrix_element(n, eta)
    b = lamb_dicke_matrix_element_expm(n, eta)
    assert abs(a - b) < 1e-9


def test_lamb_dicke_values():
    assert abs(lamb_dicke_matrix_element(0, ETA)) == pytest.approx(0.046948, abs=5e-7)
    assert abs(lamb_dicke_matrix_element(60, ETA)) / (ETA * math.sqrt(61)) < 1
    for n in (0, 3, 10):
        ratio = lamb_dicke_matrix_element(n, 1e-6) / (1j * 1e-6 * math.sqrt(n + 1))
        assert ratio == pytest.approx(1, abs=1e-9)
    with pytest.raises(ValueError):
        lamb_dicke_matrix_element(0, -0.1)


def test_rabi_number_basis_lamb_dicke_limit():
    om = 2 * math.pi * 31e3
    np.testing.assert_allclose(rabi_frequencies(ProbeBasis.number(), om, 0.0, 30),
                               om * np.sqrt(np.arange(1, 31)), rtol=1e-15)


def test_rabi_displaced_equals_number():
    a = rabi_frequencies(ProbeBasis.number(), 1.0, ETA, 40)
    b = rabi_frequencies(ProbeBasis.displaced(2 - 1j), 1.0, ETA, 40)
    np.testing.assert_array_equal(a, b)


def test_rabi_squeezed_low_r_falls_back():
    a = rabi_frequencies(ProbeBasis.squeezed(0.5, 1.0), 1.0, ETA, 20)
    b = rabi_frequencies(ProbeBasis.number(), 1.0, ETA, 20)
    np.testing.assert_array_equal(a, b)


def test_squeezed_numeric_elements_close_to_scaling_low_levels():
    r, phi = 0.9, aligned_squeeze_phase(1.0)
    num = squeezed_probe_elements(r, phi, ETA, 8)
    ref = np.abs([lamb_dicke_matrix_element(n, ETA) for n in range(8)]) / ETA
    assert np.max(np.abs(num / ref - 1)) < 0.02


@pytest.mark.xfail(strict=True, reason="eta-corrected squeezed elements drift to about 5% from the "
                                       "number-basis scaling by n = 20 at r = 0.9")
def test_squeezed_numeric_elements_within_two_percent_to_level_20():
    r, phi = 0.9, aligned_squeeze_phase(1.0)
    num = squeezed_probe_elements(r, phi, ETA, 21)
    ref = np.abs([lamb_dicke_matrix_element(n, ETA) for n in range(21)]) / ETA
    assert np.max(np.abs(num / ref - 1)) < 0.02


def test_squeezed_numeric_elements_exact_without_lamb_dicke_correction():
    # with eta = 0 the squeezed ladder is exactly S a^+ S^+ in the squeezed basis
    num = squeezed_probe_elements(0.9, 0.3, 0.0, 15)
    np.testing.assert_allclose(num, np.sqrt(np.arange(1, 16)), rtol=1e-8)


# -- decoherence spec ----------------------------------------------------------------------


def test_decoherence_spec_validation_and_roundtrip():
    with pytest.raises(ValueError):
        DecoherenceSpec(heating_rate=-1)
    d = DecoherenceSpec(10, 1 / 32e-3, 1 / 930e-6)
    assert DecoherenceSpec.from_dict(d.to_dict()) == d == DecoherenceSpec.measured()
    with pytest.raises(ValueError):
        DecoherenceSpec.from_dict({"heating": 1})


def test_collapse_operators_heating_law():
    ops = collapse_operators(DecoherenceSpec(10.0), 30, spin=False)
    n = np.diag(np.arange(30.0))
    rho = np.zeros((30, 30))
    rho[3, 3] = 1
    # d<n>/dt = sum_c Tr(n D[c] rho)
    rate = sum(np.trace(n @ (c @ rho @ c.conj().T - 0.5 * (c.conj().T @ c @ rho + rho @ c.conj().T @ c))).real
               for c in ops)
    assert rate == pytest.approx(10.0)
