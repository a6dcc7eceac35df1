import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from ioncat.fock import (CA40_MASS_U, FockVector, PopulationVector, ProbeBasis, TruncationError,
                         aligned_squeeze_phase, cat_normalization, cat_state, coherent_state, db_to_r,
                         default_n_max, displacement_element, displacement_operator, effective_displacement,
                         fock_state, normalized, number_op, parity, physical_units, populations_from_density,
                         populations_in_basis, r_min, r_to_db, squeeze_operator, squeezed_mean_occupation)

finite = dict(allow_nan=False, allow_infinity=False)


def random_state(rng, n=20, dim=80):
    a = np.zeros(dim, dtype=complex)
    a[:n] = rng.normal(size=n) + 1j * rng.normal(size=n)
    return normalized(a)


# -- states -------------------------------------------------------------------------


def test_coherent_vacuum_is_exact():
    v = coherent_state(0, 30)
    assert v.amps[0] == 1 and np.all(v.amps[1:] == 0)


def test_coherent_poisson_level_nine():
    v = coherent_state(3)
    assert v.populations[9] == pytest.approx(poisson.pmf(9, 9), rel=1e-12)
    assert round(v.populations[9], 4) == 0.1318
    assert abs(v.mean_n() - 9) < 1e-9


def test_coherent_phase():
    a = 1.3 * np.exp(0.7j)
    v = coherent_state(a)
    n = np.arange(5)
    expect = np.exp(-abs(a) ** 2 / 2) * a ** n / np.sqrt([math.factorial(k) for k in n])
    np.testing.assert_allclose(v.amps[:5], expect, atol=1e-14)


def test_truncation_failure_raised():
    with pytest.raises(TruncationError):
        coherent_state(5, 20)


def test_norm_invariant_rejects_unnormalized():
    with pytest.raises(ValueError):
        FockVector(np.array([1.0, 1.0, 0, 0, 0, 0, 0, 0], dtype=complex))


def test_odd_cat_support_and_parity():
    v = cat_state(3, "-")
    assert np.max(v.populations[0::2]) <= 1e-12
    assert parity(v.populations) == pytest.approx(-1.0, abs=1e-12)


def test_even_cat_vacuum_overlap_against_brute_force():
    a = 0.5
    # inner product of |0> with N(|a> + |-a>) evaluated from coherent amplitudes
    c0 = math.exp(-a * a / 2)
    brute = (cat_normalization(a, "+") * 2 * c0) ** 2
    assert cat_state(a, "+").populations[0] == pytest.approx(brute, abs=1e-12)
    assert cat_state(a, "+").populations[0] == pytest.approx(0.969544, abs=1e-6)


def test_cat_sign_aliases():
    np.testing.assert_array_equal(cat_state(2, -1).amps, cat_state(2, "odd").amps)
    with pytest.raises(ValueError):
        cat_state(2, 0)


def test_default_n_max_rule():
    assert default_n_max(7.8) == math.ceil(7.8 ** 2 + 8 * 7.8 + 30)
    assert default_n_max(3, r=0.9) == 2 * math.ceil(9 + 24 + 30)


@given(st.floats(0, 4, **finite), st.floats(-math.pi, math.pi, **finite))
def test_coherent_normalized(mag, ph):
    v = coherent_state(mag * np.exp(1j * ph))
    assert abs(v.norm() - 1) < 1e-10
    assert v.tail_mass() < 1e-8


def test_constructors_deterministic():
    a = coherent_state(2.3 + 0.4j).amps
    b = coherent_state(2.3 + 0.4j).amps
    assert a.tobytes() == b.tobytes()
    D1 = displacement_operator(1.1 - 0.2j, 60)
    D2 = displacement_operator(1.1 - 0.2j, 60)
    assert D1.tobytes() == D2.tobytes()


# -- displacement -------------------------------------------------------------------


def test_displacement_zero_is_identity():
    np.testing.assert_array_equal(displacement_operator(0, 20), np.eye(20))


def test_displacement_paths_agree():
    Dc = displacement_operator(2, 200, "closed")
    De = displacement_operator(2, 200, "expm")
    assert np.max(np.abs(Dc[:100, :100] - De[:100, :100])) < 1e-8


def test_displacement_group_inverse():
    P = displacement_operator(1.5, 200) @ displacement_operator(-1.5, 200)
    assert np.max(np.abs(P[:100, :100] - np.eye(100))) < 1e-8


def test_displacement_of_vacuum_is_coherent():
    a = 1.2 - 0.7j
    D = displacement_operator(a, 60)
    np.testing.assert_allclose(D[:, 0], coherent_state(a, 60).amps, atol=1e-13)


def test_displacement_single_element_matches_matrix():
    b = 0.8 + 1.1j
    D = displacement_operator(b, 80)
    for m, n in [(0, 0), (3, 7), (12, 2), (9, 9)]:
        assert displacement_element(m, n, b) == pytest.approx(D[m, n], abs=1e-13)


def test_displacement_truncation_detected():
    with pytest.raises(TruncationError):
        displacement_operator(4, 16)


@given(st.complex_numbers(max_magnitude=1.5, **finite), st.complex_numbers(max_magnitude=1.5, **finite))
def test_displacement_composition(b1, b2):
    N = 200
    lhs = displacement_operator(b1, N) @ displacement_operator(b2, N)
    rhs = np.exp(1j * (b1 * np.conj(b2)).imag) * displacement_operator(b1 + b2, N)
    assert np.max(np.abs(lhs[:40, :40] - rhs[:40, :40])) < 1e-7


# -- squeezing ----------------------------------------------------------------------


def test_squeeze_zero_is_identity():
    np.testing.assert_allclose(squeeze_operator(0, 0.3, 20), np.eye(20), atol=1e-15)


def test_squeezed_vacuum_parity_and_p0():
    S = squeeze_operator(0.54, 0, 120)
    p = np.abs(S[:, 0]) ** 2
    assert p[1] == 0 and p[3] == 0
    assert p[0] == pytest.approx(1 / math.cosh(0.54), abs=1e-12)
    assert round(p[0], 6) == 0.870036


def test_squeeze_paths_agree():
    Sc = squeeze_operator(0.6, 0.9, 240, "closed")
    Se = squeeze_operator(0.6, 0.9, 240, "expm")
    assert np.max(np.abs(Sc[:30, :30] - Se[:30, :30])) < 1e-8


def test_squeeze_rejects_large_r():
    with pytest.raises(ValueError, match="exceeds"):
        squeeze_operator(1.6, 0, 400)
    with pytest.raises(ValueError):
        squeeze_operator(-0.1, 0, 40)


def test_db_convention():
    assert db_to_r(8) == pytest.approx(0.9210, abs=1e-4)
    assert r_to_db(db_to_r(5.5)) == pytest.approx(5.5)


def test_effective_displacement_identity():
    # S D(beta) S^+ = D(beta_eff)
    b, r, ph = 0.6 - 0.3j, 0.4, 1.1
    N = 200
    S = squeeze_operator(r, ph, N)
    lhs = S @ displacement_operator(b, N) @ S.conj().T
    rhs = displacement_operator(effective_displacement(b, r, ph), N)
    assert np.max(np.abs(lhs[:30, :30] - rhs[:30, :30])) < 1e-8


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 1.2, **finite), st.floats(-math.pi, math.pi, **finite))
def test_squeeze_preserves_parity(seed, r, ph):
    v = random_state(np.random.default_rng(seed), n=10, dim=40)
    p = populations_in_basis(v, ProbeBasis.squeezed(r, ph))
    assert parity(p) == pytest.approx(parity(v.populations), abs=1e-7)


# -- bases and populations ------------------------------------------------------------


def test_basis_kind_validation():
    with pytest.raises(ValueError):
        ProbeBasis("number", beta=1)
    with pytest.raises(ValueError):
        ProbeBasis("bogus")
    with pytest.raises(ValueError):
        ProbeBasis.squeezed(-0.2, 0)


def test_number_basis_populations_are_amplitudes():
    v = random_state(np.random.default_rng(1))
    np.testing.assert_allclose(populations_in_basis(v, ProbeBasis.number()).p, v.populations)


def test_squeezed_occupation_of_odd_cat():
    a = 4
    b = ProbeBasis.squeezed(0.54, aligned_squeeze_phase(a))
    p = populations_in_basis(cat_state(a, "-"), b)
    assert abs(p.p.sum() - 1) < 1e-6
    assert np.max(p.p[0::2]) < 1e-12
    # the cat's <n_s> differs from the coherent state's only by exponentially small terms
    pc = populations_in_basis(coherent_state(a), b)
    assert pc.mean_n == pytest.approx(squeezed_mean_occupation(a, 0.54), rel=1e-6)
    assert pc.mean_n == pytest.approx(5.754, abs=1e-3)


@pytest.mark.parametrize("a", [1.0, 3.0 * np.exp(0.4j), 6.0, 8.0])
@pytest.mark.parametrize("r", [0.3, 0.7, 1.0])
def test_squeezed_mean_operator_vs_formula(a, r):
    b = ProbeBasis.squeezed(r, aligned_squeeze_phase(a))
    m = populations_in_basis(coherent_state(a), b).mean_n
    assert m == pytest.approx(squeezed_mean_occupation(a, r), rel=1e-6)


def test_squeezed_phase_sensitivity():
    a, r = 4.0, 0.5
    aligned = populations_in_basis(coherent_state(a), ProbeBasis.squeezed(r, aligned_squeeze_phase(a))).mean_n
    rotated = populations_in_basis(coherent_state(a),
                                   ProbeBasis.squeezed(r, aligned_squeeze_phase(a) + math.pi)).mean_n
    assert rotated > 5 * aligned
    assert rotated == pytest.approx(a * a * math.exp(2 * r) + math.sinh(r) ** 2, rel=1e-6)


def test_squeezed_mean_zero_r():
    assert squeezed_mean_occupation(2 + 1j, 0) == pytest.approx(5)


def test_r_min_matches_scalar_search():
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(lambda r: squeezed_mean_occupation(4, r), bounds=(0, 3), method="bounded",
                          options={"xatol": 1e-10})
    assert r_min(4) == pytest.approx(res.x, abs=1e-6)
    assert r_min(4) == pytest.approx(math.log(65) / 4)
    assert round(r_min(4), 4) == 1.0436


def test_density_populations_match_pure():
    v = cat_state(2, "+")
    b = ProbeBasis.displaced_squeezed(0.4 - 0.2j, 0.3, 0.5)
    pv = populations_in_basis(v, b).p
    pr = populations_from_density(np.outer(v.amps, v.amps.conj()), b).p
    np.testing.assert_allclose(pr[: pv.size], pv[: pr.size], atol=1e-12)


def test_displaced_basis_shifts_coherent_to_vacuum():
    a = 1.5 + 0.5j
    p = populations_in_basis(coherent_state(a), ProbeBasis.displaced(a)).p
    assert p[0] == pytest.approx(1, abs=1e-12)


def test_population_vector_invariants():
    with pytest.raises(ValueError):
        PopulationVector(np.array([0.6, 0.5]))
    with pytest.raises(ValueError):
        PopulationVector(np.array([-0.1, 0.5]))


# -- parity -------------------------------------------------------------------------


def test_parity_of_cats():
    for a in (0.7, 2.0, 4.5):
        assert parity(cat_state(a, "-").populations) == pytest.approx(-1, abs=1e-12)
        assert parity(cat_state(a, "+").populations) == pytest.approx(1, abs=1e-12)


def test_parity_of_mixture_is_poisson_series():
    # equal mixture of |a> and |-a>: both have Poisson number statistics
    p = 0.5 * (coherent_state(3).populations + coherent_state(-3).populations)
    series = sum((-1) ** n * poisson.pmf(n, 9) for n in range(200))
    assert parity(p) == pytest.approx(series, abs=1e-12)
    assert abs(parity(p)) < 1e-7


def test_parity_of_even_odd_cat_mixture_vanishes():
    p = 0.5 * (cat_state(3, "+").populations + cat_state(3, "-").populations)
    assert abs(parity(p)) < 1e-12


@given(st.lists(st.floats(0, 1, **finite), min_size=1, max_size=30))
def test_parity_bounded(raw):
    p = np.array(raw)
    if p.sum() > 0:
        p = p / p.sum()
    assert -1 - 1e-12 <= parity(p) <= 1 + 1e-12


def test_number_operator_diag():
    np.testing.assert_array_equal(np.diag(number_op(4)).real, [0, 1, 2, 3])


def test_fock_state_bounds():
    assert fock_state(2, 5).populations[2] == 1
    with pytest.raises(ValueError):
        fock_state(5, 5)


# -- physical units -------------------------------------------------------------------


def test_physical_units_ca40():
    u = physical_units(2 * math.pi * 2.08e6, CA40_MASS_U, 7.8)
    assert u["z0"] == pytest.approx(7.8e-9, rel=0.01)
    assert u["separation"] >= 240e-9
    assert u["separation"] == pytest.approx(4 * 7.8 * u["z0"])


def test_physical_units_classical_limit():
    assert physical_units(1e6, 1e20, 1)["z0"] < 1e-16
