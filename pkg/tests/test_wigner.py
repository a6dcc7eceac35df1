import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ioncat.fock import (PopulationVector, ProbeBasis, aligned_squeeze_phase, cat_state, coherent_state,
                         fock_state, populations_in_basis)
from ioncat.wigner import (TWO_OVER_PI, FringeFit, WignerGrid, basis_point_for, cat_wigner, fringe_fit,
                           fringe_model, grid_points, mixture_wigner, reconstruct_grid, wigner_oracle,
                           wigner_point_from_populations, zero_crossings)

finite = dict(allow_nan=False, allow_infinity=False)


def test_vacuum_at_origin():
    _, W, _ = wigner_point_from_populations(populations_in_basis(fock_state(0, 10), ProbeBasis.displaced(0j)))
    assert W == pytest.approx(TWO_OVER_PI)


def test_odd_cat_origin_negative():
    for a in (1.0, 2.5, 4.0):
        _, W, _ = wigner_point_from_populations(populations_in_basis(cat_state(a, "-"), ProbeBasis.displaced(0j)))
        assert W == pytest.approx(-TWO_OVER_PI, abs=1e-12)


def test_point_requires_displaced_basis():
    with pytest.raises(ValueError):
        wigner_point_from_populations(PopulationVector(np.array([1.0])))


def test_point_sem_propagation():
    pops = PopulationVector(np.array([0.6, 0.4]), ProbeBasis.displaced(0.5))
    _, _, s = wigner_point_from_populations(pops, p_sem=[0.03, 0.04])
    assert s == pytest.approx(TWO_OVER_PI * 0.05)
    _, _, s = wigner_point_from_populations(pops, parity_sem=0.02)
    assert s == pytest.approx(TWO_OVER_PI * 0.02)


def test_oracle_simple_values():
    a = 1.3 - 0.4j
    assert wigner_oracle(coherent_state(a), a) == pytest.approx(TWO_OVER_PI, abs=1e-12)
    assert wigner_oracle(fock_state(1, 20), 0) == pytest.approx(-TWO_OVER_PI, abs=1e-12)


def test_oracle_accepts_density_matrix():
    v = cat_state(1.5, "+")
    rho = np.outer(v.amps, v.amps.conj())
    for b in (0, 0.4j, 1 - 0.3j):
        assert wigner_oracle(rho, b) == pytest.approx(wigner_oracle(v, b), abs=1e-12)


def test_oracle_normalization_on_disk():
    a = 2.0
    h = 0.05
    R = a + 5
    x = np.arange(-R, R + h / 2, h)
    X, Y = np.meshgrid(x, x)
    W = cat_wigner(a, -1, X + 1j * Y)
    W[X ** 2 + Y ** 2 > R ** 2] = 0
    from scipy.integrate import trapezoid

    assert trapezoid(trapezoid(W, x), x) == pytest.approx(1.0, abs=1e-3)
    # the oracle agrees with the closed form used above
    pts = [0.3 + 0.2j, -1.9, 0.7j]
    np.testing.assert_allclose([wigner_oracle(cat_state(a, "-"), p) for p in pts], cat_wigner(a, -1, pts),
                               atol=1e-10)


def test_basis_point_inverts_effective_mapping():
    r, phi = 0.6, 1.3
    for target in (0.5j, 1.2 - 0.3j, -2.0):
        b = ProbeBasis.displaced_squeezed(basis_point_for(target, r, phi), r, phi)
        assert b.effective_point == pytest.approx(target, abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1), st.complex_numbers(max_magnitude=2.0, **finite),
       st.floats(0, 0.8, **finite), st.floats(-math.pi, math.pi, **finite))
def test_reconstruction_chain_identity(seed, beta, r, phi):
    rng = np.random.default_rng(seed)
    a = np.zeros(40, dtype=complex)
    a[:8] = rng.normal(size=8) + 1j * rng.normal(size=8)
    from ioncat.fock import normalized

    v = normalized(a)
    basis = ProbeBasis.displaced_squeezed(beta, r, phi) if r > 0 else ProbeBasis.displaced(beta)
    point, W, _ = wigner_point_from_populations(populations_in_basis(v, basis))
    assert W == pytest.approx(wigner_oracle(v, point), abs=1e-8)


def test_squeezed_cut_equals_unsqueezed():
    a = 4.25
    pts = 1j * np.linspace(-0.9, 0.9, 37)
    v = cat_state(a, "-")
    sq = reconstruct_grid(v, pts, r=0.5, phi_s=aligned_squeeze_phase(a), source="simulated")
    plain = reconstruct_grid(v, pts, r=0.0, source="simulated")
    assert np.max(np.abs(sq.W - plain.W)) < 1e-6


def test_grid_oracle_against_closed_form():
    pts, shape = grid_points(np.linspace(-3.2, 3.2, 17), np.linspace(-2, 2, 21))
    g = reconstruct_grid(cat_state(2.1, "-"), pts, source="oracle", shape=shape)
    assert g.as_image().shape == (21, 17)
    assert np.max(np.abs(g.W - cat_wigner(2.1, -1, pts))) < 1e-8
    centre = g.W[np.argmin(np.abs(pts))]
    assert centre < 0


def test_fitted_grid_statistically_consistent():
    pts = np.array([0.0, 0.3j, -0.5j, 0.8 + 0.2j, 1.5])
    v = cat_state(1.2, "-")
    cfg = {"gamma": 1000.0, "times": np.linspace(0, 450e-6, 121), "shots": 250, "bootstrap": 30}
    g = reconstruct_grid(v, pts, source="fitted", fit_config=cfg, threads=4)
    truth = cat_wigner(1.2, -1, pts)
    rms = float(np.sqrt(np.mean((g.W - truth) ** 2)))
    assert rms < 3 * float(np.mean(g.sem))
    assert np.all(np.abs(g.W) <= TWO_OVER_PI + 3 * g.sem + 1e-9)


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        reconstruct_grid(cat_state(1, "-"), [])
    with pytest.raises(ValueError):
        grid_points([], [1.0])


def test_failed_points_become_holes():
    g = reconstruct_grid(cat_state(1, "-"), [0.0, 100.0], source="simulated")
    assert g.holes.tolist() == [1]
    assert g.W[0] == pytest.approx(-TWO_OVER_PI)


def test_grid_parity_bound_enforced():
    with pytest.raises(ValueError):
        WignerGrid([0j], [0.9], [0.0])
    WignerGrid([0j], [0.9], [0.1])


def test_fringe_fit_ideal_cut():
    a = 4.25
    x = np.linspace(-0.9, 0.9, 73)
    W = cat_wigner(a, -1, 1j * x)
    ff = fringe_fit((x, W), alpha_guess=4.0)
    assert ff.alpha_fit == pytest.approx(a, rel=5e-3)
    assert ff.A == pytest.approx(-1.0, rel=1e-2)
    assert not ff.aliased
    assert "signed" in ff.summary()


def test_fringe_fit_from_grid_and_even_sign():
    a = 3.0
    x = np.linspace(-0.8, 0.8, 81)
    g = WignerGrid(1j * x, cat_wigner(a, +1, 1j * x), 0.0)
    ff = fringe_fit(g, alpha_guess=3.0)
    assert ff.A > 0.99 and ff.alpha_fit == pytest.approx(3.0, rel=5e-3)


def test_fringe_fit_mixture_has_no_amplitude():
    x = np.linspace(-0.9, 0.9, 73)
    W = mixture_wigner(4.25, 1j * x)
    ff = fringe_fit((x, W), alpha_guess=4.25, sem=0.02)
    assert abs(ff.A) <= 3 * ff.A_err


def test_fringe_aliasing_flag():
    x = np.linspace(-0.9, 0.9, 9)
    assert fringe_fit((x, fringe_model(x, -1, 4.25)), 4.25).aliased


def test_fringe_fit_invariants():
    with pytest.raises(ValueError):
        FringeFit(1.0, 0.0, -1.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        fringe_fit((np.array([0.0, 1.0]), np.array([0.1, 0.2])), 2.0)


def test_zero_crossing_spacing():
    a = 4.25
    x = np.linspace(-0.5, 0.5, 2001)
    z = zero_crossings(x, cat_wigner(a, -1, 1j * x))
    assert np.mean(np.diff(z)) == pytest.approx(math.pi / (4 * a), rel=0.01)
