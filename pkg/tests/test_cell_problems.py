"""Cell-problem solves: correctors, effective tensors, dispersive
coefficients, and the weighted Poincare constant.

The 1-d oracles are exact.  For the half-half two-phase laminate the first
corrector is a triangular wave with slopes +-f, f = q/a1 - 1, and the
second-corrector identity a chi2' = -a chi1 collapses the quartic
coefficient to the closed form

    D = -q^2 <chi1^2 / a> = -q f^2 L^2 / 48.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from blochlab.cell_problems import (
    chi1,
    chi2,
    corrector,
    dispersion,
    homogenized,
    pw_constant,
    rescale_corrector,
)
from blochlab.grid import make_grid
from blochlab.microstructure import (
    CoefficientField,
    Constant,
    TwoPhaseInclusion,
    rasterize,
    unit_pattern,
)


def half_half_1d(n, a1=1.0, a2=4.0):
    vals = np.where(np.arange(n) < n // 2, a1, a2)
    return CoefficientField(grid=make_grid(1, n), a=vals.astype(float))


def laminate_2d(n, a1=1.0, a2=4.0):
    g = make_grid(2, (n, n))
    stripe = np.where(np.arange(n) < n // 2, a1, a2).astype(float)
    vals = np.repeat(stripe, n)  # varies along axis 0 only
    return CoefficientField(grid=g, a=vals)


def test_corrector_constant_is_zero():
    f = rasterize(Constant(3.0), make_grid(2, (8, 8)))
    X = corrector(f, np.array([1.0, 0.0]))
    assert_allclose(X.values, 0.0, atol=1e-13)


def test_corrector_along_layers_is_zero():
    f = laminate_2d(8)
    X = corrector(f, np.array([0.0, 1.0]))
    assert_allclose(X.values, 0.0, atol=1e-12)


def test_corrector_shape_validation():
    f = half_half_1d(8)
    with pytest.raises(ValueError, match="direction"):
        corrector(f, np.array([1.0, 0.0]))


def test_harmonic_mean_1d():
    hom = homogenized(half_half_1d(16))
    assert_allclose(hom.q[0, 0], 1.6, atol=1e-12)
    assert hom.defect <= 1e-12
    assert_allclose(hom.voigt[0, 0], 2.5, atol=1e-13)


def test_laminate_2d_tensor():
    hom = homogenized(laminate_2d(16))
    assert_allclose(hom.q, np.diag([1.6, 2.5]), atol=1e-10)


def test_energy_and_flux_forms_agree():
    spec = TwoPhaseInclusion(eps=1.0, beta=7.0, rho=0.5, shape="disc")
    hom = homogenized(rasterize(spec, make_grid(2, (32, 32))), tol=1e-13)
    assert hom.defect <= 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_harmonic_and_voigt_bounds(seed):
    rng = np.random.default_rng(seed)
    n = 8
    vals = np.exp(rng.standard_normal(n * n))
    f = CoefficientField(grid=make_grid(2, (n, n)), a=vals)
    hom = homogenized(f, tol=1e-12)
    harmonic = 1.0 / np.mean(1.0 / vals)
    evals = np.linalg.eigvalsh(hom.q)
    assert evals.min() >= harmonic - 1e-8
    assert evals.max() <= np.mean(vals) + 1e-8
    # symmetry comes out of the energy form
    assert_allclose(hom.q, hom.q.T, atol=1e-13)


def test_chi_corrections_vanish_for_constant():
    f = rasterize(Constant(2.0), make_grid(2, (8, 8)))
    eta = np.array([0.3, 0.1])
    assert_allclose(chi1(f, eta).values, 0.0, atol=1e-13)
    assert_allclose(chi2(f, eta).values, 0.0, atol=1e-13)


def test_chi2_rejects_foreign_tensor():
    f = half_half_1d(32)
    wrong = homogenized(half_half_1d(32, a2=9.0))
    with pytest.raises(ValueError, match="incompatible right-hand side"):
        chi2(f, np.array([1.0]), q=wrong)


def test_chi2_accepts_matching_tensor():
    f = half_half_1d(32)
    own = homogenized(f, tol=1e-13)
    c2 = chi2(f, np.array([1.0]), q=own, tol=1e-13)
    ref = chi2(f, np.array([1.0]), tol=1e-13)
    assert_allclose(c2.values, ref.values, atol=1e-9)


def test_dispersion_constant_is_zero():
    f = rasterize(Constant(1.0), make_grid(2, (8, 8)))
    s = dispersion(f, np.array([0.25, 0.0]))
    assert abs(s.value) <= 1e-12
    assert s.compat <= 1e-10
    assert_allclose(s.q_eta_eta, 0.0625, atol=1e-12)


def test_dispersion_1d_closed_form():
    # half-half {1, 4}: q = 1.6, f = 0.6, L = 2 pi
    # D = -q f^2 L^2 / 48 = -0.048 pi^2
    exact = -0.048 * math.pi**2
    values = {}
    for n in (256, 512):
        s = dispersion(half_half_1d(n), np.array([1.0]), tol=1e-13)
        values[n] = s.value
        assert_allclose(s.q_eta_eta, 1.6, atol=1e-11)
        assert s.compat <= 1e-10
    assert_allclose(values[512], exact, rtol=5e-4)
    # second-order stencil: halving h shrinks the defect about fourfold
    ratio = abs(values[256] - exact) / abs(values[512] - exact)
    assert ratio > 3.0


def test_dispersion_nonpositive():
    rng = np.random.default_rng(49)
    vals = np.exp(rng.standard_normal(64))
    f = CoefficientField(grid=make_grid(2, (8, 8)), a=vals)
    s = dispersion(f, np.array([0.2, 0.1]))
    assert s.value <= 1e-14


def test_dispersion_axis_symmetry():
    # square inclusion is invariant under swapping the axes
    f = rasterize(TwoPhaseInclusion(eps=1.0, beta=5.0, rho=0.5), make_grid(2, (16, 16)))
    a = dispersion(f, np.array([0.25, 0.0]), tol=1e-13)
    b = dispersion(f, np.array([0.0, 0.25]), tol=1e-13)
    assert_allclose(a.value, b.value, rtol=1e-9)
    assert_allclose(a.q_eta_eta, b.q_eta_eta, rtol=1e-11)


def test_chi1_tiles_from_unit_cell():
    spec = TwoPhaseInclusion(eps=1 / 4, beta=5.0, rho=0.5)
    unit = rasterize(unit_pattern(spec), make_grid(2, (8, 8)))
    fine = rasterize(spec, make_grid(2, (32, 32)))
    eta = np.array([1.0, 0.0])
    u = chi1(unit, eta, tol=1e-13)
    f = chi1(fine, eta, tol=1e-13)
    tiled = 0.25 * np.tile(u.values.reshape(8, 8), (4, 4)).ravel()
    assert np.abs(f.values - tiled).max() <= 1e-12


def test_rescale_corrector_values_and_validation():
    spec = TwoPhaseInclusion(eps=1 / 2, beta=5.0, rho=0.5)
    unit = rasterize(unit_pattern(spec), make_grid(2, (8, 8)))
    X = chi1(unit, np.array([1.0, 0.0]), tol=1e-13)
    fine_grid = make_grid(2, (16, 16))
    w = rescale_corrector(X, 1 / 2, np.array([1.0, 0.0]), fine_grid)
    mesh = fine_grid.center_mesh()
    affine = np.broadcast_to(mesh[0], fine_grid.shape).ravel()
    periodic = w.values - affine
    assert_allclose(periodic, 0.5 * np.tile(X.values.reshape(8, 8), (2, 2)).ravel(),
                    atol=1e-12)
    with pytest.raises(ValueError, match="unit grid"):
        rescale_corrector(X, 1 / 2, np.array([1.0, 0.0]), make_grid(2, (24, 24)))
    with pytest.raises(ValueError, match="1/eps"):
        rescale_corrector(X, 0.3, np.array([1.0, 0.0]), fine_grid)


# ---------------------------------------------------------------------------
# weighted Poincare constant


def test_pw_identity_medium_1d():
    n = 16
    f = rasterize(Constant(1.0), make_grid(1, n))
    h = 2 * math.pi / n
    expect = h**2 / (4 * math.sin(h / 2) ** 2)
    got = pw_constant(f, np.array([1.0]), tol=1e-10, cg_tol=1e-13)
    assert_allclose(got, expect, rtol=1e-8)


def test_pw_quadratic_in_lam():
    f = rasterize(TwoPhaseInclusion(eps=1.0, beta=3.0, rho=0.5), make_grid(2, (8, 8)))
    lam = np.array([0.2, 0.1])
    c1 = pw_constant(f, lam, tol=1e-10)
    c2 = pw_constant(f, 2 * lam, tol=1e-10)
    assert_allclose(c2, 4 * c1, rtol=1e-7)


def test_pw_scale_invariant_in_a():
    g = make_grid(2, (8, 8))
    rng = np.random.default_rng(53)
    vals = np.exp(rng.standard_normal(64))
    f1 = CoefficientField(grid=g, a=vals)
    f2 = CoefficientField(grid=g, a=7.0 * vals)
    lam = np.array([1.0, 0.0])
    assert_allclose(pw_constant(f1, lam, tol=1e-10),
                    pw_constant(f2, lam, tol=1e-10), rtol=1e-7)


def test_pw_zero_lam():
    f = rasterize(Constant(1.0), make_grid(2, (4, 4)))
    assert pw_constant(f, np.zeros(2)) == 0.0
