import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_field

from bmlab.errors import InvalidField, InvalidParameter, ShapeError
from bmlab.spectral_core import (
    FieldSeries,
    GridSpec,
    PhysicalField,
    SpectralField,
    dealias,
    differential_op,
    divergence_free_defect,
    fft_array,
    fft_forward,
    fft_inverse,
    get_threads,
    heat_evolve,
    hermitian_defect,
    ifft_array,
    interpolate,
    leray_project,
    multiply,
    set_threads,
    trig_sup,
)


def test_grid_validation():
    with pytest.raises(InvalidParameter):
        GridSpec(2, 24)
    with pytest.raises(InvalidParameter):
        GridSpec(4, 16)
    with pytest.raises(InvalidParameter):
        GridSpec(2, 16, -1.0)
    g = GridSpec(3, 16, 2.0)
    assert g.shape == (16, 16, 16)
    assert g.k_nyquist == pytest.approx(math.pi * 16 / 2.0)


def test_physical_field_rejects_nonfinite(grid2):
    vals = np.zeros(grid2.shape)
    vals[0, 0] = np.nan
    with pytest.raises(InvalidField):
        PhysicalField(grid2, vals)
    with pytest.raises(ShapeError):
        PhysicalField(grid2, np.zeros((3, 3)))


def test_constant_field_has_only_zero_mode(grid2):
    c = fft_forward(PhysicalField(grid2, np.ones(grid2.shape))).coeffs.copy()
    assert c[0, 0, 0] == pytest.approx(1.0)
    c[0, 0, 0] = 0
    assert np.abs(c).max() < 1e-15


def test_single_cosine_mode(grid2):
    x, _ = grid2.mesh()
    c = fft_forward(PhysicalField(grid2, np.cos(x))).coeffs[0].copy()
    assert c[1, 0] == pytest.approx(0.5)
    assert c[-1, 0] == pytest.approx(0.5)
    c[1, 0] = c[-1, 0] = 0
    assert np.abs(c).max() < 1e-15


def test_round_trip_against_direct_dft():
    grid = GridSpec(2, 8)
    rng = np.random.default_rng(0)
    u = rng.standard_normal((1,) + grid.shape)
    k = np.arange(8)
    W = np.exp(-2j * np.pi * np.outer(k, k) / 8)
    direct = W @ u[0] @ W.T / 64
    assert np.abs(fft_array(u, grid)[0] - direct).max() < 1e-14
    back = fft_inverse(fft_forward(PhysicalField(grid, u))).values
    assert np.abs(back - u).max() < 1e-12 * np.abs(u).max()


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_round_trip_and_hermitian_symmetry(seed):
    grid = GridSpec(3, 8)
    u = np.random.default_rng(seed).standard_normal((2,) + grid.shape)
    c = fft_array(u, grid)
    assert hermitian_defect(c) < 1e-12
    assert np.abs(ifft_array(c, grid) - u).max() < 1e-12 * np.abs(u).max()


def test_laplacian_eigenfunction(grid2):
    x, y = grid2.mesh()
    u = PhysicalField(grid2, np.cos(2 * x + 3 * y))
    lap = fft_inverse(differential_op(fft_forward(u), "laplacian")).values
    assert np.abs(lap + 13 * u.values).max() < 1e-11


def test_div_grad_is_laplacian(grid2, rng):
    g = fft_forward(random_field(grid2, rng))
    dg = differential_op(differential_op(g, "gradient"), "divergence")
    assert np.abs(dg.coeffs - differential_op(g, "laplacian").coeffs).max() < 1e-12


def test_partial_of_cosine(grid2):
    x, _ = grid2.mesh()
    d = fft_inverse(differential_op(fft_forward(PhysicalField(grid2, np.cos(x))), "partial", 0)).values[0]
    assert np.abs(d + np.sin(x)).max() < 1e-12
    with pytest.raises(InvalidParameter):
        differential_op(fft_forward(PhysicalField(grid2, np.cos(x))), "partial", 5)


def test_leray_annihilates_gradients(grid2, rng):
    g = fft_forward(random_field(grid2, rng))
    P = leray_project(differential_op(g, "gradient"))
    assert np.abs(P.coeffs).max() < 1e-14


def test_leray_fixes_divergence_free_and_is_idempotent(grid3, rng):
    u = fft_forward(random_field(grid3, rng, comps=3, div_free=True))
    assert np.abs(leray_project(u).coeffs - u.coeffs).max() < 1e-12
    f = fft_forward(random_field(grid3, rng, comps=3))
    Pf = leray_project(f)
    assert np.abs(leray_project(Pf).coeffs - Pf.coeffs).max() < 1e-12
    assert divergence_free_defect(Pf) < 1e-12
    # explicit multiplier matrix at one wavevector
    ks = grid3.wavenumbers(deriv=True)
    idx = (1, 2, 3)
    xi = np.array([np.broadcast_to(k, grid3.shape)[idx] for k in ks])
    M = np.eye(3) - np.outer(xi, xi) / xi.dot(xi)
    assert np.allclose(Pf.coeffs[(slice(None),) + idx], M @ f.coeffs[(slice(None),) + idx], atol=1e-14)


def test_heat_semigroup(grid2, rng):
    U = fft_forward(random_field(grid2, rng))
    assert np.array_equal(heat_evolve(U, 0.0).coeffs, U.coeffs)
    a = heat_evolve(heat_evolve(U, 0.1), 0.2).coeffs.copy()
    assert np.abs(a - heat_evolve(U, 0.3).coeffs).max() < 1e-12 * np.abs(U.coeffs).max()
    x, y = grid2.mesh()
    mode = fft_forward(PhysicalField(grid2, np.sin(x + 2 * y)))
    out = fft_inverse(heat_evolve(mode, 0.3)).values[0]
    assert np.abs(out - math.exp(-5 * 0.3) * np.sin(x + 2 * y)).max() < 1e-13
    with pytest.raises(InvalidParameter):
        heat_evolve(U, -1.0)


def test_dealiased_product_exact_for_truncated_inputs(grid2):
    x, y = grid2.mesh()
    a = PhysicalField(grid2, np.cos(3 * x))
    b = PhysicalField(grid2, np.sin(4 * y))
    prod = fft_inverse(multiply(a, b)).values[0]
    assert np.abs(prod - np.cos(3 * x) * np.sin(4 * y)).max() < 1e-14
    assert dealias(fft_forward(a)).coeffs.shape == (1,) + grid2.shape


def test_interpolation_matches_direct_sum(grid2, rng):
    u = random_field(grid2, rng, comps=2)
    pts = rng.uniform(0, grid2.L, size=(2, 30))
    a = interpolate(u, pts, method="nufft")
    b = interpolate(u, pts, method="direct")
    assert np.abs(a - b).max() < 1e-11


def test_trig_sup_dominates_grid_max(grid2, rng):
    u = random_field(grid2, rng)
    assert trig_sup(u) >= np.abs(u.values).max() - 1e-14


def test_field_series_checks_uniform_times(grid2):
    vals = np.zeros((3, 1) + grid2.shape)
    with pytest.raises(InvalidParameter):
        FieldSeries(grid2, np.array([0.0, 0.1, 0.3]), vals)
    s = FieldSeries(grid2, np.array([0.0, 0.1, 0.2]), vals)
    assert s.dt == pytest.approx(0.1)
    assert s.T == pytest.approx(0.2)


def test_thread_setting_does_not_change_results(grid3, rng):
    u = random_field(grid3, rng).values
    set_threads(1)
    a = fft_array(u, grid3)
    set_threads(2)
    assert get_threads() == 2
    b = fft_array(u, grid3)
    set_threads(None)
    assert np.array_equal(a, b)
    with pytest.raises(InvalidParameter):
        set_threads(0)


def test_spectral_field_arithmetic(grid2, rng):
    U = fft_forward(random_field(grid2, rng))
    assert isinstance(U + U, SpectralField)
    assert np.allclose((U - U).coeffs, 0)
