import math

import numpy as np
import pytest

from conftest import random_field

from bmlab.errors import ContractionFailure, InvalidField, InvalidParameter
from bmlab.spectral_core import FieldSeries, PhysicalField, fft_forward, heat_evolve, ifft_array
from bmlab.stokes_solver import (
    energy_history,
    momentum_residual,
    phi_functions,
    pressure_from_forcing,
    solve_linearized_ns,
    solve_stokes,
)


def _mode(grid):
    x, y = grid.mesh()
    return PhysicalField(grid, np.stack([3 * np.cos(2 * x) * np.sin(3 * y), -2 * np.sin(2 * x) * np.cos(3 * y)]))


def test_phi_functions_series_branch():
    z = np.array([-1e-3, -5e-3, -0.02, -1.0])
    p1, p2 = phi_functions(z)
    assert np.allclose(p1, np.expm1(z) / z, rtol=1e-13)
    assert np.allclose(p2, (np.expm1(z) - z) / z ** 2, rtol=1e-10)


def test_unforced_eigenmode_decays_exactly(grid2):
    u0 = _mode(grid2)
    sol = solve_stokes(u0, dt=0.01, T=0.1)
    assert np.abs(sol.u_series.values[-1] - math.exp(-13 * 0.1) * u0.values).max() < 1e-13
    assert np.abs(sol.grad_pi_series.values).max() == 0.0


def test_unforced_matches_heat(grid2, rng):
    u0 = random_field(grid2, rng, comps=2, div_free=True)
    sol = solve_stokes(u0, dt=0.02, T=0.2)
    ref = heat_evolve(fft_forward(u0), 0.2)
    assert np.abs(sol.u_series.values[-1] - ifft_array(ref.coeffs, grid2)).max() < 1e-13


def test_gradient_forcing_is_pure_pressure(grid2, rng):
    u0 = random_field(grid2, rng, comps=2, div_free=True)
    g = random_field(grid2, rng)
    gg = fft_forward(g)
    from bmlab.spectral_core import differential_op

    grad = ifft_array(differential_op(gg, "gradient").coeffs, grid2)
    times = np.linspace(0, 0.2, 11)
    f = FieldSeries(grid2, times, np.broadcast_to(grad, (11,) + grad.shape).copy())
    sol = solve_stokes(u0, f)
    free = solve_stokes(u0, dt=0.02, T=0.2)
    assert np.abs(sol.u_series.values - free.u_series.values).max() < 1e-12
    assert np.abs(sol.grad_pi_series.values[-1] - grad).max() < 1e-12
    assert np.abs(ifft_array(pressure_from_forcing(PhysicalField(grid2, grad)).coeffs, grid2) - grad).max() < 1e-12


def test_momentum_residual_small(grid2, rng):
    u0 = random_field(grid2, rng, comps=2, div_free=True)
    times = np.linspace(0, 0.1, 6)
    f = FieldSeries(grid2, times, np.stack([np.sin(t) * random_field(grid2, np.random.default_rng(3), comps=2).values for t in times]))
    sol = solve_stokes(u0, f)
    assert momentum_residual(sol) < 1e-13


def test_stokes_validation(grid2, rng):
    with pytest.raises(InvalidField):
        solve_stokes(random_field(grid2, rng, comps=2), dt=0.1, T=0.2)
    with pytest.raises(InvalidParameter):
        solve_stokes(_mode(grid2), dt=0.03, T=0.1)
    with pytest.raises(InvalidParameter):
        solve_stokes(_mode(grid2))


def test_linearized_reduces_to_stokes(grid2, rng):
    u0 = random_field(grid2, rng, comps=2, div_free=True)
    lin = solve_linearized_ns(u0, dt=0.02, T=0.1)
    ref = solve_stokes(u0, dt=0.02, T=0.1)
    assert np.abs(lin.u_series.values - ref.u_series.values).max() < 1e-14
    zero_a = PhysicalField(grid2, np.zeros(grid2.shape))
    lin0 = solve_linearized_ns(u0, a_series=zero_a, dt=0.02, T=0.1)
    assert np.abs(lin0.u_series.values - ref.u_series.values).max() < 1e-14


def test_constant_density_perturbation_rescales_viscosity(grid2):
    u0 = _mode(grid2)
    a = PhysicalField(grid2, np.full(grid2.shape, 0.3))
    sol = solve_linearized_ns(u0, a_series=a, dt=0.005, T=0.05, inner_tol=1e-13)
    exact = math.exp(-1.3 * 13 * 0.05) * u0.values
    assert np.abs(sol.u_series.values[-1] - exact).max() < 1e-4 * np.abs(u0.values).max()


def test_linearized_energy_decreases_with_transport(grid2, rng):
    u0 = random_field(grid2, rng, comps=2, div_free=True)
    v = PhysicalField(grid2, 0.5 * random_field(grid2, rng, comps=2, div_free=True).values)
    a = PhysicalField(grid2, 0.2 * random_field(grid2, rng).values)
    sol = solve_linearized_ns(u0, a_series=a, v_series=v, dt=0.01, T=0.1)
    e = energy_history(sol.u_series)
    assert np.all(np.diff(e) <= 1e-12 * e[0])
    assert sol.diagnostics["contraction_ratio"] < 0.5
    assert momentum_residual(sol) < 1e-12


def test_density_gate(grid2, rng):
    u0 = random_field(grid2, rng, comps=2, div_free=True)
    a = PhysicalField(grid2, np.full(grid2.shape, 0.97))
    with pytest.raises(ContractionFailure):
        solve_linearized_ns(u0, a_series=a, dt=0.01, T=0.05)
