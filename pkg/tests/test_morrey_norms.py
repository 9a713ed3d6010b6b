import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_field

from bmlab.errors import InvalidParameter
from bmlab.morrey_norms import (
    CheminLernerParams,
    MorreyConfig,
    NonZeroMeanWarning,
    SpaceParams,
    besov_morrey_norm,
    besov_morrey_report,
    bochner_norm,
    chemin_lerner_norm,
    default_radii,
    linf_norm,
    linf_norm_scan,
    lp_norm,
    morrey_norm,
    morrey_norm_bruteforce,
    time_integral,
)
from bmlab.spectral_core import FieldSeries, GridSpec, PhysicalField


def test_exponent_validation():
    with pytest.raises(InvalidParameter):
        SpaceParams(2, 0.0, 2.0, 3.0)
    with pytest.raises(InvalidParameter):
        SpaceParams(2, 0.0, 4.0, 0.5)
    with pytest.raises(InvalidParameter):
        SpaceParams(2, 0.0, 4.0, 2.0, r=0.5)
    with pytest.raises(InvalidParameter):
        MorreyConfig((0.0,))
    with pytest.raises(InvalidParameter):
        CheminLernerParams(0.5)


def test_default_radii_reach_covering_radius():
    g = GridSpec(3, 16)
    radii = default_radii(g)
    assert radii[0] == 1.0 and radii[-1] >= math.sqrt(3) * 8


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.sampled_from([(2.0, 2.0), (4.0, 2.0), (3.0, 1.5)]))
def test_fft_morrey_matches_bruteforce(seed, pq):
    grid = GridSpec(2, 8)
    u = random_field(grid, np.random.default_rng(seed), truncate=False)
    p, q = pq
    a = morrey_norm(u, p, q)
    b = morrey_norm_bruteforce(u, p, q)
    assert abs(a - b) <= 1e-10 * b


def test_morrey_with_p_equal_q_is_lp(grid2, rng):
    u = random_field(grid2, rng)
    assert morrey_norm(u, 3.0, 3.0) == pytest.approx(lp_norm(u, 3.0), rel=1e-12)


def test_morrey_of_constant(grid2):
    # the whole-torus ball dominates for a constant when q < p
    u = PhysicalField(grid2, np.ones(grid2.shape))
    assert morrey_norm(u, 4.0, 2.0) >= lp_norm(u, 4.0) * (1 - 1e-12)


def test_linf_scan_oracle(grid2, rng):
    u = random_field(grid2, rng, comps=2)
    assert linf_norm(u) == pytest.approx(linf_norm_scan(u), rel=1e-14)


def test_r_monotonicity(grid2, rng):
    u = random_field(grid2, rng)
    n1 = besov_morrey_norm(u, SpaceParams(2, 0.5, 4.0, 2.0, 1.0))
    n2 = besov_morrey_norm(u, SpaceParams(2, 0.5, 4.0, 2.0, 2.0))
    ninf = besov_morrey_norm(u, SpaceParams(2, 0.5, 4.0, 2.0, math.inf))
    assert n1 >= n2 >= ninf > 0


def test_besov_zero_and_scaling(grid2, rng):
    sp = SpaceParams(2, 1.0, 4.0, 2.0)
    assert besov_morrey_norm(PhysicalField(grid2, np.zeros(grid2.shape)), sp) == 0.0
    u = random_field(grid2, rng)
    v = PhysicalField(grid2, -3.0 * u.values)
    assert besov_morrey_norm(v, sp) == pytest.approx(3 * besov_morrey_norm(u, sp), rel=1e-12)


def test_nonzero_mean_warning(grid2, rng):
    u = random_field(grid2, rng, zero_mean=False)
    sp = SpaceParams(2, 0.0, 4.0, 2.0)
    with pytest.warns(NonZeroMeanWarning):
        besov_morrey_norm(PhysicalField(grid2, u.values + 1.0), sp)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        besov_morrey_norm(PhysicalField(grid2, u.values + 1.0), sp.with_(mode="inhomogeneous"))


def test_report_fields(grid2, rng):
    rep = besov_morrey_report(random_field(grid2, rng), SpaceParams(2, 0.0, 4.0, 2.0, math.inf))
    assert rep["params"]["r"] == "inf"
    assert rep["truncation_range"]["j_max"] >= rep["truncation_range"]["j_lo"]
    assert rep["morrey"]["radius_cap"] > 0


def _constant_series(u, T, steps):
    times = np.linspace(0, T, steps + 1)
    vals = np.broadcast_to(u.values, (steps + 1,) + u.values.shape).copy()
    return FieldSeries(u.grid, times, vals)


@pytest.mark.parametrize("beta", [1.0, 2.0, math.inf])
def test_chemin_lerner_of_constant_series(grid2, rng, beta):
    u = random_field(grid2, rng)
    sp = SpaceParams(2, 0.5, 4.0, 2.0, 1.0)
    T = 0.5
    s = _constant_series(u, T, 10)
    factor = 1.0 if math.isinf(beta) else T ** (1 / beta)
    base = besov_morrey_norm(u, sp)
    cl = CheminLernerParams(beta)
    assert chemin_lerner_norm(s, sp, cl) == pytest.approx(factor * base, rel=1e-12)
    assert bochner_norm(s, sp, cl) == pytest.approx(factor * base, rel=1e-12)


def test_minkowski_ordering(grid2, rng):
    u = random_field(grid2, rng)
    w = random_field(grid2, rng)
    times = np.linspace(0, 1, 11)
    vals = np.stack([np.cos(3 * t) * u.values + t * w.values for t in times])
    s = FieldSeries(grid2, times, vals)
    sp1 = SpaceParams(2, 0.5, 4.0, 2.0, 1.0)
    # beta >= r: Bochner is the smaller norm
    assert bochner_norm(s, sp1, CheminLernerParams(math.inf)) <= chemin_lerner_norm(s, sp1, CheminLernerParams(math.inf)) + 1e-12
    spinf = sp1.with_(r=math.inf)
    # beta <= r: Chemin-Lerner is the smaller norm
    assert chemin_lerner_norm(s, spinf, CheminLernerParams(1.0)) <= bochner_norm(s, spinf, CheminLernerParams(1.0)) + 1e-12


def test_time_integral():
    assert time_integral(np.ones(5), 0.25) == pytest.approx(1.0)
    assert time_integral(np.ones(1), 0.25) == 0.0
