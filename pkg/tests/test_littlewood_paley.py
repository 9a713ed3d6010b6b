import numpy as np
import pytest

from conftest import random_field

from bmlab.errors import GridTooCoarse, InvalidParameter
from bmlab.littlewood_paley import (
    annulus_bounds,
    bony_split,
    chi,
    commutator_multiply,
    commutator_transport,
    decompose,
    get_partition,
    littlewood_paley_block,
    low_pass,
    paraproduct,
    partition_of_unity_defect,
    phi,
    quasi_orthogonality_defect,
    remainder,
)
from bmlab.spectral_core import GridSpec, PhysicalField, fft_forward, fft_inverse, multiply


def test_profiles():
    r = np.linspace(0, 4, 2001)
    c = chi(r)
    assert np.all(c[r <= 0.75] == 1.0)
    assert np.all(c[r >= 4 / 3] == 0.0)
    assert np.all(np.diff(c) <= 0)
    p = phi(r)
    assert np.all(p[(r < 0.75) | (r > 8 / 3)] == 0.0)
    assert np.all(p >= 0)
    # telescoping on a range of radii
    rr = np.linspace(0.8, 30, 500)
    total = sum(phi(rr / 2.0 ** j) for j in range(-1, 6))
    assert np.allclose(total, 1.0, atol=1e-15)


@pytest.mark.parametrize("mode", ["homogeneous", "inhomogeneous"])
@pytest.mark.parametrize("n,N", [(2, 32), (3, 16)])
def test_partition_of_unity(n, N, mode):
    assert partition_of_unity_defect(GridSpec(n, N), mode) < 1e-14


def test_reconstruction_and_quasi_orthogonality(grid2, rng):
    U = fft_forward(random_field(grid2, rng))
    d = decompose(U, "homogeneous")
    assert np.abs(d.reconstruct().coeffs - U.coeffs).max() < 1e-14
    assert quasi_orthogonality_defect(U) < 1e-14


def test_block_support_inside_annulus(grid2, rng):
    U = fft_forward(random_field(grid2, rng, truncate=False))
    kmag = grid2.kmag()
    for j in get_partition(grid2).indices:
        lo, hi = annulus_bounds(j)
        c = littlewood_paley_block(U, j).coeffs[0]
        assert np.abs(c[(kmag < lo) | (kmag > hi)]).max(initial=0) == 0.0


def test_low_pass_support_in_ball(grid2, rng):
    U = fft_forward(random_field(grid2, rng, truncate=False))
    kmag = grid2.kmag()
    for j in (0, 1, 2):
        c = low_pass(U, j).coeffs[0]
        assert np.abs(c[kmag > 4 / 3 * 2.0 ** j]).max(initial=0) == 0.0


def test_block_index_out_of_range(grid2, rng):
    U = fft_forward(random_field(grid2, rng))
    with pytest.raises(IndexError):
        littlewood_paley_block(U, 40)


def test_coarse_grid_rejected():
    with pytest.raises(GridTooCoarse):
        get_partition(GridSpec(2, 4))


def test_unknown_mode():
    with pytest.raises(InvalidParameter):
        get_partition(GridSpec(2, 16), "weird")


def test_bony_identity(grid2, rng):
    u = random_field(grid2, rng)
    v = random_field(grid2, rng)
    tuv, tvu, r = bony_split(u, v)
    prod = multiply(u, v).coeffs
    assert np.abs(tuv.coeffs + tvu.coeffs + r.coeffs - prod).max() < 1e-13
    assert np.abs(paraproduct(u, v).coeffs + remainder(u, v).coeffs - prod).max() < 1e-13


def test_paraproduct_by_constant(grid2, rng):
    v = random_field(grid2, rng)
    one = PhysicalField(grid2, np.ones(grid2.shape))
    # a constant sits in the lowest block only, so T_v 1 vanishes and T_1 v
    # misses only the lowest two blocks of v
    assert np.abs(paraproduct(v, one).coeffs).max() < 1e-15
    part = get_partition(grid2, "inhomogeneous")
    low = sum(part.block_array(fft_forward(v).coeffs, j) for j in (-1, 0))
    assert np.abs(paraproduct(one, v).coeffs - (fft_forward(v).coeffs - low)).max() < 1e-13


def test_commutators_vanish_for_trivial_coefficients(grid2, rng):
    u = random_field(grid2, rng)
    zero = PhysicalField(grid2, np.zeros((2,) + grid2.shape))
    const = PhysicalField(grid2, np.stack([np.full(grid2.shape, 0.7), np.full(grid2.shape, -0.2)]))
    for j in (0, 2):
        assert np.abs(commutator_transport(u, zero, j).coeffs).max() == 0.0
        assert np.abs(commutator_transport(u, const, j).coeffs).max() < 1e-14
        c = PhysicalField(grid2, np.full(grid2.shape, 3.0))
        assert np.abs(commutator_multiply(c, u, j).coeffs).max() < 1e-14


def test_commutator_pieces_sum(grid2, rng):
    u = random_field(grid2, rng)
    v = random_field(grid2, rng, comps=2, div_free=True)
    a = random_field(grid2, rng)
    for j in (0, 1, 3):
        out, terms = commutator_transport(u, v, j, pieces=True)
        total = sum(t.coeffs for t in terms.values())
        assert np.abs(total - out.coeffs).max() < 1e-12 * max(1.0, np.abs(out.coeffs).max())
        out, terms = commutator_multiply(a, u, j, pieces=True)
        total = sum(t.coeffs for t in terms.values())
        assert np.abs(total - out.coeffs).max() < 1e-12 * max(1.0, np.abs(out.coeffs).max())


def test_commutator_rejects_compressible_velocity(grid2, rng):
    u = random_field(grid2, rng)
    v = random_field(grid2, rng, comps=2)
    with pytest.raises(InvalidParameter):
        commutator_transport(u, v, 1)


def test_blocks_are_real(grid2, rng):
    U = fft_forward(random_field(grid2, rng))
    for j in get_partition(grid2).indices:
        b = fft_inverse(littlewood_paley_block(U, j))
        assert np.isrealobj(b.values)
