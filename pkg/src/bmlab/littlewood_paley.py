"""Dyadic (Littlewood-Paley) decomposition, Bony paraproducts and commutators.

The smooth profile ``chi`` equals 1 on ``[0, 3/4]`` and 0 on ``[4/3, inf)``;
``phi(xi) = chi(xi/2) - chi(xi)`` is supported in the annulus
``3/4 <= |xi| <= 8/3`` and ``phi_j = phi(2^{-j} .)`` telescopes exactly.

Every product is formed in physical space and truncated with the 2/3 rule,
so all identities below are exact bilinear identities of the discrete
product.  For inputs that are already 2/3-truncated the product is also
alias-free, which makes identities relying on the Leibniz rule exact too.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.special

from .errors import GridTooCoarse, InvalidParameter, ShapeError
from .spectral_core import (
    GridSpec,
    SpectralField,
    divergence_free_defect,
    fft_array,
    ifft_array,
    partial_array,
    to_spectral,
)

MODES = ("homogeneous", "inhomogeneous")
CHI_INNER = 3.0 / 4.0
CHI_OUTER = 4.0 / 3.0
SHELL_INNER = 3.0 / 4.0
SHELL_OUTER = 8.0 / 3.0
MIN_RESOLVED_SHELLS = 3


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    inside = (x > 0) & (x < 1)
    xi = x[inside]
    out[inside] = scipy.special.expit(1.0 / (1.0 - xi) - 1.0 / xi)
    return out


def chi(r):
    """Radial low-pass profile."""
    return smooth_step((CHI_OUTER - np.asarray(r, dtype=float)) / (CHI_OUTER - CHI_INNER))


def phi(r):
    """Radial annulus profile ``chi(r/2) - chi(r)``."""
    r = np.asarray(r, dtype=float)
    return chi(r / 2.0) - chi(r)


def _check_mode(mode):
    if mode not in MODES:
        raise InvalidParameter(f"mode must be one of {MODES}, got {mode!r}")


class DyadicPartition:
    """Dyadic blocks covering every lattice frequency of a grid.

    Attributes
    ----------
    j_min, j_max : int
        Homogeneous block range; ``sum_{j_min..j_max} phi_j = 1`` on all
        nonzero lattice frequencies, including the corners of the cube.
    j_resolved_max : int
        Largest ``j`` whose whole annulus fits inside the Nyquist ball.
    """

    def __init__(self, grid: GridSpec, mode="homogeneous"):
        _check_mode(mode)
        self.grid = grid
        self.mode = mode
        k_corner = grid.k_nyquist * math.sqrt(grid.n)
        self.j_min = math.floor(math.log2(SHELL_INNER * grid.k_min))
        self.j_max = math.ceil(math.log2(k_corner / CHI_INNER)) - 1
        self.j_resolved_max = math.floor(math.log2(grid.k_nyquist / SHELL_OUTER))
        if self.j_resolved_max - self.j_min + 1 < MIN_RESOLVED_SHELLS:
            raise GridTooCoarse(
                f"grid N={grid.N}, L={grid.L:g} resolves shells {self.j_min}..{self.j_resolved_max}; "
                f"need at least {MIN_RESOLVED_SHELLS}")
        self.j_lo = self.j_min if mode == "homogeneous" else -1
        self._cache = {}

    @property
    def indices(self):
        return list(range(self.j_lo, self.j_max + 1))

    @property
    def resolved_indices(self):
        return list(range(self.j_lo, min(self.j_resolved_max, self.j_max) + 1))

    def truncation(self):
        return {"mode": self.mode, "j_lo": self.j_lo, "j_max": self.j_max,
                "j_resolved_max": self.j_resolved_max}

    def multiplier(self, j):
        """Block multiplier on the lattice (zero outside the partition range)."""
        key = ("block", j)
        if key not in self._cache:
            r = self.grid.kmag()
            if j < self.j_lo or j > self.j_max:
                m = np.zeros(self.grid.shape)
            elif self.mode == "inhomogeneous" and j == -1:
                m = chi(r)
            else:
                m = phi(r / 2.0 ** j)
                if self.mode == "homogeneous":
                    m[(0,) * self.grid.n] = 0.0
            m.flags.writeable = False
            self._cache[key] = m
        return self._cache[key]

    def low_multiplier(self, j):
        """Multiplier of ``S_j = sum_{l <= j-1} Delta_l``."""
        key = ("low", j)
        if key not in self._cache:
            r = self.grid.kmag()
            if j - 1 < self.j_lo:
                m = np.zeros(self.grid.shape)
            else:
                m = chi(r / 2.0 ** j)
                if self.mode == "homogeneous":
                    m[(0,) * self.grid.n] = 0.0
            m.flags.writeable = False
            self._cache[key] = m
        return self._cache[key]

    def block_array(self, coeffs, j):
        return coeffs * self.multiplier(j)


@functools.lru_cache(maxsize=16)
def get_partition(grid, mode="homogeneous"):
    return DyadicPartition(grid, mode)


def annulus_bounds(j, mode="homogeneous"):
    """Closed frequency support of ``Delta_j``."""
    if mode == "inhomogeneous" and j == -1:
        return 0.0, CHI_OUTER
    return SHELL_INNER * 2.0 ** j, SHELL_OUTER * 2.0 ** j


def littlewood_paley_block(U, j, mode="homogeneous") -> SpectralField:
    """``Delta_j u``; raises IndexError outside the partition range."""
    U = to_spectral(U)
    part = get_partition(U.grid, mode)
    if not part.j_lo <= j <= part.j_max:
        raise IndexError(f"block index {j} outside {part.j_lo}..{part.j_max}")
    return SpectralField(U.grid, part.block_array(U.coeffs, j))


def low_pass(U, j, mode="homogeneous") -> SpectralField:
    """``S_j u``, supported in the ball of radius ``(4/3) 2^j``."""
    U = to_spectral(U)
    part = get_partition(U.grid, mode)
    return SpectralField(U.grid, U.coeffs * part.low_multiplier(j))


@dataclass(frozen=True, eq=False)
class Decomposition:
    grid: GridSpec
    mode: str
    blocks: dict

    def reconstruct(self):
        total = sum(b.coeffs for b in self.blocks.values())
        return SpectralField(self.grid, total)


def decompose(U, mode="homogeneous") -> Decomposition:
    U = to_spectral(U)
    part = get_partition(U.grid, mode)
    blocks = {j: SpectralField(U.grid, part.block_array(U.coeffs, j)) for j in part.indices}
    return Decomposition(U.grid, mode, blocks)


def partition_of_unity_defect(grid, mode="homogeneous"):
    """Max deviation of the summed block multipliers from 1 (zero mode excluded
    in homogeneous mode)."""
    part = get_partition(grid, mode)
    total = sum(part.multiplier(j) for j in part.indices)
    err = np.abs(total - 1.0)
    if mode == "homogeneous":
        err[(0,) * grid.n] = 0.0
    return float(err.max())


def quasi_orthogonality_defect(U, mode="homogeneous"):
    """Max of ``|Delta_j Delta_k u|`` over ``|j - k| >= 2``, relative to ``max|u_hat|``."""
    U = to_spectral(U)
    part = get_partition(U.grid, mode)
    scale = max(np.abs(U.coeffs).max(), 1e-300)
    worst = 0.0
    for j in part.indices:
        bj = part.block_array(U.coeffs, j)
        for k in part.indices:
            if abs(j - k) >= 2:
                worst = max(worst, float(np.abs(part.block_array(bj, k)).max()))
    return worst / scale


# paraproducts -----------------------------------------------------------------

class _Blocks:
    """Physical-space blocks and cumulative low-pass sums of one field."""

    def __init__(self, coeffs, part):
        self.part = part
        self.lo = part.j_lo
        self.hi = part.j_max
        grid = part.grid
        self.blocks = [ifft_array(part.block_array(coeffs, j), grid) for j in part.indices]
        self.zero = np.zeros_like(self.blocks[0])
        cum = []
        acc = self.zero
        for b in self.blocks:
            acc = acc + b
            cum.append(acc)
        self.cum = cum

    def delta(self, k):
        if k < self.lo or k > self.hi:
            return self.zero
        return self.blocks[k - self.lo]

    def low(self, k):
        """``S_k = sum_{l <= k-1} Delta_l``."""
        top = k - 1
        if top < self.lo:
            return self.zero
        return self.cum[min(top, self.hi) - self.lo]

    def tilde(self, k):
        return self.delta(k - 1) + self.delta(k) + self.delta(k + 1)


def _finish(phys, grid):
    return fft_array(phys, grid) * grid.dealias_mask()


def _para(bu, bv):
    """Physical sum for ``T_u v = sum_k S_{k-1} u Delta_k v``."""
    acc = 0.0
    for k in bu.part.indices:
        acc = acc + bu.low(k - 1) * bv.delta(k)
    return acc


def _resonant(bu, bv):
    acc = 0.0
    for k in bu.part.indices:
        acc = acc + bu.delta(k) * bv.tilde(k)
    return acc


def _remainder(bu, bv):
    """Physical sum for ``R(u, v) = sum_k Delta_k u S_{k+2} v``."""
    acc = 0.0
    for k in bu.part.indices:
        acc = acc + bu.delta(k) * bv.low(k + 2)
    return acc


def _pair(U, V):
    U = to_spectral(U)
    V = to_spectral(V)
    if U.grid != V.grid:
        raise ShapeError("fields live on different grids")
    if U.components != V.components and 1 not in (U.components, V.components):
        raise ShapeError("component counts are incompatible")
    return U, V


def paraproduct(U, V, mode="inhomogeneous") -> SpectralField:
    """``T_u v``."""
    U, V = _pair(U, V)
    part = get_partition(U.grid, mode)
    bu, bv = _Blocks(U.coeffs, part), _Blocks(V.coeffs, part)
    return SpectralField(U.grid, _finish(_para(bu, bv), U.grid))


def remainder(U, V, mode="inhomogeneous") -> SpectralField:
    """``R(u, v) = sum_k Delta_k u S_{k+2} v`` so that ``uv = T_u v + R(u, v)``."""
    U, V = _pair(U, V)
    part = get_partition(U.grid, mode)
    bu, bv = _Blocks(U.coeffs, part), _Blocks(V.coeffs, part)
    return SpectralField(U.grid, _finish(_remainder(bu, bv), U.grid))


def bony_split(U, V, mode="inhomogeneous"):
    """Return ``(T_u v, T_v u, R(u, v))`` whose sum is the dealiased product.

    In homogeneous mode the identity holds for zero-mean inputs; otherwise
    the products involving the means are missing.
    """
    U, V = _pair(U, V)
    part = get_partition(U.grid, mode)
    bu, bv = _Blocks(U.coeffs, part), _Blocks(V.coeffs, part)
    g = U.grid
    return (SpectralField(g, _finish(_para(bu, bv), g)),
            SpectralField(g, _finish(_para(bv, bu), g)),
            SpectralField(g, _finish(_resonant(bu, bv), g)))


def paraproduct_support(k):
    """Annulus containing the spectrum of ``S_{k-1} u Delta_k v``."""
    return (SHELL_INNER - CHI_OUTER / 2.0) * 2.0 ** k, (SHELL_OUTER + CHI_OUTER / 2.0) * 2.0 ** k


# commutators ------------------------------------------------------------------

def _check_velocity(V, tol=1e-10):
    if V.components != V.grid.n:
        raise ShapeError(f"velocity must have {V.grid.n} components")
    defect = divergence_free_defect(V)
    if defect > tol:
        raise InvalidParameter(f"velocity is not divergence-free (relative defect {defect:.3e})")


def commutator_transport(u, v, j, mode="inhomogeneous", pieces=False):
    """``[Delta_j, v . grad] u`` for divergence-free ``v``.

    With ``pieces=True`` also return the four terms
    ``R1 = div Delta_j R(u, v)``, ``R2 = Delta_j T_{grad u} v``,
    ``R3 = -R(v, Delta_j grad u)`` and ``R4 = -[T_v, Delta_j] grad u``,
    whose sum equals the commutator when the inputs are 2/3-truncated.
    """
    U = to_spectral(u)
    V = to_spectral(v)
    if U.grid != V.grid:
        raise ShapeError("fields live on different grids")
    _check_velocity(V)
    grid = U.grid
    part = get_partition(grid, mode)
    n = grid.n
    cu, cv = U.coeffs, V.coeffs
    mj = part.multiplier(j)
    vphys = ifft_array(cv, grid)
    du = [partial_array(cu, grid, i) for i in range(n)]
    dju = [mj * d for d in du]
    conv = sum(vphys[i:i + 1] * ifft_array(du[i], grid) for i in range(n))
    conv_j = sum(vphys[i:i + 1] * ifft_array(dju[i], grid) for i in range(n))
    direct = mj * _finish(conv, grid) - _finish(conv_j, grid)
    out = SpectralField(grid, direct)
    if not pieces:
        return out
    bv = [_Blocks(cv[i:i + 1], part) for i in range(n)]
    bu = _Blocks(cu, part)
    r1 = 0.0
    r2 = 0.0
    r3 = 0.0
    r4 = 0.0
    for i in range(n):
        res = _finish(_resonant(bu, bv[i]), grid)
        r1 = r1 + partial_array(mj * res, grid, i)
        bdu = _Blocks(du[i], part)
        r2 = r2 + mj * _finish(_para(bdu, bv[i]), grid)
        bdju = _Blocks(dju[i], part)
        r3 = r3 - _finish(_remainder(bv[i], bdju), grid)
        r4 = r4 - (_finish(_para(bv[i], bdju), grid) - mj * _finish(_para(bv[i], bdu), grid))
    terms = {name: SpectralField(grid, np.broadcast_to(arr, cu.shape))
             for name, arr in (("R1", r1), ("R2", r2), ("R3", r3), ("R4", r4))}
    return out, terms


def commutator_multiply(a, g, j, mode="inhomogeneous", pieces=False):
    """``[Delta_j, a] g`` for a scalar ``a``.

    Pieces: ``A1 = [Delta_j, T_a] g``, ``A2 = Delta_j R(a, g)``,
    ``A3 = -R(a, Delta_j g)``.
    """
    A = to_spectral(a)
    G = to_spectral(g)
    if A.components != 1:
        raise ShapeError("multiplier must be a scalar field")
    if A.grid != G.grid:
        raise ShapeError("fields live on different grids")
    grid = A.grid
    part = get_partition(grid, mode)
    mj = part.multiplier(j)
    aphys = ifft_array(A.coeffs, grid)
    gj = mj * G.coeffs
    direct = mj * _finish(aphys * ifft_array(G.coeffs, grid), grid) - _finish(aphys * ifft_array(gj, grid), grid)
    out = SpectralField(grid, direct)
    if not pieces:
        return out
    ba, bg, bgj = _Blocks(A.coeffs, part), _Blocks(G.coeffs, part), _Blocks(gj, part)
    a1 = mj * _finish(_para(ba, bg), grid) - _finish(_para(ba, bgj), grid)
    a2 = mj * _finish(_remainder(ba, bg), grid)
    a3 = -_finish(_remainder(ba, bgj), grid)
    terms = {"A1": SpectralField(grid, a1), "A2": SpectralField(grid, a2), "A3": SpectralField(grid, a3)}
    return out, terms
