"""Morrey, Besov-Morrey and Chemin-Lerner norms on periodic grids.

Ball integrals ``int_{B(x0, R)} |u|^q`` are Riemann sums ``h^n sum |u|^q``
over grid points whose minimum-image offset from ``x0`` has Euclidean length
at most ``R``.  Radii are ``r h`` with ``r`` dyadic in index units, up to the
first radius whose ball contains the whole torus, so ``p = q`` gives the
discrete ``L^p`` norm exactly and no point is ever counted twice.
"""
from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import InvalidParameter, ShapeError
from .littlewood_paley import get_partition
from .spectral_core import (
    FieldSeries,
    GridSpec,
    SpectralField,
    get_threads,
    ifft_array,
    to_physical,
    to_spectral,
)


class NonZeroMeanWarning(UserWarning):
    """Homogeneous norm evaluated on a field with nonzero mean."""


@dataclass(frozen=True)
class SpaceParams:
    """Exponents of ``N^s_{p,q,r}``; ``r = inf`` is allowed."""

    n: int
    s: float
    p: float
    q: float
    r: float = 1.0
    mode: str = "homogeneous"

    def __post_init__(self):
        check_exponents(self.p, self.q)
        if not (self.r >= 1):
            raise InvalidParameter(f"r must lie in [1, inf], got {self.r}")
        if self.mode not in ("homogeneous", "inhomogeneous"):
            raise InvalidParameter(f"unknown mode {self.mode!r}")
        if not np.isfinite(self.s):
            raise InvalidParameter("s must be finite")

    def with_(self, **kw):
        d = dict(n=self.n, s=self.s, p=self.p, q=self.q, r=self.r, mode=self.mode)
        d.update(kw)
        return SpaceParams(**d)

    def to_dict(self):
        return {"n": self.n, "s": self.s, "p": self.p, "q": self.q,
                "r": "inf" if math.isinf(self.r) else self.r, "mode": self.mode}


def check_exponents(p, q):
    if not (np.isfinite(p) and np.isfinite(q)) or q < 1 or q > p:
        raise InvalidParameter(f"Morrey exponents need 1 <= q <= p < inf, got p={p}, q={q}")


@dataclass(frozen=True)
class MorreyConfig:
    """Radii in grid-index units and the stride of the center subsample."""

    radii: tuple
    center_stride: int = 1

    def __post_init__(self):
        if len(self.radii) == 0 or any(r <= 0 for r in self.radii):
            raise InvalidParameter("radii must be a nonempty set of positive values")
        if self.center_stride < 1:
            raise InvalidParameter("center_stride must be >= 1")
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))

    @classmethod
    def default(cls, grid: GridSpec, center_stride=1):
        return cls(default_radii(grid), center_stride)

    def physical_radii(self, grid):
        return [r * grid.h for r in self.radii]

    def describe(self, grid):
        return {"radii": [r * grid.h for r in self.radii], "radius_cap": max(self.radii) * grid.h,
                "center_stride": self.center_stride}


def default_radii(grid):
    """Dyadic radii ``2^k`` (index units) up to the torus covering radius."""
    cover = math.sqrt(grid.n) * grid.N / 2.0
    radii = [1.0]
    while radii[-1] < cover:
        radii.append(radii[-1] * 2.0)
    return tuple(radii)


def _min_image_sq(grid):
    d = np.arange(grid.N)
    d = np.minimum(d, grid.N - d).astype(np.float64)
    out = np.zeros(grid.shape)
    for ax in range(grid.n):
        shp = [1] * grid.n
        shp[ax] = grid.N
        out = out + (d * d).reshape(shp)
    return out


@functools.lru_cache(maxsize=16)
def _ball_kernels(grid, radii):
    d2 = _min_image_sq(grid)
    axes = tuple(range(-grid.n, 0))
    out = []
    for r in radii:
        ind = (d2 <= r * r + 1e-9).astype(np.float64)
        out.append(scipy.fft.rfftn(ind, axes=axes))
    return tuple(out)


def ball_sums(power, grid, cfg):
    """Ball integrals of a stack ``(B, N, ..., N)`` for every center and radius.

    Returns an array ``(len(radii), B, ...)`` subsampled by the center stride.
    """
    axes = tuple(range(-grid.n, 0))
    fp = scipy.fft.rfftn(power, axes=axes, workers=get_threads())
    s = cfg.center_stride
    sl = (slice(None),) + (slice(None, None, s),) * grid.n
    vol = grid.h ** grid.n
    res = []
    for K in _ball_kernels(grid, cfg.radii):
        conv = scipy.fft.irfftn(fp * K, s=grid.shape, axes=axes, workers=get_threads())
        res.append(np.maximum(conv[sl], 0.0) * vol)
    return np.stack(res)


def morrey_norm_stack(mag, grid, p, q, cfg=None):
    """Morrey norms of a stack of nonnegative magnitude arrays ``(B, N, ..., N)``."""
    check_exponents(p, q)
    cfg = cfg or MorreyConfig.default(grid)
    mag = np.asarray(mag, dtype=np.float64)
    if mag.shape[-grid.n:] != grid.shape:
        raise ShapeError(f"stack shape {mag.shape} does not match grid")
    lead = mag.shape[:-grid.n]
    flat = mag.reshape((-1,) + grid.shape)
    if flat.shape[0] == 0:
        return np.zeros(lead)
    best = np.concatenate([_morrey_chunk(flat[i:i + 64], grid, p, q, cfg)
                           for i in range(0, flat.shape[0], 64)])
    return best.reshape(lead)


def _morrey_chunk(flat, grid, p, q, cfg):
    top = flat.reshape(flat.shape[0], -1).max(axis=1)
    safe = np.where(top > 0, top, 1.0)
    scaled = flat / safe.reshape((-1,) + (1,) * grid.n)
    sums = ball_sums(scaled ** q, grid, cfg)
    n = grid.n
    best = np.zeros(flat.shape[0])
    for i, R in enumerate(cfg.physical_radii(grid)):
        w = R ** (n / p - n / q)
        vals = w * sums[i].reshape(flat.shape[0], -1).max(axis=1) ** (1.0 / q)
        best = np.maximum(best, vals)
    return best * np.where(top > 0, top, 0.0)


def morrey_norm(u, p, q, cfg: MorreyConfig | None = None) -> float:
    """``sup_{x0, R} R^{n/p - n/q} (int_{B(x0,R)} |u|^q)^{1/q}``; vector fields use ``|u|``."""
    u = to_physical(u)
    return float(morrey_norm_stack(u.magnitude()[None], u.grid, p, q, cfg)[0])


def morrey_norm_bruteforce(u, p, q, cfg: MorreyConfig | None = None) -> float:
    """Direct evaluation over every (center, radius) pair with explicit distances."""
    check_exponents(p, q)
    u = to_physical(u)
    grid = u.grid
    cfg = cfg or MorreyConfig.default(grid)
    n, N = grid.n, grid.N
    power = (u.magnitude() ** q).ravel()
    idx = np.stack(np.meshgrid(*([np.arange(N)] * n), indexing="ij")).reshape(n, -1).T
    s = cfg.center_stride
    centers = np.stack(np.meshgrid(*([np.arange(0, N, s)] * n), indexing="ij")).reshape(n, -1).T
    best = 0.0
    for c in centers:
        diff = np.abs(idx - c)
        diff = np.minimum(diff, N - diff)
        d2 = np.sum(diff.astype(np.float64) ** 2, axis=1)
        for r in cfg.radii:
            total = grid.h ** n * power[d2 <= r * r + 1e-9].sum()
            R = r * grid.h
            best = max(best, R ** (n / p - n / q) * total ** (1.0 / q))
    return best


def lp_norm(u, p) -> float:
    u = to_physical(u)
    return float((np.sum(u.magnitude() ** p) * u.grid.h ** u.grid.n) ** (1.0 / p))


def linf_norm(u) -> float:
    """Grid maximum of ``|u|``."""
    return float(to_physical(u).magnitude().max())


def linf_norm_scan(u) -> float:
    """Point-by-point scan; reference for :func:`linf_norm`."""
    u = to_physical(u)
    vals = u.values.reshape(u.components, -1)
    best = 0.0
    for i in range(vals.shape[1]):
        best = max(best, math.sqrt(sum(float(v) ** 2 for v in vals[:, i])))
    return best


# Besov-Morrey ---------------------------------------------------------------

def _lr(values, r, axis=-1):
    values = np.asarray(values, dtype=float)
    if math.isinf(r):
        return values.max(axis=axis) if values.shape[axis] else np.zeros(values.shape[:axis])
    return np.sum(values ** r, axis=axis) ** (1.0 / r)


def _check_mean(U, mode, flag):
    if mode != "homogeneous" or not flag:
        return
    c = U.coeffs
    mean = np.abs(c[(slice(None),) + (0,) * U.grid.n]).max()
    scale = max(np.abs(c).max(), 1e-300)
    if mean > 1e-12 * scale:
        warnings.warn("homogeneous norm of a field with nonzero mean; the mean is ignored",
                      NonZeroMeanWarning, stacklevel=3)


def block_table(coeffs, grid, p, q, mode="homogeneous", cfg=None):
    """Morrey norms of every dyadic block of a coefficient stack.

    ``coeffs`` has shape ``(T, c, N, ..., N)``; returns ``(js, table)`` with
    ``table`` of shape ``(T, len(js))``.
    """
    part = get_partition(grid, mode)
    js = part.indices
    coeffs = np.asarray(coeffs)
    T = coeffs.shape[0]
    mags = np.empty((T, len(js)) + grid.shape)
    for a, j in enumerate(js):
        blk = ifft_array(part.block_array(coeffs, j), grid)
        mags[:, a] = np.sqrt(np.sum(blk ** 2, axis=1)) if blk.shape[1] > 1 else np.abs(blk[:, 0])
    table = morrey_norm_stack(mags, grid, p, q, cfg)
    return np.array(js), table


def besov_from_table(js, row, s, r):
    return float(_lr(2.0 ** (s * np.asarray(js)) * np.asarray(row), r))


def besov_morrey_norm(u, sp: SpaceParams, cfg=None, flag_mean=True) -> float:
    """``l^r`` over ``j`` of ``2^{sj} ||Delta_j u||_{M^p_q}``."""
    U = to_spectral(u)
    _check_mean(U, sp.mode, flag_mean)
    js, table = block_table(U.coeffs[None], U.grid, sp.p, sp.q, sp.mode, cfg)
    return besov_from_table(js, table[0], sp.s, sp.r)


def besov_morrey_report(u, sp: SpaceParams, cfg=None):
    """Norm value together with the block range and radius cap used."""
    U = to_spectral(u)
    grid = U.grid
    cfg = cfg or MorreyConfig.default(grid)
    value = besov_morrey_norm(U, sp, cfg)
    return {"norm_kind": "besov_morrey", "params": sp.to_dict(), "value": value,
            "truncation_range": get_partition(grid, sp.mode).truncation(),
            "morrey": cfg.describe(grid)}


@dataclass(frozen=True)
class CheminLernerParams:
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta >= 1:
            raise InvalidParameter(f"beta must lie in [1, inf], got {self.beta}")


def time_integral(values, dt, axis=0):
    """Trapezoid rule on a uniform grid (a single sample integrates to 0)."""
    values = np.asarray(values, dtype=float)
    if values.shape[axis] < 2:
        return np.zeros(np.delete(values.shape, axis))
    return np.trapezoid(values, dx=dt, axis=axis)


def lbeta(values, dt, beta, axis=0):
    """``(int |f|^beta dt)^{1/beta}``, or the max for ``beta = inf``."""
    values = np.asarray(values, dtype=float)
    if math.isinf(beta):
        return values.max(axis=axis)
    return time_integral(values ** beta, dt, axis=axis) ** (1.0 / beta)


def series_table(series: FieldSeries, sp: SpaceParams, cfg=None, flag_mean=False):
    if len(series) == 0:
        raise InvalidParameter("empty series")
    coeffs = series.coeffs()
    if flag_mean:
        _check_mean(SpectralField(series.grid, coeffs[0]), sp.mode, True)
    return block_table(coeffs, series.grid, sp.p, sp.q, sp.mode, cfg)


def chemin_lerner_from_table(js, table, dt, s, r, beta):
    """``l^r_j 2^{sj} ||Delta_j u||_{L^beta_T M}`` from a block table."""
    per_block = lbeta(table, dt, beta, axis=0)
    return besov_from_table(js, per_block, s, r)


def bochner_from_table(js, table, dt, s, r, beta):
    """``|| ||u(t)||_{N^s_{p,q,r}} ||_{L^beta_T}`` from a block table."""
    w = 2.0 ** (s * np.asarray(js))
    per_time = _lr(w[None, :] * table, r, axis=1)
    return float(lbeta(per_time, dt, beta))


def chemin_lerner_norm(series: FieldSeries, sp: SpaceParams, cl: CheminLernerParams, cfg=None) -> float:
    """``L-tilde^beta_T(N^s_{p,q,r})`` with trapezoid time quadrature."""
    js, table = series_table(series, sp, cfg)
    return chemin_lerner_from_table(js, table, series.dt, sp.s, sp.r, cl.beta)


def bochner_norm(series: FieldSeries, sp: SpaceParams, cl: CheminLernerParams, cfg=None) -> float:
    """``L^beta_T(N^s_{p,q,r})``."""
    js, table = series_table(series, sp, cfg)
    return bochner_from_table(js, table, series.dt, sp.s, sp.r, cl.beta)
