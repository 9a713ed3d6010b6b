"""Periodic grids, physical/spectral fields and Fourier-multiplier operators.

Fields live on the torus ``[0, L)^n`` sampled on an ``N^n`` grid.  Spectral
coefficients are normalized so that a constant field ``1`` has coefficient
``1`` at zero frequency, i.e. ``coeffs = fftn(values) / N**n``.  Component
arrays always carry a leading component axis, so a scalar field on a 3D grid
has shape ``(1, N, N, N)``.
"""
from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .errors import InvalidField, InvalidParameter, ShapeError

_THREADS = None


def set_threads(count):
    """Set the worker count used by FFTs (results do not depend on it)."""
    global _THREADS
    if count is None:
        _THREADS = None
        return
    count = int(count)
    if count < 1:
        raise InvalidParameter(f"thread count must be >= 1, got {count}")
    _THREADS = count


def get_threads():
    if _THREADS is not None:
        return _THREADS
    env = os.environ.get("BML_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, L)^n`` with ``N`` points per axis."""

    n: int = 3
    N: int = 32
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.n not in (2, 3):
            raise InvalidParameter(f"dimension n must be 2 or 3, got {self.n}")
        N = int(self.N)
        if N < 4 or N & (N - 1):
            raise InvalidParameter(f"N must be a power of two >= 4, got {self.N}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise InvalidParameter(f"L must be positive, got {self.L}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self):
        return (self.N,) * self.n

    @property
    def h(self):
        return self.L / self.N

    @property
    def volume(self):
        return self.L ** self.n

    @property
    def k_min(self):
        """Smallest nonzero lattice frequency ``2*pi/L``."""
        return 2 * np.pi / self.L

    @property
    def k_nyquist(self):
        return np.pi * self.N / self.L

    def wavenumbers(self, deriv=False):
        """Per-axis broadcastable wavenumber arrays.

        With ``deriv=True`` the unpaired Nyquist mode is set to zero, which is
        the right choice for odd-order derivatives of real fields.
        """
        return _wavenumbers(self, bool(deriv))

    def ksq(self):
        """``|xi|^2`` on the lattice (Nyquist modes kept)."""
        return _ksq(self)

    def kmag(self):
        return _kmag(self)

    def coords(self):
        """Grid coordinates as a tuple of broadcastable arrays."""
        x = np.arange(self.N) * self.h
        out = []
        for ax in range(self.n):
            shp = [1] * self.n
            shp[ax] = self.N
            out.append(x.reshape(shp))
        return tuple(out)

    def mesh(self):
        """Dense coordinate arrays of shape ``(n, N, ..., N)``."""
        return np.stack([np.broadcast_to(c, self.shape) for c in self.coords()])

    def dealias_mask(self):
        return _dealias_mask(self)

    def to_dict(self):
        return {"n": self.n, "N": self.N, "L": self.L}


@functools.lru_cache(maxsize=32)
def _wavenumbers(grid, deriv):
    k = scipy.fft.fftfreq(grid.N, d=1.0 / grid.N) * grid.k_min
    if deriv:
        k[grid.N // 2] = 0.0
    out = []
    for ax in range(grid.n):
        shp = [1] * grid.n
        shp[ax] = grid.N
        arr = k.reshape(shp)
        arr.flags.writeable = False
        out.append(arr)
    return tuple(out)


@functools.lru_cache(maxsize=32)
def _ksq(grid):
    ks = _wavenumbers(grid, False)
    out = np.zeros(grid.shape)
    for k in ks:
        out = out + k * k
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=32)
def _kmag(grid):
    out = np.sqrt(_ksq(grid))
    out.flags.writeable = False
    return out


@functools.lru_cache(maxsize=32)
def _dealias_mask(grid):
    m = np.abs(scipy.fft.fftfreq(grid.N, d=1.0 / grid.N))
    keep1 = m <= grid.N // 3
    mask = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.n):
        shp = [1] * grid.n
        shp[ax] = grid.N
        mask = mask & keep1.reshape(shp)
    mask.flags.writeable = False
    return mask


def _as_component_array(grid, values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    if arr.shape == grid.shape:
        arr = arr[None]
    if arr.ndim != grid.n + 1 or arr.shape[1:] != grid.shape:
        raise ShapeError(f"expected shape (c, {', '.join(map(str, grid.shape))}), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real grid values with a leading component axis."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _as_component_array(self.grid, self.values, np.float64)
        if not np.all(np.isfinite(arr)):
            raise InvalidField("field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def components(self):
        return self.values.shape[0]

    @property
    def is_scalar(self):
        return self.components == 1

    def magnitude(self):
        """Pointwise Euclidean norm over components."""
        if self.components == 1:
            return np.abs(self.values[0])
        return np.sqrt(np.sum(self.values ** 2, axis=0))

    def mean(self):
        return self.values.reshape(self.components, -1).mean(axis=1)

    def l2_norm(self):
        return float(np.sqrt(np.sum(self.values ** 2) * self.grid.h ** self.grid.n))

    def sup_norm(self):
        return float(self.magnitude().max())

    def component(self, i):
        return PhysicalField(self.grid, self.values[i])

    def _combine(self, other, op):
        if isinstance(other, PhysicalField):
            if other.grid != self.grid:
                raise ShapeError("fields live on different grids")
            other = other.values
        return PhysicalField(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return PhysicalField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Normalized Fourier coefficients in FFT ordering."""

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = _as_component_array(self.grid, self.coeffs, np.complex128)
        if not np.all(np.isfinite(arr)):
            raise InvalidField("spectral field contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    @property
    def components(self):
        return self.coeffs.shape[0]

    def hermitian_defect(self):
        """Relative violation of ``c(-k) = conj(c(k))``."""
        return hermitian_defect(self.coeffs)

    def _combine(self, other, op):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ShapeError("fields live on different grids")
            other = other.coeffs
        return SpectralField(self.grid, op(self.coeffs, other))

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)


def hermitian_defect(coeffs):
    axes = tuple(range(1, coeffs.ndim))
    flipped = np.roll(np.flip(coeffs, axis=axes), 1, axis=axes)
    scale = max(np.abs(coeffs).max(), 1e-300)
    return float(np.abs(coeffs - np.conj(flipped)).max() / scale)


# raw array transforms -------------------------------------------------------

def fft_array(values, grid):
    axes = tuple(range(-grid.n, 0))
    return scipy.fft.fftn(values, axes=axes, workers=get_threads()) / grid.N ** grid.n


def ifft_array(coeffs, grid, check=False):
    axes = tuple(range(-grid.n, 0))
    out = scipy.fft.ifftn(coeffs * grid.N ** grid.n, axes=axes, workers=get_threads())
    if check:
        scale = max(np.abs(out.real).max(), 1e-300)
        if np.abs(out.imag).max() > 1e-9 * scale + 1e-300:
            raise InvalidField("coefficients are not Hermitian; inverse transform is not real")
    return out.real


def fft_forward(u: PhysicalField) -> SpectralField:
    """Normalized forward transform."""
    return SpectralField(u.grid, fft_array(u.values, u.grid))


def fft_inverse(U: SpectralField) -> PhysicalField:
    """Inverse transform; fails if the coefficients do not describe a real field."""
    return PhysicalField(U.grid, ifft_array(U.coeffs, U.grid, check=True))


def to_spectral(u):
    return u if isinstance(u, SpectralField) else fft_forward(u)


def to_physical(u):
    return u if isinstance(u, PhysicalField) else fft_inverse(u)


# differential operators -----------------------------------------------------

def gradient_array(c, grid):
    """Spectral gradient of a coefficient array ``(1, ...)`` -> ``(n, ...)``."""
    ks = grid.wavenumbers(deriv=True)
    return np.stack([1j * k * c[0] for k in ks])


def partial_array(c, grid, axis):
    return 1j * grid.wavenumbers(deriv=True)[axis] * c


def divergence_array(c, grid):
    ks = grid.wavenumbers(deriv=True)
    out = np.zeros(grid.shape, dtype=complex)
    for i, k in enumerate(ks):
        out = out + 1j * k * c[i]
    return out[None]


def differential_op(U, kind, axis=None):
    """Apply a constant-coefficient differential operator spectrally.

    Parameters
    ----------
    U : SpectralField
    kind : {"gradient", "divergence", "laplacian", "partial"}
    axis : int, optional
        Coordinate axis for ``kind="partial"``.
    """
    grid = U.grid
    c = U.coeffs
    if kind == "gradient":
        if U.components != 1:
            raise ShapeError("gradient expects a scalar field")
        return SpectralField(grid, gradient_array(c, grid))
    if kind == "divergence":
        if U.components != grid.n:
            raise ShapeError(f"divergence expects {grid.n} components, got {U.components}")
        return SpectralField(grid, divergence_array(c, grid))
    if kind == "laplacian":
        return SpectralField(grid, -grid.ksq() * c)
    if kind == "partial":
        if axis is None or not 0 <= axis < grid.n:
            raise InvalidParameter(f"partial derivative needs an axis in [0, {grid.n})")
        return SpectralField(grid, partial_array(c, grid, axis))
    raise InvalidParameter(f"unknown operator kind {kind!r}")


def leray_array(c, grid):
    """Apply ``P = I - xi xi^T/|xi|^2``; the zero mode passes unchanged."""
    ks = grid.wavenumbers(deriv=True)
    k2 = sum(k * k for k in ks)
    inv = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    kdotc = sum(k * c[i] for i, k in enumerate(ks))
    return np.stack([c[i] - k * kdotc * inv for i, k in enumerate(ks)])


def gradient_part_array(c, grid):
    """Complementary projection ``Q = I - P`` (gradient part)."""
    return c - leray_array(c, grid)


def leray_project(U: SpectralField) -> SpectralField:
    if U.components != U.grid.n:
        raise ShapeError(f"Leray projection expects {U.grid.n} components, got {U.components}")
    return SpectralField(U.grid, leray_array(U.coeffs, U.grid))


def heat_evolve(U: SpectralField, t: float) -> SpectralField:
    """Exact heat semigroup ``e^{t Delta}`` as the multiplier ``exp(-t|xi|^2)``."""
    if not np.isfinite(t) or t < 0:
        raise InvalidParameter(f"heat time must be >= 0, got {t}")
    return SpectralField(U.grid, np.exp(-t * U.grid.ksq()) * U.coeffs)


def dealias(U: SpectralField) -> SpectralField:
    """Two-thirds rule truncation."""
    return SpectralField(U.grid, U.coeffs * U.grid.dealias_mask())


def product_array(a_phys, b_phys, grid):
    """Dealiased pointwise product of physical arrays, returned as coefficients."""
    return fft_array(a_phys * b_phys, grid) * grid.dealias_mask()


def multiply(U, V):
    """Dealiased product of two fields (broadcasting a scalar against a vector)."""
    a = to_physical(U)
    b = to_physical(V)
    if a.components != b.components and 1 not in (a.components, b.components):
        raise ShapeError("component counts are incompatible")
    return SpectralField(a.grid, product_array(a.values, b.values, a.grid))


def divergence_free_defect(U):
    """``max|div u| / max|grad u|`` (zero for the zero field)."""
    U = to_spectral(U)
    grid = U.grid
    div = ifft_array(divergence_array(U.coeffs, grid), grid)
    grads = [ifft_array(partial_array(U.coeffs, grid, ax), grid) for ax in range(grid.n)]
    scale = max(np.abs(g).max() for g in grads)
    if scale == 0:
        return 0.0
    return float(np.abs(div).max() / scale)


# trigonometric interpolation ------------------------------------------------

def _scaled_points(points, grid):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] != grid.n:
        raise ShapeError(f"points must have shape ({grid.n}, M), got {pts.shape}")
    return np.mod(pts, grid.L) * (2 * np.pi / grid.L)


def interpolate_array(coeffs, grid, points, method="nufft", eps=1e-13):
    """Evaluate the real trigonometric interpolant at arbitrary points.

    ``coeffs`` has shape ``(c, N, ..., N)``; ``points`` has shape ``(n, M)``.
    The real part of the full-lattice sum splits unpaired Nyquist modes
    symmetrically, which is the standard real interpolant.
    """
    x = _scaled_points(points, grid)
    c = np.ascontiguousarray(coeffs, dtype=np.complex128)
    if method == "nufft":
        import finufft

        xs = [np.ascontiguousarray(x[i]) for i in range(grid.n)]
        fn = finufft.nufft2d2 if grid.n == 2 else finufft.nufft3d2
        out = fn(*xs, c, isign=1, eps=eps, modeord=1, nthreads=1)
        return np.asarray(out).real.reshape(c.shape[0], -1)
    if method == "direct":
        m = scipy.fft.fftfreq(grid.N, d=1.0 / grid.N)
        M = x.shape[1]
        out = np.zeros((c.shape[0], M))
        flat = c.reshape(c.shape[0], -1)
        mesh = np.meshgrid(*([m] * grid.n), indexing="ij")
        modes = np.stack([mm.ravel() for mm in mesh])
        chunk = max(1, 2 ** 22 // modes.shape[1])
        for s in range(0, M, chunk):
            phase = np.exp(1j * (x[:, s:s + chunk].T @ modes))
            out[:, s:s + chunk] = (phase @ flat.T).T.real
        return out
    raise InvalidParameter(f"unknown interpolation method {method!r}")


def interpolate(U, points, method="nufft"):
    U = to_spectral(U)
    return interpolate_array(U.coeffs, U.grid, points, method=method)


def trig_sup(U, oversample=4, polish=6):
    """Estimate the continuum supremum of the (magnitude of the) trig interpolant.

    Zero-padded oversampling locates candidate maxima which are then refined
    by local optimization on the interpolant itself.  The grid maximum can
    underestimate the continuum maximum noticeably for low-frequency fields.
    """
    import scipy.optimize

    U = to_spectral(U)
    grid = U.grid
    fine = GridSpec(grid.n, grid.N * oversample, grid.L)
    big = _zero_pad(U.coeffs, grid, fine)
    vals = ifft_array(big, fine)
    mag = np.sqrt(np.sum(vals ** 2, axis=0))
    best = float(mag.max())
    order = np.argsort(mag.ravel())[::-1][:polish]
    mesh = fine.mesh().reshape(grid.n, -1)

    def negmag(x):
        v = interpolate_array(U.coeffs, grid, x.reshape(grid.n, 1), method="direct")[:, 0]
        return -float(np.sqrt(np.sum(v ** 2)))

    for idx in order:
        res = scipy.optimize.minimize(negmag, mesh[:, idx], method="Nelder-Mead",
                                      options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
        best = max(best, -float(res.fun))
    return best


def _zero_pad(coeffs, grid, fine):
    """Embed coefficients in a finer lattice, splitting Nyquist modes evenly."""
    N, M = grid.N, fine.N
    c = np.array(coeffs, dtype=complex)
    for ax in range(1, grid.n + 1):
        sl = [slice(None)] * c.ndim
        sl[ax] = N // 2
        nyq = c[tuple(sl)].copy()
        shape = list(c.shape)
        shape[ax] = M
        out = np.zeros(shape, dtype=complex)
        lo = [slice(None)] * c.ndim
        lo[ax] = slice(0, N // 2)
        out[tuple(lo)] = c[tuple(lo)]
        hi_src = [slice(None)] * c.ndim
        hi_src[ax] = slice(N // 2 + 1, N)
        hi_dst = [slice(None)] * c.ndim
        hi_dst[ax] = slice(M - N // 2 + 1, M)
        out[tuple(hi_dst)] = c[tuple(hi_src)]
        pos = [slice(None)] * c.ndim
        pos[ax] = N // 2
        neg = [slice(None)] * c.ndim
        neg[ax] = M - N // 2
        out[tuple(pos)] = 0.5 * nyq
        out[tuple(neg)] = 0.5 * nyq
        c = out
    return c


# time series ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FieldSeries:
    """Physical snapshots on a uniform time grid, shape ``(T, c, N, ..., N)``."""

    grid: GridSpec
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != self.grid.n + 2 or v.shape[2:] != self.grid.shape or v.shape[0] != t.size:
            raise ShapeError(f"series values have shape {v.shape}, times {t.shape}")
        if t.size > 1:
            d = np.diff(t)
            if np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * max(abs(d[0]), 1e-300):
                raise InvalidParameter("series times must be uniform and increasing")
        if not np.all(np.isfinite(v)):
            raise InvalidField("series contains non-finite values")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.times.size

    @property
    def components(self):
        return self.values.shape[1]

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0

    @property
    def T(self):
        return float(self.times[-1] - self.times[0])

    def snapshot(self, i):
        return PhysicalField(self.grid, self.values[i])

    def coeffs(self):
        return fft_array(self.values, self.grid)

    @classmethod
    def from_coeffs(cls, grid, times, coeffs):
        return cls(grid, times, ifft_array(coeffs, grid))

    @classmethod
    def constant(cls, u: PhysicalField, times):
        times = np.asarray(times, dtype=float)
        return cls(u.grid, times, np.broadcast_to(u.values, (times.size,) + u.values.shape).copy())
