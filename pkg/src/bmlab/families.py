"""Reproducible families of test fields.

``single_shell`` fields are superpositions of wave packets whose Fourier
transform is ``phi(2^{-j} xi)`` (or ``chi`` for ball support) times plane-wave
phases placing the packets near the domain center at distance ``~2^{-j}``.
Drawing the same packet geometry at different ``j`` produces exact dyadic
dilations of one profile, up to periodization and lattice sampling.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFamily
from .littlewood_paley import annulus_bounds, chi, phi
from .spectral_core import GridSpec, PhysicalField, fft_array, ifft_array, leray_array

KINDS = ("zero", "random_bandlimited", "single_shell", "dilation_family", "amplitude_family")


@dataclass(frozen=True)
class TestFieldFamily:
    """A named family of fields reproducible from ``seed``.

    Parameters (``params``)
    -----------------------
    components : int
        1 for scalars, ``n`` for vector fields (default 1).
    div_free : bool
        Project vector fields onto divergence-free fields.
    j : int
        Shell index for ``single_shell``.
    support : {"annulus", "ball"}
        Spectral support of ``single_shell`` packets.
    packets : int
        Number of wave packets per field (default 3).
    j0, shifts : int, list of int
        Base shell and dyadic shifts for ``dilation_family``.
    amplitudes : list of float
        Scalings for ``amplitude_family``.
    sigma : float
        Spectral envelope width of ``random_bandlimited`` fields.
    kmax : float
        Sharp cutoff ``|xi| <= kmax`` replacing the Gaussian envelope.
    amplitude : float
        Sup of ``|u|`` after normalization (default 1).
    """

    __test__ = False

    kind: str
    count: int
    seed: int
    grid: GridSpec
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidFamily(f"unknown family kind {self.kind!r}; expected one of {KINDS}")
        if self.count < 0:
            raise InvalidFamily("count must be nonnegative")

    def labeled(self):
        """List of ``(group, PhysicalField)`` pairs."""
        return _generate(self)

    def fields(self):
        return [f for _, f in self.labeled()]

    @property
    def j(self):
        return self.params.get("j")


def _components(fam):
    c = int(fam.params.get("components", 1))
    if c not in (1, fam.grid.n):
        raise InvalidFamily(f"components must be 1 or {fam.grid.n}")
    return c


def _finish(coeffs, fam, normalize=True):
    grid = fam.grid
    if fam.params.get("div_free", False):
        if coeffs.shape[0] != grid.n:
            raise InvalidFamily("div_free needs vector fields")
        coeffs = leray_array(coeffs, grid)
    vals = ifft_array(coeffs, grid)
    top = np.sqrt(np.sum(vals ** 2, axis=0)).max()
    if normalize and top > 0:
        vals = vals * (float(fam.params.get("amplitude", 1.0)) / top)
    return PhysicalField(grid, vals)


def packet_coeffs(grid, j, weights, offsets, support="annulus"):
    """Coefficients of ``sum_i w_i K_j(x - c - 2^{-j} y_i)`` with ``K_j`` the shell kernel."""
    r = grid.kmag()
    prof = phi(r / 2.0 ** j) if support == "annulus" else chi(r / 2.0 ** j)
    ks = grid.wavenumbers()
    center = grid.L / 2
    comps = weights.shape[0]
    out = np.zeros((comps,) + grid.shape, dtype=complex)
    for i in range(weights.shape[1]):
        phase = 0.0
        for ax in range(grid.n):
            phase = phase + ks[ax] * (center + offsets[i, ax] / 2.0 ** j)
        e = np.exp(-1j * phase)
        for c in range(comps):
            out[c] += weights[c, i] * e
    return out * prof


def _packet_draw(rng, grid, comps, packets):
    weights = rng.standard_normal((comps, packets))
    offsets = rng.uniform(-1.5, 1.5, size=(packets, grid.n))
    return weights, offsets


def verify_shell_support(u, j, support="annulus", tol=1e-13):
    """True when all Fourier mass lies in the closed support of ``Delta_j`` (or ``S_{j+1}``)."""
    c = fft_array(u.values, u.grid)
    r = u.grid.kmag()
    lo, hi = annulus_bounds(j)
    if support == "ball":
        lo, hi = 0.0, 4.0 / 3.0 * 2.0 ** j
    outside = (r < lo * (1 - 1e-12)) | (r > hi * (1 + 1e-12))
    scale = max(np.abs(c).max(), 1e-300)
    return bool(np.abs(c[:, outside]).max(initial=0.0) <= tol * scale)


def _generate(fam):
    grid = fam.grid
    rng = np.random.default_rng(fam.seed)
    comps = _components(fam)
    p = fam.params
    out = []
    if fam.kind == "zero":
        return [(0, PhysicalField(grid, np.zeros((comps,) + grid.shape))) for _ in range(fam.count)]
    if fam.kind == "random_bandlimited":
        if "kmax" in p:
            env = (grid.kmag() <= float(p["kmax"])) * grid.dealias_mask()
        else:
            sigma = float(p.get("sigma", grid.k_nyquist / 3))
            env = np.exp(-grid.ksq() / (2 * sigma ** 2)) * grid.dealias_mask()
        for _ in range(fam.count):
            c = fft_array(rng.standard_normal((comps,) + grid.shape), grid) * env
            if p.get("zero_mean", True):
                c[(slice(None),) + (0,) * grid.n] = 0
            out.append((0, _finish(c, fam)))
        return out
    if fam.kind == "single_shell":
        if "j" not in p:
            raise InvalidFamily("single_shell needs params['j']")
        j = int(p["j"])
        support = p.get("support", "annulus")
        packets = int(p.get("packets", 3))
        for _ in range(fam.count):
            w, y = _packet_draw(rng, grid, comps, packets)
            f = _finish(packet_coeffs(grid, j, w, y, support), fam)
            if not verify_shell_support(f, j, support):
                raise InvalidFamily(f"generated field escapes the shell j={j}")
            out.append((j, f))
        return out
    if fam.kind == "dilation_family":
        j0 = int(p.get("j0", 0))
        shifts = list(p.get("shifts", [0, 1, 2]))
        support = p.get("support", "annulus")
        packets = int(p.get("packets", 3))
        for _ in range(fam.count):
            w, y = _packet_draw(rng, grid, comps, packets)
            for sh in shifts:
                out.append((sh, _finish(packet_coeffs(grid, j0 + sh, w, y, support), fam)))
        return out
    if fam.kind == "amplitude_family":
        amps = list(p.get("amplitudes", [0.01, 0.1, 1.0]))
        sigma = float(p.get("sigma", grid.k_nyquist / 3))
        env = np.exp(-grid.ksq() / (2 * sigma ** 2)) * grid.dealias_mask()
        for _ in range(fam.count):
            c = fft_array(rng.standard_normal((comps,) + grid.shape), grid) * env
            c[(slice(None),) + (0,) * grid.n] = 0
            base = _finish(c, fam)
            for a in amps:
                out.append((a, PhysicalField(grid, a * base.values)))
        return out
    raise InvalidFamily(fam.kind)
