"""Stokes problem with forcing and the linearized variable-density step.

Each Fourier mode of ``u_t - Delta u = P f`` is integrated exactly with the
integrating factor ``exp(-|xi|^2 t)`` while ``f`` is taken piecewise linear in
time, which gives a second-order exponential integrator.  The pressure
gradient is the complementary projection ``(I - P) f``.

For the linearized system ``u_t + v . grad u - (1 + a)(Delta u - grad pi) = 0``
the coefficient ``a`` is moved to the right-hand side,
``F = a (Delta u - grad pi) - v . grad u``, and the implicit endpoint value of
``F`` is found by fixed-point sweeps whose contraction ratio is recorded.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractionFailure, InvalidField, InvalidParameter, ShapeError, StepTooLarge
from .spectral_core import (
    FieldSeries,
    PhysicalField,
    SpectralField,
    divergence_free_defect,
    fft_array,
    gradient_part_array,
    ifft_array,
    leray_array,
    partial_array,
    to_spectral,
)

SOLENOIDAL_TOL = 1e-10
DEFAULT_CFL = 2.0


def phi_functions(z):
    """``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2`` for ``z <= 0``."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 0.0, z)
    safe = np.where(small, 1.0, zs)
    em1 = np.expm1(safe)
    p1 = np.where(small, 1 + z / 2 + z ** 2 / 6 + z ** 3 / 24 + z ** 4 / 120, em1 / safe)
    p2 = np.where(small, 0.5 + z / 6 + z ** 2 / 24 + z ** 3 / 120 + z ** 4 / 720, (em1 - safe) / safe ** 2)
    return p1, p2


@dataclass(frozen=True, eq=False)
class StokesSolution:
    u_series: FieldSeries
    grad_pi_series: FieldSeries
    forcing_series: FieldSeries
    diagnostics: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.u_series.times


def _check_solenoidal(U, what):
    d = divergence_free_defect(U)
    if d > SOLENOIDAL_TOL:
        raise InvalidField(f"{what} is not divergence-free (relative defect {d:.2e})")


def _velocity_coeffs(u0):
    U = to_spectral(u0)
    if U.components != U.grid.n:
        raise ShapeError(f"velocity needs {U.grid.n} components")
    _check_solenoidal(U, "initial velocity")
    return U


class _Stepper:
    def __init__(self, grid, dt):
        lam = grid.ksq()
        z = -lam * dt
        self.E = np.exp(z)
        p1, p2 = phi_functions(z)
        self.w1 = dt * p1
        self.w2 = dt * p2
        self.grid = grid

    def step(self, c, Pf0, Pf1):
        return self.E * c + self.w1 * Pf0 + self.w2 * (Pf1 - Pf0)


def _time_grid(dt, T):
    if not (dt > 0) or T < 0:
        raise InvalidParameter("dt must be positive and T nonnegative")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise InvalidParameter(f"T={T} is not a multiple of dt={dt}")
    return steps, np.arange(steps + 1) * dt


def pressure_from_forcing(f) -> SpectralField:
    """``grad pi = grad Delta^{-1} div f`` with the pressure zero mode fixed to 0."""
    F = to_spectral(f)
    if F.components != F.grid.n:
        raise ShapeError(f"forcing needs {F.grid.n} components")
    return SpectralField(F.grid, gradient_part_array(F.coeffs, F.grid))


def solve_stokes(u0, f_series=None, dt=None, T=None) -> StokesSolution:
    """Solve ``u_t - Delta u + grad pi = f``, ``div u = 0`` with exact heat factors.

    ``f_series`` must be sampled on the output grid ``t_k = k dt``; pass
    ``None`` for zero forcing together with ``T``.
    """
    U0 = _velocity_coeffs(u0)
    grid = U0.grid
    if f_series is not None:
        if f_series.components != grid.n or f_series.grid != grid:
            raise ShapeError("forcing series does not match the velocity")
        dt = f_series.dt if dt is None else dt
        T = f_series.T if T is None else T
    if dt is None or T is None:
        raise InvalidParameter("dt and T are required")
    steps, times = _time_grid(dt, T)
    if f_series is not None:
        if len(f_series) != steps + 1 or abs(f_series.dt - dt) > 1e-12 * dt:
            raise ShapeError("forcing must be sampled on the solver time grid")
        fc = f_series.coeffs()
    else:
        fc = np.zeros((steps + 1,) + U0.coeffs.shape, dtype=complex)
    Pf = np.stack([leray_array(c, grid) for c in fc])
    st = _Stepper(grid, dt)
    out = np.empty_like(fc)
    out[0] = U0.coeffs
    for k in range(steps):
        out[k + 1] = st.step(out[k], Pf[k], Pf[k + 1])
    grad_pi = fc - Pf
    diag = {"dt": dt, "steps": steps, "quadrature_order": 2}
    f_phys = f_series if f_series is not None else FieldSeries(grid, times, np.zeros((steps + 1,) + U0.coeffs.shape))
    return StokesSolution(FieldSeries.from_coeffs(grid, times, out),
                          FieldSeries.from_coeffs(grid, times, grad_pi), f_phys, diag)


def _as_series(x, grid, times, comps, what):
    if x is None:
        return np.zeros((times.size, comps) + grid.shape)
    if isinstance(x, PhysicalField):
        if x.components != comps:
            raise ShapeError(f"{what} needs {comps} components")
        return np.broadcast_to(x.values, (times.size,) + x.values.shape)
    if isinstance(x, FieldSeries):
        if x.components != comps or x.grid != grid:
            raise ShapeError(f"{what} series does not match")
        if len(x) != times.size or np.max(np.abs(x.times - x.times[0] - times)) > 1e-9 * max(times[-1], 1):
            raise ShapeError(f"{what} series must be sampled on the solver time grid")
        return x.values
    raise InvalidParameter(f"{what} must be a PhysicalField or FieldSeries")


class _LinearizedForcing:
    """Evaluates ``F = a (Delta u - grad pi) - v . grad u`` with dealiased products."""

    def __init__(self, grid):
        self.grid = grid
        self.mask = grid.dealias_mask()
        self.ksq = grid.ksq()

    def __call__(self, c, gp, a, v):
        grid = self.grid
        out = np.zeros_like(c)
        if a is not None:
            G = ifft_array(-self.ksq * c - gp, grid)
            out += fft_array(a * G, grid)
        if v is not None:
            conv = 0.0
            for i in range(grid.n):
                conv = conv + v[i:i + 1] * ifft_array(partial_array(c, grid, i), grid)
            out -= fft_array(conv, grid)
        return out * self.mask


def _l2(c, grid):
    return float(np.sqrt(grid.volume * np.sum(np.abs(c) ** 2)))


def solve_linearized_ns(u0, a_series=None, v_series=None, dt=None, T=None, inner_tol=1e-10,
                        inner_max=30, a_max=0.95, cfl=DEFAULT_CFL, dt_max=None) -> StokesSolution:
    """Solve ``u_t + v . grad u - (1 + a)(Delta u - grad pi) = 0``, ``div u = 0``.

    Parameters
    ----------
    a_series, v_series : FieldSeries or PhysicalField or None
        Density perturbation (scalar) and divergence-free transport velocity,
        sampled on the solver grid ``t_k = k dt``.  ``None`` means zero.
    inner_tol : float
        Sweeps stop when successive ``F`` differ by less than this in ``L^2``.
    a_max : float
        Smallness gate on ``||a||_inf``; exceeding it raises ContractionFailure.

    Raises
    ------
    ContractionFailure
        Gate violation, three consecutive non-contracting sweeps, or no
        convergence within ``inner_max`` sweeps.
    """
    U0 = _velocity_coeffs(u0)
    grid = U0.grid
    for x in (a_series, v_series):
        if isinstance(x, FieldSeries):
            dt = x.dt if dt is None else dt
            T = x.T if T is None else T
    if dt is None or T is None:
        raise InvalidParameter("dt and T are required")
    if dt_max is not None and dt > dt_max:
        raise StepTooLarge(f"dt={dt} exceeds dt_max={dt_max}")
    steps, times = _time_grid(dt, T)
    a = None if a_series is None else _as_series(a_series, grid, times, 1, "density")
    v = None if v_series is None else _as_series(v_series, grid, times, grid.n, "velocity")
    if a is not None:
        a_sup = float(np.abs(a).max())
        if not a_max < 1:
            raise InvalidParameter("a_max must be < 1")
        if a_sup > a_max:
            raise ContractionFailure(f"||a||_inf = {a_sup:.4g} exceeds the smallness gate a_max = {a_max:.4g}")
        if a_sup == 0:
            a = None
    if v is not None:
        vsup = float(np.sqrt(np.sum(v ** 2, axis=1)).max())
        if vsup == 0:
            v = None
        else:
            if dt > cfl * grid.h / vsup:
                raise StepTooLarge(f"dt={dt} exceeds CFL bound {cfl * grid.h / vsup:.4g}")
            for k in (0, steps):
                _check_solenoidal(SpectralField(grid, fft_array(v[k], grid)), "transport velocity")
    st = _Stepper(grid, dt)
    forcing = _LinearizedForcing(grid)
    u = np.empty((steps + 1,) + U0.coeffs.shape, dtype=complex)
    gp = np.empty_like(u)
    Fs = np.empty_like(u)
    u[0] = U0.coeffs
    sweeps = []
    step_ratios = []

    def at(arr, k):
        return None if arr is None else arr[k]

    def settle(c, k, F_guess):
        """Fixed point for ``F`` at fixed ``u`` (pressure only)."""
        F = F_guess
        hist = []
        for it in range(inner_max):
            Fn = forcing(c, gradient_part_array(F, grid), at(a, k), at(v, k))
            d = _l2(Fn - F, grid)
            hist.append(d)
            F = Fn
            if _done(d, F, hist):
                return F, hist
        raise ContractionFailure(_fail_msg(hist, a))

    def _done(d, F, hist):
        if d < inner_tol or d <= 1e-13 * max(_l2(F, grid), 1e-300):
            return True
        if len(hist) >= 4 and all(hist[-i] >= hist[-i - 1] for i in range(1, 4)):
            raise ContractionFailure(_fail_msg(hist, a, diverging=True))
        return False

    F0, h0 = settle(u[0], 0, np.zeros_like(u[0]))
    Fs[0] = F0
    gp[0] = gradient_part_array(F0, grid)
    for k in range(steps):
        PF0 = leray_array(Fs[k], grid)
        base = st.E * u[k] + st.w1 * PF0
        F = Fs[k]
        hist = []
        converged = False
        for it in range(inner_max):
            c = base + st.w2 * (leray_array(F, grid) - PF0)
            Fn = forcing(c, gradient_part_array(F, grid), at(a, k + 1), at(v, k + 1))
            d = _l2(Fn - F, grid)
            hist.append(d)
            F = Fn
            if _done(d, F, hist):
                converged = True
                break
        if not converged:
            raise ContractionFailure(_fail_msg(hist, a))
        Fs[k + 1] = F
        u[k + 1] = base + st.w2 * (leray_array(F, grid) - PF0)
        gp[k + 1] = gradient_part_array(F, grid)
        sweeps.append(len(hist))
        step_ratios.append(_ratio(hist))
    finite = [r for r in step_ratios if r is not None]
    diag = {
        "dt": dt, "steps": steps, "quadrature_order": 2,
        "inner_sweeps": sweeps,
        "inner_sweeps_histogram": {str(k): c for k, c in sorted(Counter(sweeps).items())},
        "contraction_ratios": [None if r is None else float(r) for r in step_ratios],
        "contraction_ratio": float(np.median(finite)) if finite else 0.0,
        "max_sweeps": max(sweeps) if sweeps else len(h0),
        "a_sup": 0.0 if a is None else float(np.abs(a).max()),
    }
    return StokesSolution(FieldSeries.from_coeffs(grid, times, u),
                          FieldSeries.from_coeffs(grid, times, gp),
                          FieldSeries.from_coeffs(grid, times, Fs), diag)


def _ratio(hist):
    """Largest successive-difference ratio among sweeps above the roundoff floor."""
    if len(hist) < 2 or hist[0] == 0:
        return None
    floor = 1e-11 * hist[0]
    rs = [hist[i] / hist[i - 1] for i in range(1, len(hist)) if hist[i - 1] > floor]
    return max(rs) if rs else None


def _fail_msg(hist, a, diverging=False):
    a_sup = 0.0 if a is None else float(np.abs(a).max())
    r = _ratio(hist)
    what = "inner iteration diverging" if diverging else f"inner iteration did not converge in {len(hist)} sweeps"
    rtxt = "n/a" if r is None else f"{r:.4g}"
    return f"{what}: ||a||_inf = {a_sup:.4g}, observed ratio {rtxt}, last update {hist[-1]:.3e}"


def momentum_residual(sol: StokesSolution):
    """Relative residual of the discrete momentum balance.

    Checks, on every interval, the integrating-factor form of
    ``P(u_t - Delta u - F) = 0`` with ``F`` piecewise linear, and in every
    snapshot that ``grad pi`` equals the gradient part of ``F``.
    """
    grid = sol.u_series.grid
    dt = sol.u_series.dt
    uc = sol.u_series.coeffs()
    fc = sol.forcing_series.coeffs()
    gc = sol.grad_pi_series.coeffs()
    scale = max(np.abs(uc).max(), np.abs(fc).max() * max(dt, 1.0), 1e-300)
    q = max(float(np.abs(gradient_part_array(f, grid) - g).max()) for f, g in zip(fc, gc))
    if len(sol.u_series) < 2:
        return q / scale
    st = _Stepper(grid, dt)
    worst = 0.0
    for k in range(len(uc) - 1):
        P0, P1 = leray_array(fc[k], grid), leray_array(fc[k + 1], grid)
        worst = max(worst, float(np.abs(uc[k + 1] - st.step(uc[k], P0, P1)).max()))
    return max(worst, q) / scale


def energy_history(series: FieldSeries):
    """``int |u|^2`` at each stored time."""
    vol = series.grid.h ** series.grid.n
    return np.sum(series.values ** 2, axis=tuple(range(1, series.values.ndim))) * vol
