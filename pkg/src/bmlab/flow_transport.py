"""Flow maps of divergence-free velocities and semi-Lagrangian transport.

The forward map ``X(y, t)`` and its inverse are integrated with classical
RK4; velocities are evaluated off-grid by trigonometric interpolation and in
time by four-point Lagrange interpolation of the snapshot series.  Both maps
are stored as periodic displacement fields ``X(y, t) - y`` and
``X^{-1}(x, t) - x``.  The inverse map is advanced by composition,
``X^{-1}_{n+1}(x) = X^{-1}_n(x_b)`` with ``x_b`` the RK4 foot of the
characteristic through ``x``, so transported densities are always a single
interpolation of the initial datum and never accumulate smoothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidField, InvalidParameter, ShapeError, StepTooLarge
from .spectral_core import (
    FieldSeries,
    PhysicalField,
    divergence_free_defect,
    fft_array,
    ifft_array,
    interpolate_array,
    partial_array,
)

DEFAULT_CFL = 2.0


class VelocityHistory:
    """Spectral velocity coefficients with cubic Lagrange interpolation in time."""

    def __init__(self, velocity, check_div=True, div_tol=1e-8):
        if isinstance(velocity, PhysicalField):
            velocity = FieldSeries(velocity.grid, np.zeros(1), velocity.values[None])
        if not isinstance(velocity, FieldSeries):
            raise InvalidParameter("velocity must be a PhysicalField or FieldSeries")
        grid = velocity.grid
        if velocity.components != grid.n:
            raise ShapeError(f"velocity needs {grid.n} components")
        self.grid = grid
        self.times = velocity.times
        self.coeffs = fft_array(velocity.values, grid)
        self.sup = float(np.sqrt(np.sum(velocity.values ** 2, axis=1)).max())
        if check_div:
            for i in range(len(velocity)):
                from .spectral_core import SpectralField

                d = divergence_free_defect(SpectralField(grid, self.coeffs[i]))
                if d > div_tol:
                    raise InvalidField(f"velocity snapshot {i} is not divergence-free (defect {d:.2e})")

    @property
    def steady(self):
        return self.times.size == 1

    def at(self, t):
        if self.steady:
            return self.coeffs[0]
        t0, dts = self.times[0], self.times[1] - self.times[0]
        x = (t - t0) / dts
        m = self.times.size
        k = int(round(x))
        if abs(x - k) < 1e-10 and 0 <= k < m:
            return self.coeffs[k]
        if m == 2:
            w = min(max(x, 0.0), 1.0)
            return (1 - w) * self.coeffs[0] + w * self.coeffs[1]
        i = int(math.floor(x))
        lo = min(max(i - 1, 0), m - 4) if m >= 4 else 0
        nodes = list(range(lo, min(lo + 4, m)))
        out = 0.0
        for a in nodes:
            w = 1.0
            for b in nodes:
                if b != a:
                    w *= (x - b) / (a - b)
            out = out + w * self.coeffs[a]
        return out

    def gradient_sup(self, t):
        """Grid max of the operator norm of ``grad u``."""
        c = self.at(t)
        return float(_op_norm_max(_jacobian(c, self.grid, identity=False)))


def _jacobian(disp_coeffs, grid, identity=True):
    """Matrices ``d(disp_i)/dx_j`` (plus I) of shape ``(M, n, n)``."""
    n = grid.n
    J = np.empty((grid.N ** n, n, n))
    for i in range(n):
        for j in range(n):
            J[:, i, j] = ifft_array(partial_array(disp_coeffs[i:i + 1], grid, j), grid).ravel()
    if identity:
        J += np.eye(n)
    return J


def _op_norm_max(J):
    """Largest spectral norm among a stack of square matrices."""
    if J.shape[1] == 2:
        fro2 = np.sum(J * J, axis=(1, 2))
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4 * det * det, 0.0))
        return float(np.sqrt(0.5 * (fro2 + disc)).max())
    return float(np.linalg.norm(J, ord=2, axis=(1, 2)).max())


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Forward and inverse displacement fields sampled on a uniform time grid."""

    grid: object
    times: np.ndarray = field(repr=False)
    forward: np.ndarray = field(repr=False)
    inverse: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    lip_forward: np.ndarray = field(repr=False)
    lip_inverse: np.ndarray = field(repr=False)
    jacobian_defect: np.ndarray = field(repr=False)
    grad_integral: np.ndarray = field(repr=False)
    dt: float = 0.0

    def index(self, t):
        t0, t1 = self.times[0], self.times[-1]
        tol = 1e-9 * max(1.0, abs(t1))
        if t < t0 - tol or t > t1 + tol:
            raise IndexError(f"time {t} outside flow range [{t0}, {t1}]")
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol:
            raise InvalidParameter(f"time {t} is not a stored flow time")
        return k

    def gamma_bound(self):
        """``exp(int_0^t ||grad u||_inf)`` at each stored time."""
        return np.exp(self.grad_integral)

    def gamma_bound_holds(self, tol=0.05):
        return bool(np.all(self.gamma <= self.gamma_bound() * (1 + tol)))

    def positions(self, k):
        return self.grid.mesh().reshape(self.grid.n, -1) + self.forward[k].reshape(self.grid.n, -1)

    def composition_defect(self, k, method="nufft"):
        """``max |X^{-1}(X(y)) - y|`` at stored index ``k``."""
        grid = self.grid
        inv_c = fft_array(self.inverse[k], grid)
        back = interpolate_array(inv_c, grid, self.positions(k), method=method)
        err = self.forward[k].reshape(grid.n, -1) + back
        return float(np.sqrt(np.sum(err ** 2, axis=0)).max())

    def to_index(self):
        return {"times": [float(t) for t in self.times], "dt": self.dt,
                "gamma": [float(g) for g in self.gamma]}


def integrate_flow(velocity, dt, T=None, cfl=DEFAULT_CFL, store_every=1, method="nufft",
                   check_div=True):
    """Integrate ``dX/dt = u(X, t)`` and its inverse with RK4.

    Parameters
    ----------
    velocity : FieldSeries or PhysicalField
        Divergence-free velocity snapshots on a uniform time grid (a single
        field is treated as steady).
    dt : float
        Flow time step.
    T : float, optional
        Final time; defaults to the span of the series.
    """
    hist = velocity if isinstance(velocity, VelocityHistory) else VelocityHistory(velocity, check_div)
    grid = hist.grid
    t0 = float(hist.times[0])
    if T is None:
        T = float(hist.times[-1] - t0)
    if not (dt > 0) or T < 0:
        raise InvalidParameter("dt must be positive and T nonnegative")
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(T, 1.0):
        raise InvalidParameter(f"T={T} is not a multiple of dt={dt}")
    if hist.sup > 0 and dt > cfl * grid.h / hist.sup:
        raise StepTooLarge(f"dt={dt} exceeds CFL bound {cfl * grid.h / hist.sup:.4g}")
    n = grid.n
    if hist.sup == 0:
        return _identity_flow(grid, t0 + np.arange(0, steps + 1, store_every) * dt, dt * store_every)
    y = grid.mesh().reshape(n, -1)
    fwd = np.zeros_like(y)
    inv = np.zeros_like(y)

    def vel(t, pts):
        return interpolate_array(hist.at(t), grid, pts, method=method)

    times, F, G = [t0], [fwd.copy()], [inv.copy()]
    lipf, lipi, jdef = [1.0], [1.0], [0.0]
    gsup = [hist.gradient_sup(t0)]
    for step in range(steps):
        t = t0 + step * dt
        x = y + fwd
        k1 = vel(t, x)
        k2 = vel(t + dt / 2, x + dt / 2 * k1)
        k3 = vel(t + dt / 2, x + dt / 2 * k2)
        k4 = vel(t + dt, x + dt * k3)
        fwd = fwd + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        b1 = vel(t + dt, y)
        b2 = vel(t + dt / 2, y - dt / 2 * b1)
        b3 = vel(t + dt / 2, y - dt / 2 * b2)
        b4 = vel(t, y - dt * b3)
        foot_disp = -dt / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        if step == 0:
            inv = foot_disp
        else:
            inv_c = fft_array(inv.reshape((n,) + grid.shape), grid)
            inv = foot_disp + interpolate_array(inv_c, grid, y + foot_disp, method=method)
        gsup.append(hist.gradient_sup(t + dt))
        if (step + 1) % store_every == 0 or step + 1 == steps:
            Jf = _jacobian(fft_array(fwd.reshape((n,) + grid.shape), grid), grid)
            Ji = _jacobian(fft_array(inv.reshape((n,) + grid.shape), grid), grid)
            times.append(t + dt)
            F.append(fwd.copy())
            G.append(inv.copy())
            lipf.append(float(_op_norm_max(Jf)))
            lipi.append(float(_op_norm_max(Ji)))
            jdef.append(float(np.abs(np.linalg.det(Jf) - 1.0).max()))
    shape = (len(times), n) + grid.shape
    lf, li = np.array(lipf), np.array(lipi)
    gamma = np.maximum.accumulate(np.maximum(lf, li))
    return FlowMap(grid, np.array(times), np.array(F).reshape(shape), np.array(G).reshape(shape),
                   gamma, lf, li, np.array(jdef), _stored_integral(times, t0, dt, gsup),
                   dt * store_every)


def _identity_flow(grid, times, dt):
    m = times.size
    zeros = np.zeros((m, grid.n) + grid.shape)
    ones = np.ones(m)
    return FlowMap(grid, times, zeros, zeros.copy(), ones, ones.copy(), ones.copy(),
                   np.zeros(m), np.zeros(m), dt)


def _stored_integral(times, t0, dt, gsup):
    """Trapezoid integral of ``||grad u||_inf`` at the stored times."""
    full = np.concatenate([[0.0], np.cumsum(0.5 * dt * (np.array(gsup[:-1]) + np.array(gsup[1:])))])
    idx = np.rint((np.array(times) - t0) / dt).astype(int)
    return full[idx]


def compose(a, flow: FlowMap, t, method="nufft") -> PhysicalField:
    """``a(X(., t))`` by trigonometric interpolation of ``a``."""
    k = flow.index(t)
    grid = flow.grid
    a = a if isinstance(a, PhysicalField) else PhysicalField(grid, a)
    vals = interpolate_array(fft_array(a.values, grid), grid, flow.positions(k), method=method)
    return PhysicalField(grid, vals.reshape((a.components,) + grid.shape))


def compose_inverse(a, flow: FlowMap, k, method="nufft"):
    """Raw values of ``a(X^{-1}(., t_k))``."""
    grid = flow.grid
    pts = grid.mesh().reshape(grid.n, -1) + flow.inverse[k].reshape(grid.n, -1)
    vals = interpolate_array(fft_array(a.values, grid), grid, pts, method=method)
    return vals.reshape((a.components,) + grid.shape)


def solve_transport(a0: PhysicalField, velocity, dt, T=None, cfl=DEFAULT_CFL, method="nufft",
                    return_flow=False, check_div=True):
    """Solve ``a_t + u . grad a = 0`` as ``a(x, t) = a0(X^{-1}(x, t))``.

    Returns a :class:`FieldSeries` on the flow time grid (and the flow map
    when ``return_flow`` is set).
    """
    flow = integrate_flow(velocity, dt, T=T, cfl=cfl, method=method, check_div=check_div)
    if np.all(flow.inverse == 0):
        vals = np.broadcast_to(a0.values, (len(flow.times),) + a0.values.shape).copy()
    else:
        vals = np.stack([a0.values if k == 0 else compose_inverse(a0, flow, k, method)
                         for k in range(len(flow.times))])
    series = FieldSeries(a0.grid, flow.times, vals)
    return (series, flow) if return_flow else series


def reverse_velocity(velocity: FieldSeries) -> FieldSeries:
    """Time-reversed velocity ``-u(T - t)`` on the same time grid."""
    return FieldSeries(velocity.grid, velocity.times, -velocity.values[::-1])
