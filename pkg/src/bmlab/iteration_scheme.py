"""Alternating transport / linearized Navier-Stokes approximation scheme.

Starting from a velocity ``u^0`` the scheme builds

* ``a^{m+1}``: transport of ``S_{m+1} a0`` by ``u^m``;
* ``(u^{m+1}, grad pi^{m+1})``: linearized step with data ``S_{m+1} u0``,
  density ``a^{m+1}`` and transport velocity ``v = u^m``;

and tracks the composite norm
``||u||_{L~inf(N^s_{p,q,1})} + ||u||_{L^1(N^{s+2}_{p,q,1})} + ||grad pi||_{L^1(N^s_{p,q,1})}``
of every iterate together with successive differences measured at the
weaker index ``s - eps`` (``n/p - eps`` for the density).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidField,
    InvalidParameter,
    NoContraction,
    ShapeError,
    SmallnessGateFailed,
)
from .flow_transport import solve_transport
from .littlewood_paley import low_pass
from .morrey_norms import (
    MorreyConfig,
    SpaceParams,
    besov_morrey_norm,
    block_table,
    bochner_from_table,
    chemin_lerner_from_table,
    linf_norm,
)
from .spectral_core import (
    FieldSeries,
    PhysicalField,
    divergence_free_defect,
    fft_array,
    heat_evolve,
    ifft_array,
    to_physical,
    to_spectral,
    trig_sup,
)
from .stokes_solver import solve_linearized_ns

DEFAULT_SMALLNESS_C = 0.25
DEFAULT_SMALLNESS_C_PRIME = 0.25


@dataclass(frozen=True)
class SchemeConfig:
    """Parameters of a scheme run.

    ``sp`` carries ``(n, s, p, q, r)``; the density is measured with summation
    exponent ``r`` and the velocity with ``r = 1``.  The admitted window is
    ``1 < q <= p``, ``n/p >= 1`` and ``n/p - 1 < s <= n/p`` (local), or the
    critical index ``s = n/p - 1`` with ``n/p > 1``; global mode requires the
    critical index and a velocity threshold ``smallness_c_prime``.
    """

    sp: SpaceParams
    T: float = 0.25
    dt: float = 2.5e-3
    m_max: int = 12
    eps: float = 0.25
    smallness_c: float = DEFAULT_SMALLNESS_C
    smallness_c_prime: float | None = None
    cauchy_tol: float = 1e-8
    mode: str = "local"
    u_init: str | None = None
    inner_tol: float = 1e-10
    inner_max: int = 30
    a_max: float = 0.95
    cfl: float = 2.0
    center_stride: int = 1
    diagnostics: bool = True

    def __post_init__(self):
        sp = self.sp
        n, p, q, s = sp.n, sp.p, sp.q, sp.s
        if not q > 1:
            raise InvalidParameter(f"the scheme needs 1 < q <= p, got q={q}")
        crit = abs(s - (n / p - 1)) < 1e-12
        if self.mode not in ("local", "global"):
            raise InvalidParameter(f"mode must be 'local' or 'global', got {self.mode!r}")
        if self.mode == "global":
            if not (crit and n / p > 1):
                raise InvalidParameter("global mode needs s = n/p - 1 with n/p > 1")
            if self.smallness_c_prime is None:
                raise InvalidParameter("global mode needs smallness_c_prime")
        else:
            local_ok = n / p >= 1 and n / p - 1 < s <= n / p + 1e-12
            if not (local_ok or (crit and n / p > 1)):
                raise InvalidParameter(
                    f"s={s} outside the admitted window (n/p-1, n/p] with n/p={n / p:g} >= 1")
        if not 0 < self.eps < 1:
            raise InvalidParameter("eps must lie in (0, 1)")
        if self.T <= 0 or self.dt <= 0 or self.m_max < 1:
            raise InvalidParameter("T, dt and m_max must be positive")
        steps = round(self.T / self.dt)
        if abs(steps * self.dt - self.T) > 1e-9 * self.T:
            raise InvalidParameter("T must be a multiple of dt")
        if self.u_init not in (None, "zero", "heat"):
            raise InvalidParameter("u_init must be 'zero' or 'heat'")
        if self.cauchy_tol <= 0:
            raise InvalidParameter("cauchy_tol must be positive")

    @property
    def initial_velocity(self):
        if self.u_init is not None:
            return self.u_init
        return "zero" if self.mode == "global" else "heat"

    @property
    def theta(self):
        sp = self.sp
        return (sp.s + 1 - sp.n / sp.p) / 2

    @property
    def lam(self):
        sp = self.sp
        return 2 * (sp.n / sp.q - sp.n / sp.p)

    @property
    def times(self):
        return np.arange(round(self.T / self.dt) + 1) * self.dt

    def velocity_space(self, shift=0.0):
        return self.sp.with_(s=self.sp.s + shift, r=1.0, mode="homogeneous")

    def density_space(self, shift=0.0):
        sp = self.sp
        return sp.with_(s=sp.n / sp.p + shift, r=math.inf, mode="homogeneous")

    def to_dict(self):
        out = {k: getattr(self, k) for k in (
            "T", "dt", "m_max", "eps", "smallness_c", "smallness_c_prime", "cauchy_tol", "mode",
            "inner_tol", "inner_max", "a_max", "cfl", "center_stride")}
        out["u_init"] = self.initial_velocity
        out["sp"] = self.sp.to_dict()
        out["theta"] = self.theta
        out["lambda"] = self.lam
        return out


@dataclass(frozen=True)
class GateVerdict:
    passed: bool
    a0_besov: float
    a0_linf: float
    a0_norm: float
    threshold: float
    margin: float
    u0_norm: float | None = None
    u0_threshold: float | None = None

    def to_dict(self):
        return dict(self.__dict__)

    def message(self):
        msg = (f"||a0||_(N^(n/p)_(p,q,inf) cap L^inf) = {self.a0_norm:.6g} "
               f"(Besov {self.a0_besov:.6g} + sup {self.a0_linf:.6g}) vs c = {self.threshold:.6g}")
        if self.u0_threshold is not None:
            msg += f"; ||u0||_(N^s_(p,q,1)) = {self.u0_norm:.6g} vs c' = {self.u0_threshold:.6g}"
        return msg


def check_smallness(a0, u0, cfg: SchemeConfig) -> GateVerdict:
    """Evaluate the smallness gate ``||a0||_{N^{n/p}_{p,q,inf} cap L^inf} <= c``.

    The intersection norm is the sum of the two norms; in global mode the
    velocity gate ``||u0||_{N^s_{p,q,1}} <= c'`` is checked as well.
    """
    a0 = to_physical(a0)
    mcfg = MorreyConfig.default(a0.grid, cfg.center_stride)
    b = besov_morrey_norm(a0, cfg.density_space(), mcfg, flag_mean=False)
    sup = linf_norm(a0)
    total = b + sup
    ok = total <= cfg.smallness_c
    margin = cfg.smallness_c - total
    u0n = besov_morrey_norm(u0, cfg.velocity_space(), mcfg, flag_mean=False)
    uthr = None
    if cfg.mode == "global":
        uthr = cfg.smallness_c_prime
        ok = ok and u0n <= uthr
        margin = min(margin, uthr - u0n)
    return GateVerdict(bool(ok), b, sup, total, cfg.smallness_c, margin, u0n, uthr)


@dataclass
class IterationState:
    m: int
    a0: PhysicalField
    u0: PhysicalField
    a_series: FieldSeries
    u_series: FieldSeries
    grad_pi_series: FieldSeries
    F_norm: float
    gamma_m: float = 1.0
    delta_norms: list = field(default_factory=list)
    F_history: list = field(default_factory=list)
    gamma_history: list = field(default_factory=list)
    linf_a_history: list = field(default_factory=list)
    records: list = field(default_factory=list)
    verdict: GateVerdict | None = None


class _Norms:
    """Block tables and the composite norms used by the scheme."""

    def __init__(self, grid, cfg: SchemeConfig):
        self.grid = grid
        self.cfg = cfg
        self.mcfg = MorreyConfig.default(grid, cfg.center_stride)
        self.dt = cfg.dt

    def table(self, values):
        sp = self.cfg.sp
        return block_table(fft_array(values, self.grid), self.grid, sp.p, sp.q, "homogeneous", self.mcfg)

    def F(self, u_vals, gp_vals, shift=0.0):
        s = self.cfg.sp.s + shift
        js, tu = self.table(u_vals)
        _, tp = self.table(gp_vals)
        return (chemin_lerner_from_table(js, tu, self.dt, s, 1.0, math.inf)
                + chemin_lerner_from_table(js, tu, self.dt, s + 2, 1.0, 1.0)
                + chemin_lerner_from_table(js, tp, self.dt, s, 1.0, 1.0))

    def density(self, a_vals, shift=0.0):
        sp = self.cfg.sp
        js, ta = self.table(a_vals)
        return chemin_lerner_from_table(js, ta, self.dt, sp.n / sp.p + shift, sp.r, math.inf)

    def delta(self, da, du, dgp):
        e = self.cfg.eps
        return self.density(da, -e) + self.F(du, dgp, -e)

    def bochner(self, vals, s, r, beta):
        js, t = self.table(vals)
        return bochner_from_table(js, t, self.dt, s, r, beta)


def _validate(a0, u0):
    a0 = to_physical(a0)
    u0 = to_physical(u0)
    if a0.grid != u0.grid:
        raise ShapeError("a0 and u0 live on different grids")
    if a0.components != 1 or u0.components != u0.grid.n:
        raise ShapeError("a0 must be scalar and u0 a vector field")
    d = divergence_free_defect(u0)
    if d > 1e-10:
        raise InvalidField(f"u0 is not divergence-free (relative defect {d:.2e})")
    return a0, u0


def _truncate(f, m):
    """``S_m f`` in the inhomogeneous calculus (keeps the mean)."""
    return to_physical(low_pass(f, m, mode="inhomogeneous"))


def init_iterates(a0, u0, cfg: SchemeConfig, check_gate=True) -> IterationState:
    """Build the ``m = 0`` state (``u^0 = 0`` or the heat flow of ``S_1 u0``)."""
    a0, u0 = _validate(a0, u0)
    grid = a0.grid
    verdict = check_smallness(a0, u0, cfg)
    if check_gate and not verdict.passed:
        raise SmallnessGateFailed("smallness gate failed: " + verdict.message(), verdict)
    times = cfg.times
    if cfg.initial_velocity == "zero":
        u_vals = np.zeros((times.size,) + u0.values.shape)
    else:
        S1 = to_spectral(_truncate(u0, 1))
        u_vals = np.stack([ifft_array(heat_evolve(S1, t).coeffs, grid) for t in times])
    a_init = _truncate(a0, 0)
    a_series = FieldSeries.constant(a_init, times)
    u_series = FieldSeries(grid, times, u_vals)
    gp_series = FieldSeries(grid, times, np.zeros_like(u_vals))
    norms = _Norms(grid, cfg)
    Fn = norms.F(u_vals, gp_series.values)
    st = IterationState(0, a0, u0, a_series, u_series, gp_series, Fn, verdict=verdict)
    st.F_history.append(Fn)
    st.linf_a_history.append(float(np.abs(a_series.values).max()))
    return st


def advance_iterate(state: IterationState, cfg: SchemeConfig) -> IterationState:
    """One sweep of the scheme: transport, then the linearized velocity step."""
    grid = state.a0.grid
    m = state.m
    a_data = _truncate(state.a0, m + 1)
    u_data = _truncate(state.u0, m + 1)
    a_next, flow = solve_transport(a_data, state.u_series, cfg.dt, T=cfg.T, cfl=cfg.cfl,
                                   return_flow=True, check_div=False)
    sol = solve_linearized_ns(u_data, a_next, state.u_series, dt=cfg.dt, T=cfg.T,
                              inner_tol=cfg.inner_tol, inner_max=cfg.inner_max,
                              a_max=cfg.a_max, cfl=cfg.cfl)
    norms = _Norms(grid, cfg)
    u_vals, gp_vals = sol.u_series.values, sol.grad_pi_series.values
    Fn = norms.F(u_vals, gp_vals)
    delta = norms.delta(a_next.values - state.a_series.values, u_vals - state.u_series.values,
                        gp_vals - state.grad_pi_series.values)
    gamma = float(flow.gamma[-1])
    rec = {"m": m + 1, "F_norm": Fn, "gamma": gamma, "delta_weak_norm": delta,
           "linf_a": float(np.abs(a_next.values).max()),
           "inner_contraction_ratio": sol.diagnostics["contraction_ratio"],
           "inner_max_sweeps": sol.diagnostics["max_sweeps"]}
    if cfg.diagnostics:
        rec.update(_diagnostics(norms, cfg, state, a_data, u_data, a_next, sol, gamma))
    new = IterationState(m + 1, state.a0, state.u0, a_next, sol.u_series, sol.grad_pi_series, Fn,
                         gamma, state.delta_norms + [delta], state.F_history + [Fn],
                         state.gamma_history + [gamma], state.linf_a_history + [rec["linf_a"]],
                         state.records + [rec], state.verdict)
    return new


def _diagnostics(norms, cfg, state, a_data, u_data, a_next, sol, gamma):
    sp = cfg.sp
    n, p = sp.n, sp.p
    dt = cfg.dt
    out = {}
    dudt = np.gradient(sol.u_series.values, dt, axis=0)
    dadt = np.gradient(a_next.values, dt, axis=0)
    out["dt_u_norm"] = norms.bochner(dudt, n / p - 1, 1.0, 2.0)
    out["dt_a_norm"] = norms.bochner(dadt, n / p - 1, sp.r, 2.0)
    grid = norms.grid
    heat = np.stack([ifft_array(heat_evolve(to_spectral(u_data), t).coeffs, grid) for t in cfg.times])
    out["split_heat_norm"] = norms.F(heat, np.zeros_like(heat))
    out["split_w_norm"] = norms.F(sol.u_series.values - heat, sol.grad_pi_series.values)
    lam = cfg.lam
    lhs = norms.density(a_next.values)
    a0n = besov_morrey_norm(a_data, cfg.density_space(), norms.mcfg, flag_mean=False)
    integ = norms.bochner(state.u_series.values, n / p + 1, 1.0, 1.0)
    base = gamma ** lam * a0n
    if lhs > base > 0 and integ > 0:
        c_obs = math.log(lhs / base) / (gamma ** lam * integ)
    else:
        c_obs = 0.0
    out["transport_bound_lhs"] = lhs
    out["transport_bound_C_obs"] = c_obs
    return out


@dataclass
class ConvergenceReport:
    config: dict
    m_final: int
    stop_reason: str
    converged: bool
    u0_norm: float
    a0_sup: float
    F_history: list
    gamma_history: list
    delta_norms: list
    linf_a_history: list
    records: list
    rho: float | None
    r_squared: float | None
    gamma_ok: bool
    uniform_bound_ratio: float | None
    max_principle_ratio: float
    gate: dict
    final_state: IterationState = field(repr=False, default=None)

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "final_state"}
        return _jsonable(d)

    def csv_rows(self):
        rows = [("m", "F_norm", "gamma", "delta_weak_norm", "linf_a")]
        rows.append((0, self.F_history[0], 1.0, "", self.linf_a_history[0]))
        for rec in self.records:
            rows.append((rec["m"], rec["F_norm"], rec["gamma"], rec["delta_weak_norm"], rec["linf_a"]))
        return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def geometric_fit(deltas, floor_rel=1e-12):
    """Least-squares fit ``log delta_m = c + m log rho``; returns ``(rho, R^2, npts)``."""
    d = np.asarray(deltas, dtype=float)
    m = np.arange(1, d.size + 1)
    if d.size == 0 or d.max() <= 0:
        return None, None, 0
    keep = d > floor_rel * d.max()
    if keep.sum() < 3:
        return None, None, int(keep.sum())
    x, y = m[keep], np.log(d[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(coef[0])), r2, int(keep.sum())


def run_scheme(a0, u0, cfg: SchemeConfig) -> ConvergenceReport:
    """Iterate until ``delta_m <= cauchy_tol`` on three consecutive sweeps (or ``m_max``).

    Raises
    ------
    SmallnessGateFailed
        Initial data violate the gate.
    NoContraction
        Successive differences failed to decrease on three consecutive sweeps
        while still above ``cauchy_tol``.
    """
    state = init_iterates(a0, u0, cfg)
    stop = "m_max"
    below = 0
    rising = 0
    while state.m < cfg.m_max:
        state = advance_iterate(state, cfg)
        d = state.delta_norms
        if d[-1] == 0.0:
            stop = "exact"
            break
        if d[-1] <= cfg.cauchy_tol:
            below += 1
            rising = 0
            if below >= 3:
                stop = "cauchy_tol"
                break
            continue
        below = 0
        if len(d) >= 2 and d[-1] >= d[-2]:
            rising += 1
            if rising >= 3:
                raise NoContraction(
                    f"delta norms stopped decreasing: {', '.join(f'{x:.3e}' for x in d[-4:])}")
        else:
            rising = 0
    rho, r2, _ = geometric_fit(state.delta_norms)
    mcfg = MorreyConfig.default(state.a0.grid, cfg.center_stride)
    u0n = besov_morrey_norm(state.u0, cfg.velocity_space(), mcfg, flag_mean=False)
    a0sup = trig_sup(state.a0) if np.any(state.a0.values) else 0.0
    lin = state.linf_a_history
    mp = max(lin) / a0sup if a0sup > 0 else (0.0 if max(lin) == 0 else math.inf)
    return ConvergenceReport(
        config=cfg.to_dict(), m_final=state.m, stop_reason=stop,
        converged=stop in ("exact", "cauchy_tol"), u0_norm=u0n, a0_sup=a0sup,
        F_history=list(state.F_history), gamma_history=list(state.gamma_history),
        delta_norms=list(state.delta_norms), linf_a_history=list(lin), records=list(state.records),
        rho=rho, r_squared=r2, gamma_ok=all(g <= 2.0 for g in state.gamma_history),
        uniform_bound_ratio=(max(state.F_history) / u0n if u0n > 0 else None),
        max_principle_ratio=mp, gate=state.verdict.to_dict(), final_state=state)


def limit_distance(rep1: ConvergenceReport, rep2: ConvergenceReport, cfg: SchemeConfig):
    """Weak-index distance between the final iterates of two runs."""
    s1, s2 = rep1.final_state, rep2.final_state
    norms = _Norms(s1.a0.grid, cfg)
    return norms.delta(s1.a_series.values - s2.a_series.values, s1.u_series.values - s2.u_series.values,
                       s1.grad_pi_series.values - s2.grad_pi_series.values)


def refinement_decay(a0, cfg: SchemeConfig, ms):
    """``||S_{m+1} a0 - a0||_{N^{n/p - eps}_{p,q,inf}}`` for each ``m`` and the fitted
    constant ``C`` in ``<= C 2^{-eps m}``."""
    a0 = to_physical(a0)
    mcfg = MorreyConfig.default(a0.grid, cfg.center_stride)
    sp = cfg.density_space(-cfg.eps)
    vals = [besov_morrey_norm(_truncate(a0, m + 1) - a0, sp, mcfg, flag_mean=False) for m in ms]
    C = max((v * 2.0 ** (cfg.eps * m) for m, v in zip(ms, vals)), default=0.0)
    return np.array(vals), C
