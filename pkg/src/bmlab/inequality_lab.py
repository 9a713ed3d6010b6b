"""Empirical checks of the Morrey/Besov-Morrey estimates.

Every check evaluates both sides of an estimate on concrete fields, with the
unknown constants set to 1 on the right-hand side.  The fitted constant is
``max lhs/rhs``; the falsifiable content is that per-group constants (per
dyadic level, dilation shift, amplitude, seed or time scale) agree within a
declared factor.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidFamily, InvalidParameter
from .families import TestFieldFamily, verify_shell_support
from .flow_transport import FlowMap, compose, solve_transport
from .littlewood_paley import commutator_multiply, commutator_transport, get_partition
from .morrey_norms import (
    MorreyConfig,
    block_table,
    bochner_from_table,
    chemin_lerner_from_table,
    linf_norm,
    morrey_norm_stack,
    time_integral,
)
from .spectral_core import (
    FieldSeries,
    PhysicalField,
    SpectralField,
    fft_array,
    gradient_array,
    gradient_part_array,
    ifft_array,
    partial_array,
    product_array,
    to_physical,
    to_spectral,
)
from .stokes_solver import solve_linearized_ns, solve_stokes

ALGEBRAIC_FACTOR = 4.0
HEAT_FACTOR = 2.0
SOLVER_FACTOR = 8.0
HOLDER_SLACK = 1e-3
_DEGENERATE = 1e-14


@dataclass
class InequalityReport:
    """Both sides of one estimate over a family, with fitted constants.

    ``samples`` holds dicts ``{index, statement, group, lhs, rhs}``.  Rows
    whose right-hand side vanishes are degenerate and excluded from fitting.
    """

    inequality_id: str
    samples: list
    fitted_constant: float
    group_constants: dict
    stability: float
    factor: float
    passed: bool
    degenerate: int = 0
    extra: dict = field(default_factory=dict)

    def ratios(self, statement=None):
        return np.array([s["lhs"] / s["rhs"] for s in self.samples
                         if s["rhs"] > 0 and not s["degenerate"]
                         and (statement is None or s["statement"] == statement)])

    def to_dict(self):
        return _jsonable({
            "inequality_id": self.inequality_id, "fitted_constant": self.fitted_constant,
            "group_constants": {str(k): v for k, v in self.group_constants.items()},
            "stability": self.stability, "factor": self.factor, "pass": self.passed,
            "degenerate": self.degenerate, "extra": self.extra,
            "samples": self.samples})

    def csv_rows(self):
        rows = [("sample", "lhs", "rhs")]
        rows += [(s["index"], repr(float(s["lhs"])), repr(float(s["rhs"]))) for s in self.samples]
        return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else "nan"))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def build_report(inequality_id, rows, factor, extra=None, lower_bands=False):
    """Fit constants from rows ``(statement, group, lhs, rhs)``.

    Stability is the largest max/min ratio of per-group constants within a
    statement.  With ``lower_bands`` the per-group minimum ratios enter the
    spread as well (two-sided estimates).
    """
    samples = []
    for i, (stmt, grp, lhs, rhs) in enumerate(rows):
        lhs, rhs = float(lhs), float(rhs)
        if lhs < 0 or rhs < 0 or not (math.isfinite(lhs) and math.isfinite(rhs)):
            raise InvalidParameter(f"row {i}: sides must be finite and nonnegative ({lhs}, {rhs})")
        samples.append({"index": i, "statement": stmt, "group": grp, "lhs": lhs, "rhs": rhs})
    for stmt in {s["statement"] for s in samples}:
        top = max([s["rhs"] for s in samples if s["statement"] == stmt] + [0.0])
        for s in samples:
            if s["statement"] == stmt:
                s["degenerate"] = bool(s["rhs"] <= _DEGENERATE * top or s["rhs"] == 0.0)
    live = [s for s in samples if not s["degenerate"]]
    groups, lows = {}, {}
    for s in live:
        key = (s["statement"], s["group"])
        ratio = s["lhs"] / s["rhs"]
        groups[key] = max(groups.get(key, 0.0), ratio)
        lows[key] = min(lows.get(key, math.inf), ratio)
    fitted = max([s["lhs"] / s["rhs"] for s in live] + [0.0])
    stability = 1.0
    for stmt in {k[0] for k in groups}:
        for table in ((groups, lows) if lower_bands else (groups,)):
            vals = [v for k, v in table.items() if k[0] == stmt and v > 0]
            if len(vals) > 1:
                stability = max(stability, max(vals) / min(vals))
    passed = math.isfinite(fitted) and stability <= factor
    extra = dict(extra or {})
    if lower_bands:
        extra["group_lower"] = {_key(k): v for k, v in lows.items()}
    return InequalityReport(inequality_id, samples, fitted, {_key(k): v for k, v in groups.items()},
                            stability, factor, passed, len(samples) - len(live), extra)


def _key(k):
    stmt, grp = k
    return f"{stmt}:{grp}" if stmt else str(grp)


# shared evaluation helpers ------------------------------------------------------

def _cfg(grid, cfg):
    return cfg or MorreyConfig.default(grid)


def _magnitude(vals):
    """``|u|`` of a component array ``(c, ...)``."""
    return np.sqrt(np.sum(vals ** 2, axis=0)) if vals.shape[0] > 1 else np.abs(vals[0])


def _morrey_many(arrays, grid, p, q, cfg):
    """Morrey norms of a list of component arrays."""
    if not arrays:
        return np.zeros(0)
    return morrey_norm_stack(np.stack([_magnitude(a) for a in arrays]), grid, p, q, cfg)


def _besov(u, s, p, q, r, mode, cfg):
    U = to_spectral(u)
    js, table = block_table(U.coeffs[None], U.grid, p, q, mode, cfg)
    return float(np.sum((2.0 ** (s * js) * table[0]) ** r) ** (1 / r)) if math.isfinite(r) \
        else float((2.0 ** (s * js) * table[0]).max())


def _grad_sup(u):
    """``||grad u||_inf`` with ``|grad u|`` the Frobenius norm of the Jacobian."""
    U = to_spectral(u)
    grid = U.grid
    tot = 0.0
    for c in range(U.components):
        g = ifft_array(gradient_array(U.coeffs[c:c + 1], grid), grid)
        tot = tot + np.sum(g ** 2, axis=0)
    return float(np.sqrt(tot).max())


def _labeled(family):
    if isinstance(family, TestFieldFamily):
        return family.labeled()
    out = []
    for item in family:
        out.append(item if isinstance(item, tuple) else (0, item))
    return out


def _check_window(s, r, upper, name):
    """Window ``0 < s < upper`` or ``s = upper`` with ``r = 1``."""
    ok = (0 < s < upper) or (abs(s - upper) < 1e-12 and r == 1)
    if not ok:
        raise InvalidParameter(f"{name}: need 0 < s < {upper:g}, or s = {upper:g} with r = 1; got s={s}, r={r}")


# Bernstein ---------------------------------------------------------------------

def _multi_indices(n, k):
    return list(itertools.combinations_with_replacement(range(n), k))


def verify_bernstein(family, k=1, p=4.0, q=2.0, part="ii", factor=ALGEBRAIC_FACTOR, cfg=None):
    """Bernstein inequalities for shell- or ball-supported fields.

    ``part="ii"``: ``sup_{|alpha|=k} ||d^alpha u||_M`` against ``2^{jk}||u||_M``
    (two-sided band for annulus support).  ``part="i"``: the same upper bound
    for ball support.  ``part="iii"``: ``||u||_inf`` against
    ``2^{jn/p}||u||_M``.  Groups are the shell indices ``j``.
    """
    fams = [family] if isinstance(family, TestFieldFamily) else list(family)
    rows = []
    for fam in fams:
        if fam.kind != "single_shell":
            raise InvalidFamily("Bernstein checks need single_shell families")
        support = fam.params.get("support", "annulus")
        if part == "ii" and support != "annulus":
            raise InvalidFamily("the two-sided band needs annulus support")
        grid = fam.grid
        cf = _cfg(grid, cfg)
        j = int(fam.params["j"])
        fields = fam.fields()
        for u in fields:
            if not verify_shell_support(u, j, support):
                raise InvalidFamily(f"field escapes the shell j={j}")
        if not fields:
            continue
        base = _morrey_many([u.values for u in fields], grid, p, q, cf)
        if part == "iii":
            for u, b in zip(fields, base):
                rows.append(("", j, linf_norm(u), 2.0 ** (j * grid.n / p) * b))
            continue
        alphas = _multi_indices(grid.n, k)
        ks = grid.wavenumbers(deriv=True)
        for u, b in zip(fields, base):
            c = fft_array(u.values, grid)
            ders = []
            for alpha in alphas:
                d = c
                for ax in alpha:
                    d = 1j * ks[ax] * d
                ders.append(ifft_array(d, grid))
            top = _morrey_many(ders, grid, p, q, cf).max()
            rows.append(("", j, top, 2.0 ** (j * k) * b))
    return build_report(f"bernstein_{part}", rows, factor,
                        {"k": k, "p": p, "q": q}, lower_bands=(part == "ii"))


# commutators -----------------------------------------------------------------------

def commutator_uv_lhs(u, v, sp, cfg=None):
    """``l^r_j 2^{sj} ||[Delta_j, v . grad] u||_M`` over the partition range."""
    U = to_spectral(u)
    grid = U.grid
    js = get_partition(grid, sp.mode).indices
    blocks = [ifft_array(commutator_transport(U, v, j, sp.mode).coeffs, grid) for j in js]
    vals = _morrey_many(blocks, grid, sp.p, sp.q, _cfg(grid, cfg))
    return _lr_weighted(js, vals, sp.s, sp.r)


def _lr_weighted(js, vals, s, r):
    w = 2.0 ** (s * np.asarray(js, dtype=float)) * np.asarray(vals)
    return float(w.max()) if math.isinf(r) else float(np.sum(w ** r) ** (1 / r))


def verify_commutator_uv(pairs, sp, factor=ALGEBRAIC_FACTOR, cfg=None):
    """Transport commutator estimate.

    ``pairs`` is a list of ``(group, u, v)`` with divergence-free ``v``;
    ``rhs = ||u||_{N^s_{p,q,r}} (||v||_{N^{n/p+1}_{p,q,inf}} + ||grad v||_inf)``.
    """
    if not pairs:
        return build_report("commutator_uv", [], factor)
    n = to_spectral(pairs[0][1]).grid.n
    _check_window(sp.s, sp.r, n / sp.p + 1, "transport commutator")
    rows = []
    for grp, u, v in pairs:
        lhs = commutator_uv_lhs(u, v, sp, cfg)
        vn = _besov(v, n / sp.p + 1, sp.p, sp.q, math.inf, sp.mode, cfg)
        rhs = _besov(u, sp.s, sp.p, sp.q, sp.r, sp.mode, cfg) * (vn + _grad_sup(v))
        rows.append(("", grp, lhs, rhs))
    return build_report("commutator_uv", rows, factor, {"space": sp.to_dict()})


def _series_blocks(series: FieldSeries, sp, cfg):
    return block_table(series.coeffs(), series.grid, sp.p, sp.q, sp.mode, cfg)


def commutator_pi_lhs(a_series: FieldSeries, gp_series: FieldSeries, sp, cfg=None):
    """``l^r_j 2^{sj} ||[Delta_j, a] grad pi||_{L^1_T M}`` (trapezoid in time)."""
    grid = a_series.grid
    js = get_partition(grid, sp.mode).indices
    cf = _cfg(grid, cfg)
    T = len(a_series)
    table = np.zeros((T, len(js)))
    for t in range(T):
        a = PhysicalField(grid, a_series.values[t])
        g = PhysicalField(grid, gp_series.values[t])
        blocks = [ifft_array(commutator_multiply(a, g, j, sp.mode).coeffs, grid) for j in js]
        table[t] = _morrey_many(blocks, grid, sp.p, sp.q, cf)
    per_j = time_integral(table, a_series.dt, axis=0)
    return _lr_weighted(js, per_j, sp.s, sp.r)


def verify_commutator_pi(cases, sp, factor=ALGEBRAIC_FACTOR, cfg=None):
    """Multiplication commutator estimate, integrated in time.

    ``cases`` is a list of ``(group, a_series, gradpi_series)``;
    ``rhs = ||a||_{L~^inf_T(N^{n/p}_{p,q,inf})} ||grad pi||_{L~^1_T(N^s_{p,q,r})}``.
    """
    if not cases:
        return build_report("commutator_pi", [], factor)
    n = cases[0][1].grid.n
    _check_window(sp.s, sp.r, n / sp.p, "multiplication commutator")
    rows = []
    for grp, a_s, g_s in cases:
        lhs = commutator_pi_lhs(a_s, g_s, sp, cfg)
        js, ta = _series_blocks(a_s, sp, cfg)
        _, tg = _series_blocks(g_s, sp, cfg)
        an = chemin_lerner_from_table(js, ta, a_s.dt, n / sp.p, math.inf, math.inf)
        gn = chemin_lerner_from_table(js, tg, g_s.dt, sp.s, sp.r, 1.0)
        rows.append(("", grp, lhs, an * gn))
    return build_report("commutator_pi", rows, factor, {"space": sp.to_dict()})


# heat ---------------------------------------------------------------------------

def heat_block_ratios(u, j, taus, p, q, mode="homogeneous", cfg=None):
    """``||Delta_j e^{t Delta} u||_M / ||Delta_j u||_M`` at ``t = tau 4^{-j}``."""
    U = to_spectral(u)
    grid = U.grid
    part = get_partition(grid, mode)
    blk = part.block_array(U.coeffs, j)
    arrs = [ifft_array(np.exp(-(tau / 4.0 ** j) * grid.ksq()) * blk, grid) for tau in taus]
    vals = _morrey_many(arrs, grid, p, q, _cfg(grid, cfg))
    if vals[0] == 0:
        return None
    return vals / vals[0]


def fit_heat_decay(taus, ratios):
    """Log-linear fit ``log ratio = log C0 - c tau`` pooled over samples.

    Returns ``(C, c)`` where ``C`` is the smallest constant with
    ``ratio <= C exp(-c tau)`` at every sample.
    """
    taus = np.asarray(taus, dtype=float)
    R = np.atleast_2d(np.asarray(ratios, dtype=float))
    x = np.tile(taus, R.shape[0])
    y = np.log(R.ravel())
    slope = np.polyfit(x, y, 1)[0]
    c = -float(slope)
    C = float(np.max(R * np.exp(c * taus)[None, :]))
    return C, c


def verify_heat_localized(families, taus=None, p=4.0, q=2.0, mode="homogeneous",
                          factor=HEAT_FACTOR, c_band=(0.5, (8 / 3) ** 2), cfg=None):
    """Localized heat decay ``||Delta_j e^{tDelta}u|| <= C e^{-c t 4^j} ||Delta_j u||``.

    One family per shell ``j``; times ``t = tau 4^{-j}`` with ``tau`` in
    ``taus`` (default eight points in ``[0, 1]``).  Passes when every fitted
    ``c`` lies in ``c_band`` and ``C`` and ``c`` each vary by at most
    ``factor`` across shells.
    """
    fams = [families] if isinstance(families, TestFieldFamily) else list(families)
    taus = np.linspace(0.0, 1.0, 8) if taus is None else np.asarray(taus, dtype=float)
    rows, per_j = [], {}
    for fam in fams:
        if fam.kind != "single_shell":
            raise InvalidFamily("heat decay checks need single_shell families")
        j = int(fam.params["j"])
        ratios = []
        for u in fam.fields():
            r = heat_block_ratios(u, j, taus, p, q, mode, cfg)
            if r is not None:
                ratios.append(r)
        if not ratios:
            raise InvalidFamily(f"family at j={j} is degenerate (all blocks vanish)")
        C, c = fit_heat_decay(taus, ratios)
        per_j[j] = {"C": C, "c": c}
        for r in ratios:
            for tau, val in zip(taus, r):
                rows.append(("", j, val, math.exp(-c * tau)))
    rep = build_report("heat_localized", rows, factor, {"per_j": per_j, "taus": taus})
    Cs = [v["C"] for v in per_j.values()]
    cs = [v["c"] for v in per_j.values()]
    spread = max(max(Cs) / min(Cs), max(cs) / min(cs)) if min(cs) > 0 else math.inf
    band_ok = all(c_band[0] <= c <= c_band[1] for c in cs)
    rep.stability = spread
    rep.passed = bool(band_ok and spread <= factor)
    rep.extra.update({"c_band": list(c_band), "c_in_band": band_ok})
    return rep


def heat_series(u0, T, samples):
    """``e^{t Delta} u0`` at ``samples`` uniform times in ``[0, T]``."""
    U = to_spectral(u0)
    grid = U.grid
    times = np.linspace(0.0, T, samples)
    c = np.stack([np.exp(-t * grid.ksq()) * U.coeffs for t in times])
    return FieldSeries.from_coeffs(grid, times, c)


def heat_beta_rhs(js, row, s, beta, c, T):
    """``sum_j 2^{sj} ||Delta_j u0||_M ((1 - e^{-c T 4^j beta})/(c beta))^{1/beta}``."""
    js = np.asarray(js, dtype=float)
    w = ((1 - np.exp(-c * T * 4.0 ** js * beta)) / (c * beta)) ** (1 / beta)
    return float(np.sum(2.0 ** (s * js) * np.asarray(row) * w))


def verify_heat_chemin(family, sp, beta=1.0, c=None, T=0.25, samples=65, halvings=5,
                       factor=ALGEBRAIC_FACTOR, cfg=None):
    """Chemin-Lerner bounds for the heat flow.

    Statement ``sup``: ``||e^{tDelta}u0||_{L~^inf_T(N^s_{p,q,1})} <= C ||u0||_{N^s_{p,q,1}}``.
    Statement ``beta``: ``||e^{tDelta}u0||_{L~^beta_T(N^{s+2/beta}_{p,q,1})}``
    against the weighted block sum (see :func:`heat_beta_rhs`) with rate ``c``.
    Also records whether that weighted sum decreases strictly toward 0 as
    ``T`` is halved ``halvings`` times.
    """
    if not beta >= 1 or math.isinf(beta):
        raise InvalidParameter("beta must lie in [1, inf)")
    if c is None:
        c = 0.5
    rows, vanishing = [], []
    for grp, u in _labeled(family):
        ser = heat_series(u, T, samples)
        js, table = _series_blocks(ser, sp, cfg)
        row0 = table[0]
        lhs_sup = chemin_lerner_from_table(js, table, ser.dt, sp.s, 1.0, math.inf)
        rhs_sup = _lr_weighted(js, row0, sp.s, 1.0)
        lhs_b = chemin_lerner_from_table(js, table, ser.dt, sp.s + 2 / beta, 1.0, beta)
        rhs_b = heat_beta_rhs(js, row0, sp.s, beta, c, T)
        rows.append(("sup", grp, lhs_sup, rhs_sup))
        rows.append(("beta", grp, lhs_b, rhs_b))
        seq = [heat_beta_rhs(js, row0, sp.s, beta, c, T / 2 ** k) for k in range(halvings + 1)]
        dec = all(b < a for a, b in zip(seq, seq[1:])) if seq[0] > 0 else True
        vanishing.append({"group": grp, "sequence": seq, "decreasing": dec})
    rep = build_report("heat_chemin", rows, factor, {"beta": beta, "c": c, "T": T, "vanishing": vanishing})
    rep.passed = bool(rep.passed and all(v["decreasing"] for v in vanishing))
    return rep


# solver-coupled estimates ---------------------------------------------------------

@dataclass
class TransportScenario:
    a0: PhysicalField
    velocity: object
    dt: float
    T: float | None = None
    group: object = 0


@dataclass
class StokesScenario:
    u0: PhysicalField
    forcing: FieldSeries | None
    dt: float
    T: float
    group: object = 0


@dataclass
class LinearizedScenario:
    u0: PhysicalField
    a: FieldSeries
    v: FieldSeries | None
    dt: float
    T: float
    group: object = 0
    inner_tol: float = 1e-10


def _transport_row(sc: TransportScenario, sp, cfg):
    n = sc.a0.grid.n
    series, flow = solve_transport(sc.a0, sc.velocity, sc.dt, T=sc.T, return_flow=True)
    js, ta = _series_blocks(series, sp, cfg)
    lhs = chemin_lerner_from_table(js, ta, series.dt, sp.s, sp.r, math.inf)
    a_t = np.array([_lr_weighted(js, row, sp.s, sp.r) for row in ta])
    vel = sc.velocity
    if isinstance(vel, PhysicalField):
        vel = FieldSeries.constant(vel, series.times)
    vsp = sp.with_(s=n / sp.p + 1, r=math.inf)
    vsub = _resample(vel, series.times)
    jv, tv = _series_blocks(vsub, vsp, cfg)
    v_t = np.array([_lr_weighted(jv, row, vsp.s, math.inf) for row in tv])
    g_t = np.array([_grad_sup(PhysicalField(vsub.grid, x)) for x in vsub.values])
    integral = float(time_integral(a_t * (v_t + g_t), series.dt))
    gamma = float(flow.gamma[-1])
    rhs = gamma ** (2 * (n / sp.q - n / sp.p)) * (a_t[0] + integral)
    return lhs, rhs, {"gamma": gamma, "a0_norm": float(a_t[0]), "integral": integral}


def _resample(series: FieldSeries, times):
    """Restrict a velocity series to the given (stored) times."""
    idx = [int(np.argmin(np.abs(series.times - t))) for t in times]
    if any(abs(series.times[i] - t) > 1e-9 * max(1.0, abs(t)) for i, t in zip(idx, times)):
        raise InvalidParameter("velocity series is not sampled at the flow times")
    return FieldSeries(series.grid, np.asarray(times), series.values[idx])


def _stokes_lhs(sol, sp, cfg):
    js, tu = _series_blocks(sol.u_series, sp, cfg)
    _, tp = _series_blocks(sol.grad_pi_series, sp, cfg)
    dt = sol.u_series.dt
    return (chemin_lerner_from_table(js, tu, dt, sp.s, 1.0, math.inf)
            + bochner_from_table(js, tu, dt, sp.s + 2, 1.0, 1.0)
            + bochner_from_table(js, tp, dt, sp.s, 1.0, 1.0)), (js, tu, tp)


def _stokes_row(sc: StokesScenario, sp, cfg):
    sol = solve_stokes(sc.u0, sc.forcing, dt=sc.dt, T=sc.T)
    lhs, (js, tu, tp) = _stokes_lhs(sol, sp, cfg)
    _, tf = _series_blocks(sol.forcing_series, sp, cfg)
    dt = sol.u_series.dt
    f1 = bochner_from_table(js, tf, dt, sp.s, 1.0, 1.0)
    rhs = _lr_weighted(js, tu[0], sp.s, 1.0) + f1
    pres = (chemin_lerner_from_table(js, tp, dt, sp.s, 1.0, 1.0), chemin_lerner_from_table(js, tf, dt, sp.s, 1.0, 1.0))
    return lhs, rhs, {"pressure_lhs": pres[0], "pressure_rhs": pres[1]}


def _linns_row(sc: LinearizedScenario, sp, cfg):
    grid = sc.u0.grid
    n = grid.n
    sol = solve_linearized_ns(sc.u0, sc.a, sc.v, dt=sc.dt, T=sc.T, inner_tol=sc.inner_tol)
    lhs, (js, tu, tp) = _stokes_lhs(sol, sp, cfg)
    dt = sol.u_series.dt
    asp = sp.with_(s=n / sp.p, r=math.inf)
    ja, ta = _series_blocks(sc.a, asp, cfg)
    a_norm = (chemin_lerner_from_table(ja, ta, sc.a.dt, n / sp.p, math.inf, math.inf)
              + float(np.abs(sc.a.values).max()))
    u2 = bochner_from_table(js, tu, dt, sp.s + 2, 1.0, 1.0)
    p1 = bochner_from_table(js, tp, dt, sp.s, 1.0, 1.0)
    u0n = _lr_weighted(js, tu[0], sp.s, 1.0)
    if sc.v is not None:
        vsp = sp.with_(s=n / sp.p + 1, r=1.0)
        jv, tv = _series_blocks(sc.v, vsp, cfg)
        v_t = np.array([_lr_weighted(jv, row, vsp.s, 1.0) for row in tv])
        v_int = float(time_integral(v_t, sc.v.dt))
        u_t = np.array([_lr_weighted(js, row, sp.s, 1.0) for row in tu])
        cross = float(time_integral(u_t * v_t, dt))
    else:
        v_int = cross = 0.0
    rhs = math.exp(v_int) * (u0n + a_norm * (u2 + p1))
    direct = u0n + a_norm * (u2 + p1) + cross
    return lhs, rhs, {"a_norm": a_norm, "v_integral": v_int, "cross_term": cross,
                      "rhs_without_gronwall": direct,
                      "contraction_ratio": sol.diagnostics.get("contraction_ratio")}


def verify_transport_stokes_linns(scenarios, sp, factor=SOLVER_FACTOR, cfg=None):
    """Evaluate the transport, Stokes or linearized Navier-Stokes estimate on solver runs.

    ``scenarios`` is a list of :class:`TransportScenario`,
    :class:`StokesScenario` or :class:`LinearizedScenario` (one kind per call).
    Transport: ``||a||_{L~^inf_T(N^s)}`` against
    ``gamma^{2(n/q-n/p)}(||a0||_{N^s} + int ||a||_{N^s}(||u||_{N^{n/p+1}_{p,q,inf}} + ||grad u||_inf))``.
    Stokes: ``||u||_{L~^inf(N^s_1)} + ||u||_{L^1(N^{s+2}_1)} + ||grad pi||_{L^1(N^s_1)}``
    against ``||u0||_{N^s_1} + ||f||_{L^1(N^s_1)}``.
    Linearized: the same left side against
    ``exp(int ||v||_{N^{n/p+1}_1})(||u0|| + ||a||_{L~^inf(N^{n/p}_inf cap L^inf)}(||u||_{L^1(N^{s+2})} + ||grad pi||_{L^1(N^s)}))``.
    Solver failures propagate.
    """
    scenarios = list(scenarios)
    kinds = {type(s) for s in scenarios}
    if len(kinds) > 1:
        raise InvalidParameter("mix of scenario kinds in one call")
    kind = kinds.pop() if kinds else TransportScenario
    ident, fn = {TransportScenario: ("transport", _transport_row),
                 StokesScenario: ("stokes", _stokes_row),
                 LinearizedScenario: ("linearized_ns", _linns_row)}[kind]
    if kind is TransportScenario and scenarios:
        n = scenarios[0].a0.grid.n
        _check_window(sp.s, sp.r, n / sp.p + 1, "transport estimate")
    rows, details = [], []
    for sc in scenarios:
        lhs, rhs, info = fn(sc, sp, cfg)
        rows.append(("", sc.group, lhs, rhs))
        details.append(info)
    return build_report(ident, rows, factor, {"space": sp.to_dict(), "details": details})


# product estimates --------------------------------------------------------------------

CONVECTION_FORMS = ("literal", "transposed", "gradient_part")


def verify_product_estimates(triples, sp, statement=1, factor=ALGEBRAIC_FACTOR, cfg=None,
                             convection_form="literal"):
    """Product estimates used for the linearized system.

    ``triples`` holds ``(group, a, u)``.  Statement 1: ``||a Lap u||_{N^s}``
    against ``(||a||_inf + ||a||_{N^{n/p}_{p,q,inf}}) ||u||_{N^{s+2}}``.
    Statement 2: ``||a g||_{N^s}`` against the same factor times ``||g||_{N^s}``
    (``g = grad pi``).  Statement 3: ``||v . grad u||_{N^s}`` against
    ``||u||_{N^s}(||v||_{N^{n/p+1}_{p,q,r}} + ||grad v||_inf)``, with ``a``
    read as the velocity ``v``.  Products are dealiased.

    ``convection_form`` selects the left side of statement 3: ``"literal"``
    is ``v . grad u``; ``"transposed"`` is ``u . grad v``; ``"gradient_part"``
    is ``Q(v . grad u) = Q(u . grad v)`` for divergence-free ``u, v``.  Only
    the last two are bounded as stated: the literal form loses one derivative
    on ``u`` and its constants grow like ``2^j`` under dilation of ``u``.
    """
    if convection_form not in CONVECTION_FORMS:
        raise InvalidParameter(f"convection_form must be one of {CONVECTION_FORMS}")
    if statement not in (1, 2, 3):
        raise InvalidParameter("statement must be 1, 2 or 3")
    rows = []
    if not triples:
        return build_report(f"product_{statement}", rows, factor)
    grid = to_spectral(triples[0][1]).grid
    n = grid.n
    if statement in (1, 2):
        _check_window(sp.s, sp.r, n / sp.p, "product estimate")
    elif not (sp.s < n / sp.p or (abs(sp.s - n / sp.p) < 1e-12 and sp.r == 1)):
        raise InvalidParameter("convection product needs s < n/p, or s = n/p with r = 1")
    for grp, a, u in triples:
        A = to_physical(a)
        Uc = to_spectral(u).coeffs
        if statement == 3:
            Ac = fft_array(A.values, grid)
            Uv = ifft_array(Uc, grid)
            vals = 0.0
            for i in range(n):
                if convection_form == "transposed":
                    vals = vals + Uv[i:i + 1] * ifft_array(partial_array(Ac, grid, i), grid)
                else:
                    vals = vals + A.values[i:i + 1] * ifft_array(partial_array(Uc, grid, i), grid)
            conv = fft_array(vals, grid) * grid.dealias_mask()
            if convection_form == "gradient_part":
                conv = gradient_part_array(conv, grid)
            lhs = _besov(SpectralField(grid, conv), sp.s, sp.p, sp.q, sp.r, sp.mode, cfg)
            rhs = _besov(u, sp.s, sp.p, sp.q, sp.r, sp.mode, cfg) * (
                _besov(A, n / sp.p + 1, sp.p, sp.q, sp.r, sp.mode, cfg) + _grad_sup(A))
        else:
            if statement == 1:
                target = ifft_array(-grid.ksq() * Uc, grid)
                u_norm = _besov(u, sp.s + 2, sp.p, sp.q, sp.r, sp.mode, cfg)
            else:
                target = ifft_array(Uc, grid)
                u_norm = _besov(u, sp.s, sp.p, sp.q, sp.r, sp.mode, cfg)
            prod = SpectralField(grid, product_array(A.values, target, grid))
            lhs = _besov(prod, sp.s, sp.p, sp.q, sp.r, sp.mode, cfg)
            a_fac = float(np.abs(A.values).max()) + _besov(A, n / sp.p, sp.p, sp.q, math.inf, sp.mode, cfg)
            rhs = a_fac * u_norm
        rows.append(("", grp, lhs, rhs))
    extra = {"space": sp.to_dict()}
    if statement == 3:
        extra["convection_form"] = convection_form
    return build_report(f"product_{statement}", rows, factor, extra)


# embeddings, Hölder, pressure, composition ---------------------------------------------------

def verify_linf_embedding(family, p=4.0, q=2.0, factor=ALGEBRAIC_FACTOR, mode="inhomogeneous", cfg=None):
    """``||u||_inf <= C ||u||_{N^{n/p}_{p,q,1}}``."""
    rows = []
    for grp, u in _labeled(family):
        n = u.grid.n
        rows.append(("", grp, linf_norm(u), _besov(u, n / p, p, q, 1.0, mode, cfg)))
    return build_report("linf_embedding", rows, factor, {"p": p, "q": q, "mode": mode})


def verify_holder(pairs, p, q, p1=None, q1=None, p2=None, q2=None, cfg=None):
    """Hölder bounds in Morrey spaces, which hold with constant 1.

    Without ``p2, q2``: ``||u0 u1||_{M^p_q} <= ||u0||_inf ||u1||_{M^p_q}``.
    Otherwise ``||u1 u2||_{M^p_q} <= ||u1||_{M^{p1}_{q1}} ||u2||_{M^{p2}_{q2}}``
    with ``1/p = 1/p1 + 1/p2`` and ``1/q = 1/q1 + 1/q2``.  Products are
    pointwise on the grid.
    """
    general = p2 is not None
    if general and (abs(1 / p - 1 / p1 - 1 / p2) > 1e-12 or abs(1 / q - 1 / q1 - 1 / q2) > 1e-12):
        raise InvalidParameter("Hölder exponents must satisfy 1/p = 1/p1 + 1/p2 and 1/q = 1/q1 + 1/q2")
    rows = []
    for grp, a, b in pairs:
        A, B = to_physical(a), to_physical(b)
        grid = A.grid
        cf = _cfg(grid, cfg)
        prod = _magnitude(A.values) * _magnitude(B.values)
        lhs = morrey_norm_stack(prod[None], grid, p, q, cf)[0]
        if general:
            rhs = (morrey_norm_stack(_magnitude(A.values)[None], grid, p1, q1, cf)[0]
                   * morrey_norm_stack(_magnitude(B.values)[None], grid, p2, q2, cf)[0])
        else:
            rhs = linf_norm(A) * morrey_norm_stack(_magnitude(B.values)[None], grid, p, q, cf)[0]
        rows.append(("", grp, lhs, rhs))
    rep = build_report("holder", rows, math.inf)
    rep.passed = rep.fitted_constant <= 1 + HOLDER_SLACK
    return rep


def verify_pressure(family, sp, factor=ALGEBRAIC_FACTOR, cfg=None):
    """``||Q f||_{N^s_{p,q,1}} <= C ||f||_{N^s_{p,q,1}}`` for the gradient part ``Q f``."""
    from .stokes_solver import pressure_from_forcing
    rows = []
    for grp, f in _labeled(family):
        g = pressure_from_forcing(f)
        rows.append(("", grp, _besov(g, sp.s, sp.p, sp.q, 1.0, sp.mode, cfg),
                     _besov(f, sp.s, sp.p, sp.q, 1.0, sp.mode, cfg)))
    return build_report("pressure", rows, factor, {"space": sp.to_dict()})


def composition_ratios(fields, flow: FlowMap, t, p, q, cfg=None):
    """Ratios ``||f o X_t||_M / ||f||_M`` and the admissible band half-width ``gamma^{n/q-n/p}``."""
    k = flow.index(t)
    grid = flow.grid
    cf = _cfg(grid, cfg)
    comp = [compose(f, flow, t).values for f in fields]
    num = _morrey_many(comp, grid, p, q, cf)
    den = _morrey_many([to_physical(f).values for f in fields], grid, p, q, cf)
    gamma = float(flow.gamma[k])
    return num / den, gamma ** (grid.n / q - grid.n / p), gamma


def composition_kappa(ratios, band):
    """Smallest ``kappa`` with every ratio inside ``[1/(kappa band), kappa band]``."""
    ratios = np.asarray(ratios)
    return float(max(np.max(ratios) / band, np.max(1.0 / (ratios * band))))
