"""Command-line interface: ``bmlab <command> ...``.

Exit codes: 0 on success, 2 on configuration errors (one-line diagnostic on
stderr), 3 when the smallness gate or a contraction check fails.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .bmf import read_field, write_field
from .errors import BMLError, ConfigError, ContractionFailure, InvalidParameter, SmallnessGateFailed
from .families import KINDS, TestFieldFamily
from .littlewood_paley import get_partition
from .morrey_norms import MorreyConfig, SpaceParams, besov_morrey_report, linf_norm, morrey_norm
from .spectral_core import GridSpec, PhysicalField, heat_evolve, set_threads, to_physical, to_spectral

EXIT_OK, EXIT_CONFIG, EXIT_GATE = 0, 2, 3

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_R = {"anyOf": [{"type": "number", "minimum": 1}, {"const": "inf"}]}

_FIELD_SPEC = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"kind": {"enum": list(KINDS)}, "seed": {"type": "integer"},
                   "params": {"type": "object"}},
    "required": ["kind"],
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "command": {"enum": ["solve"]},
        "seed": {"type": "integer", "minimum": 0},
        "grid": {"type": "object", "additionalProperties": False,
                 "properties": {"n": {"enum": [2, 3]}, "N": {"type": "integer", "minimum": 4},
                                "L": _POS},
                 "required": ["n", "N"]},
        "space": {"type": "object", "additionalProperties": False,
                  "properties": {"s": _NUM, "p": _POS, "q": _POS, "r": _R},
                  "required": ["s", "p", "q"]},
        "scheme": {"type": "object", "additionalProperties": False,
                   "properties": {"T": _POS, "dt": _POS, "m_max": {"type": "integer", "minimum": 1},
                                  "eps": _POS, "smallness_c": _POS,
                                  "smallness_c_prime": {"anyOf": [_POS, {"type": "null"}]},
                                  "cauchy_tol": _POS, "mode": {"enum": ["local", "global"]},
                                  "u_init": {"enum": ["zero", "heat", None]},
                                  "inner_tol": _POS, "inner_max": {"type": "integer", "minimum": 1},
                                  "a_max": _POS, "cfl": _POS,
                                  "center_stride": {"type": "integer", "minimum": 1},
                                  "diagnostics": {"type": "boolean"}}},
        "data": {"type": "object", "additionalProperties": False,
                 "properties": {"a0": _FIELD_SPEC, "u0": _FIELD_SPEC}},
        "io": {"type": "object", "additionalProperties": False,
               "properties": {"a0": {"type": "string"}, "u0": {"type": "string"},
                              "out": {"type": "string"}}},
    },
    "required": ["grid", "space"],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _dump(obj):
    return json.dumps(obj, sort_keys=True, indent=1, default=_default) + "\n"


def _default(x):
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _write_csv(path, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())


def _r_value(r):
    return math.inf if r in ("inf", None) else float(r)


def versions():
    import finufft
    import scipy
    return {"bmlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "finufft": getattr(finufft, "__version__", "unknown"), "python": platform.python_version()}


# info -------------------------------------------------------------------------------

def cmd_info(args):
    from . import inequality_lab as lab
    from .iteration_scheme import DEFAULT_SMALLNESS_C, DEFAULT_SMALLNESS_C_PRIME
    from .stokes_solver import DEFAULT_CFL
    info = {
        "version": __version__,
        "defaults": {"smallness_c": DEFAULT_SMALLNESS_C, "smallness_c_prime": DEFAULT_SMALLNESS_C_PRIME,
                     "cfl": DEFAULT_CFL, "inner_tol": 1e-10, "a_max": 0.95, "cauchy_tol": 1e-8,
                     "stability_factors": {"algebraic": lab.ALGEBRAIC_FACTOR, "heat": lab.HEAT_FACTOR,
                                           "solver": lab.SOLVER_FACTOR}},
        "windows": {
            "local": "n >= 2, 1 < q <= p, n/p >= 1, n/p - 1 < s <= n/p; "
                     "||a0||_(N^(n/p)_(p,q,inf) cap L^inf) <= c",
            "global": "n >= 2, 1 < q <= p, n/p > 1, s = n/p - 1; "
                      "||a0||_(N^(n/p)_(p,q,inf) cap L^inf) <= c and ||u0||_(N^s_(p,q,1)) <= c'",
        },
    }
    sys.stdout.write(_dump(info))
    return EXIT_OK


# norms ------------------------------------------------------------------------------

def cmd_norms(args):
    u = read_field(args.input)
    sp = SpaceParams(u.grid.n, args.s, args.p, args.q, _r_value(args.r), args.mode)
    cfg = MorreyConfig.default(u.grid, args.center_stride)
    rec = besov_morrey_report(u, sp, cfg)
    rec["file"] = str(args.input)
    rec["grid"] = u.grid.to_dict()
    rec["morrey_norm"] = morrey_norm(u, args.p, args.q, cfg)
    rec["linf_norm"] = linf_norm(u)
    sys.stdout.write(_dump(rec))
    return EXIT_OK


# generate / heat --------------------------------------------------------------------

def make_field(grid, kind, seed, params):
    if kind not in KINDS:
        raise ConfigError(f"unknown field kind {kind!r}; expected one of {', '.join(KINDS)}")
    fam = TestFieldFamily(kind, 1, seed, grid, dict(params))
    fields = fam.fields()
    if not fields:
        raise ConfigError(f"family {kind!r} produced no field")
    return fields[0]


def cmd_generate(args):
    grid = GridSpec(args.dim, args.grid, args.L)
    params = json.loads(args.params) if args.params else {}
    if not isinstance(params, dict):
        raise ConfigError("--params must be a JSON object")
    if args.j is not None:
        params["j"] = args.j
    if args.components is not None:
        params["components"] = args.components
    if args.div_free:
        params["div_free"] = True
        params.setdefault("components", grid.n)
    u = make_field(grid, args.kind, args.seed, params)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field(out, u, {"kind": args.kind, "seed": args.seed, "params": params})
    return EXIT_OK


def cmd_heat(args):
    u = read_field(args.input)
    if args.t < 0:
        raise ConfigError("--t must be nonnegative")
    v = to_physical(heat_evolve(to_spectral(u), args.t))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_field(out, v, {"heat_time": args.t})
    return EXIT_OK


# verify -----------------------------------------------------------------------------

VERIFY_IDS = ("bernstein_ii", "bernstein_iii", "commutator_uv", "commutator_pi", "heat_localized",
              "heat_chemin", "transport", "stokes", "linearized_ns", "product_1", "product_2",
              "product_3", "holder", "linf_embedding", "pressure")


def _family(kind, grid, seed, count, comps=1, div_free=False, shifts=(0, 1, 2)):
    params = {"components": comps, "div_free": div_free}
    if kind == "dilation_family":
        params.update({"j0": 0, "shifts": list(shifts)})
    elif kind == "single_shell":
        params["j"] = 1
    elif kind == "random_bandlimited":
        params["sigma"] = 4.0
    return TestFieldFamily(kind, count, seed, grid, params).labeled()


def run_verify(ident, grid, seed, family_kind="dilation_family", count=3):
    """Run one named check with default families; returns an InequalityReport."""
    from . import inequality_lab as lab
    from .families import TestFieldFamily as TF
    from .spectral_core import FieldSeries
    from .stokes_solver import pressure_from_forcing
    n = grid.n
    rng_seed = seed

    def vel(i, amp=1.0, sigma=3.0):
        return TF("random_bandlimited", 1, rng_seed * 1000 + i, grid,
                  {"components": n, "div_free": True, "sigma": sigma, "amplitude": amp}).fields()[0]

    def scal(i, amp=1.0, sigma=4.0):
        return TF("random_bandlimited", 1, rng_seed * 1000 + i, grid,
                  {"sigma": sigma, "amplitude": amp}).fields()[0]

    part = get_partition(grid)
    shells = list(range(max(part.j_min, 0), part.j_resolved_max + 1))
    if ident in ("bernstein_ii", "bernstein_iii"):
        fams = [TF("single_shell", count, seed * 100 + j + 1, grid, {"j": j}) for j in shells]
        return lab.verify_bernstein(fams, k=1, p=4.0, q=2.0, part=ident.split("_")[1])
    if ident == "heat_localized":
        fams = [TF("single_shell", count, seed * 100 + j + 1, grid, {"j": j})
                for j in range(part.j_min, part.j_resolved_max + 1)]
        return lab.verify_heat_localized(fams)
    fam = _family(family_kind, grid, seed, count)
    sp = SpaceParams(n, 0.5, 4.0, 2.0, 1.0)
    if ident == "commutator_uv":
        return lab.verify_commutator_uv([(g, u, vel(i)) for i, (g, u) in enumerate(fam)],
                                        sp.with_(s=1.0))
    if ident == "commutator_pi":
        # groups are dilation shifts of the forcing behind grad pi; horizons alternate
        vfam = _family(family_kind, grid, seed, count, comps=n)
        cases = []
        for i, (g, f) in enumerate(vfam):
            T = (0.1, 0.2)[i % 2]
            times = np.linspace(0.0, T, 9)
            a = scal(100 + i)
            gp = to_physical(pressure_from_forcing(f))
            av = np.stack([a.values * (1 + t / T) for t in times])
            gv = np.stack([gp.values * math.cos(t / T) for t in times])
            cases.append((g, FieldSeries(grid, times, av), FieldSeries(grid, times, gv)))
        return lab.verify_commutator_pi(cases, sp.with_(s=0.25))
    if ident == "heat_chemin":
        return lab.verify_heat_chemin(fam, sp, beta=1.0, c=0.5, T=0.25)
    if ident in ("product_1", "product_2", "product_3"):
        st = int(ident[-1])
        vfam = _family(family_kind, grid, seed, count, comps=n, div_free=True)
        triples = [(g, vel(300 + i) if st == 3 else scal(300 + i, 0.3), u)
                   for i, (g, u) in enumerate(vfam)]
        form = "gradient_part" if st == 3 else "literal"
        return lab.verify_product_estimates(triples, sp, st, convection_form=form)
    if ident == "holder":
        return lab.verify_holder([(g, scal(400 + i), u) for i, (g, u) in enumerate(fam)], 4.0, 2.0)
    if ident == "linf_embedding":
        return lab.verify_linf_embedding(fam)
    if ident == "pressure":
        return lab.verify_pressure([(g, scal_vec(grid, seed, 500 + i)) for i, (g, _) in enumerate(fam)], sp)
    sps = SpaceParams(n, 1.0, 2.0, 1.5, 1.0)
    if ident == "transport":
        scs = [lab.TransportScenario(scal(600 + i), vel(700 + i, 0.5, 2.0), 0.025, 0.25, group=i)
               for i in range(count)]
        return lab.verify_transport_stokes_linns(scs, sps)
    times = np.linspace(0.0, 0.25, 26)
    if ident == "stokes":
        scs = []
        for i in range(count):
            f = scal_vec(grid, seed, 800 + i)
            fv = np.stack([f.values * math.sin(5 * t) for t in times])
            scs.append(lab.StokesScenario(vel(900 + i), FieldSeries(grid, times, fv), 0.01, 0.25, group=i))
        return lab.verify_transport_stokes_linns(scs, sps.with_(s=0.5))
    if ident == "linearized_ns":
        scs = [lab.LinearizedScenario(vel(1000 + i), FieldSeries.constant(scal(1100 + i, 0.05), times),
                                      FieldSeries.constant(vel(1200 + i, 0.3, 2.0), times), 0.01, 0.25, group=i)
               for i in range(count)]
        return lab.verify_transport_stokes_linns(scs, sps.with_(s=0.5))
    raise ConfigError(f"unknown inequality {ident!r}; expected one of {', '.join(VERIFY_IDS)} or all")


def scal_vec(grid, seed, i):
    """A generic (not divergence-free) vector field."""
    return TestFieldFamily("random_bandlimited", 1, seed * 1000 + i, grid,
                           {"components": grid.n, "sigma": 4.0}).fields()[0]


def cmd_verify(args):
    grid = GridSpec(args.dim, args.grid, args.L)
    ids = list(VERIFY_IDS) if args.inequality == "all" else [args.inequality]
    for ident in ids:
        if ident not in VERIFY_IDS:
            raise ConfigError(f"unknown inequality {ident!r}; expected one of {', '.join(VERIFY_IDS)} or all")
    if args.family not in KINDS or args.family == "zero":
        raise ConfigError(f"--family must be one of {', '.join(k for k in KINDS if k != 'zero')}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for ident in ids:
        rep = run_verify(ident, grid, args.seed, args.family, args.count)
        (out / f"{ident}.json").write_text(_dump(rep.to_dict()))
        _write_csv(out / f"{ident}.csv", rep.csv_rows())
        summary[ident] = {"pass": bool(rep.passed), "fitted_constant": rep.fitted_constant,
                          "stability": rep.stability}
        print(f"{ident}: {'PASS' if rep.passed else 'FAIL'} C={rep.fitted_constant:.4g} "
              f"stability={rep.stability:.4g}")
    (out / "manifest.json").write_text(_dump({
        "command": "verify", "inequalities": ids, "grid": grid.to_dict(), "seed": args.seed,
        "family": args.family, "count": args.count, "versions": versions(),
        "truncation_range": get_partition(grid).truncation(), "summary": summary}))
    return EXIT_OK


# solve ------------------------------------------------------------------------------

def load_config(path):
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return cfg


def build_scheme(cfg):
    from .iteration_scheme import SchemeConfig
    g = cfg["grid"]
    grid = GridSpec(g["n"], g["N"], g.get("L", 2 * math.pi))
    s = cfg["space"]
    sp = SpaceParams(grid.n, s["s"], s["p"], s["q"], _r_value(s.get("r", 1.0)))
    return grid, SchemeConfig(sp, **cfg.get("scheme", {}))


_DEFAULT_DATA = {
    "a0": {"kind": "random_bandlimited", "params": {"kmax": 1.5, "amplitude": 0.01}},
    "u0": {"kind": "random_bandlimited", "params": {"kmax": 1.5, "amplitude": 0.2, "div_free": True}},
}


def _initial_data(cfg, grid, base):
    seed = cfg.get("seed", 0)
    io_cfg = cfg.get("io", {})
    data = cfg.get("data", {})
    out = {}
    for name, comps, offset in (("a0", 1, 1), ("u0", grid.n, 2)):
        if name in io_cfg:
            path = Path(io_cfg[name])
            path = path if path.is_absolute() else base / path
            f = read_field(path)
            if f.grid != grid:
                raise ConfigError(f"{name} file grid {f.grid.to_dict()} does not match the config grid")
            out[name] = f
            continue
        spec = data.get(name, _DEFAULT_DATA[name])
        params = dict(spec.get("params", {}))
        params.setdefault("components", comps)
        out[name] = make_field(grid, spec["kind"], spec.get("seed", 2 * seed + offset), params)
    return out["a0"], out["u0"]


def cmd_solve(args):
    from .bmf import write_field as wf
    from .iteration_scheme import run_scheme
    cfg = load_config(args.config)
    grid, scfg = build_scheme(cfg)
    a0, u0 = _initial_data(cfg, grid, Path(args.config).resolve().parent)
    out = Path(args.out or cfg.get("io", {}).get("out", "run"))
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"command": "solve", "config": cfg, "scheme": scfg.to_dict(), "grid": grid.to_dict(),
                "versions": versions(), "truncation_range": get_partition(grid).truncation(),
                "morrey": MorreyConfig.default(grid, scfg.center_stride).describe(grid)}
    (out / "manifest.json").write_text(_dump(manifest))
    wf(out / "a0.bmf", a0)
    wf(out / "u0.bmf", u0)
    rep = run_scheme(a0, u0, scfg)
    (out / "report.json").write_text(_dump(rep.to_dict()))
    _write_csv(out / "norms.csv", rep.csv_rows())
    st = rep.final_state
    T = len(st.u_series) - 1
    wf(out / "a_final.bmf", PhysicalField(grid, st.a_series.values[T]), {"t": float(st.a_series.times[T])})
    wf(out / "u_final.bmf", PhysicalField(grid, st.u_series.values[T]), {"t": float(st.u_series.times[T])})
    wf(out / "gradpi_final.bmf", PhysicalField(grid, st.grad_pi_series.values[T]),
       {"t": float(st.u_series.times[T])})
    print(f"{rep.stop_reason}: m={rep.m_final} delta={rep.delta_norms[-1]:.3e} "
          f"rho={rep.rho if rep.rho is None else round(rep.rho, 6)}")
    return EXIT_OK


# entry point ------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="bmlab", description="Besov-Morrey numerical laboratory")
    p.add_argument("--threads", type=int, default=None, help="FFT worker count (default: $BML_THREADS or 1)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("info", help="version, default thresholds and admitted parameter windows")

    q = sub.add_parser("norms", help="Besov-Morrey norm record of a BMF1 field")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--p", type=float, required=True)
    q.add_argument("--q", type=float, required=True)
    q.add_argument("--s", type=float, required=True)
    q.add_argument("--r", default="1")
    q.add_argument("--mode", choices=["homogeneous", "inhomogeneous"], default="homogeneous")
    q.add_argument("--center-stride", type=int, default=1)

    q = sub.add_parser("generate", help="write a reproducible test field")
    q.add_argument("--kind", required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--grid", type=int, default=32)
    q.add_argument("--dim", type=int, default=3)
    q.add_argument("--L", type=float, default=2 * math.pi)
    q.add_argument("--j", type=int, default=None)
    q.add_argument("--components", type=int, default=None)
    q.add_argument("--div-free", action="store_true")
    q.add_argument("--params", default=None, help="extra family parameters as a JSON object")
    q.add_argument("--out", required=True)

    q = sub.add_parser("heat", help="apply the heat semigroup to a BMF1 field")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--t", type=float, required=True)
    q.add_argument("--out", required=True)

    q = sub.add_parser("verify", help="run inequality checks")
    q.add_argument("--inequality", default="all")
    q.add_argument("--grid", type=int, default=64)
    q.add_argument("--dim", type=int, default=2)
    q.add_argument("--L", type=float, default=2 * math.pi)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--family", default="dilation_family")
    q.add_argument("--count", type=int, default=3)
    q.add_argument("--out", default="verify")

    q = sub.add_parser("solve", help="run the iteration scheme from a JSON config")
    q.add_argument("--config", required=True)
    q.add_argument("--out", default=None)
    return p


_COMMANDS = {"info": cmd_info, "norms": cmd_norms, "generate": cmd_generate, "heat": cmd_heat,
             "verify": cmd_verify, "solve": cmd_solve}


def _one_line(exc):
    return " ".join(str(exc).split())


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        threads = args.threads if args.threads is not None else os.environ.get("BML_THREADS")
        set_threads(int(threads) if threads else None)
        return _COMMANDS[args.command](args)
    except (SmallnessGateFailed, ContractionFailure) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        verdict = getattr(exc, "verdict", None)
        if verdict is not None:
            print(_dump({"gate": verdict.to_dict()}), end="")
        return EXIT_GATE
    except (ConfigError, InvalidParameter, BMLError, FileNotFoundError, ValueError) as exc:
        print(f"error: {_one_line(exc)}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
