import math

import numpy as np
import pytest

from conftest import random_field

from bmlab.errors import InvalidParameter, SmallnessGateFailed
from bmlab.iteration_scheme import (
    SchemeConfig,
    check_smallness,
    geometric_fit,
    init_iterates,
    refinement_decay,
    run_scheme,
)
from bmlab.morrey_norms import SpaceParams
from bmlab.spectral_core import GridSpec, PhysicalField

SP = SpaceParams(2, 1.0, 2.0, 1.5, 1.0)


@pytest.fixture
def grid16():
    return GridSpec(2, 16)


def _small_cfg(**kw):
    base = dict(sp=SP, T=0.05, dt=5e-3, m_max=4)
    base.update(kw)
    return SchemeConfig(**base)


def test_config_window():
    with pytest.raises(InvalidParameter):
        SchemeConfig(SpaceParams(2, 1.0, 2.0, 1.0))
    with pytest.raises(InvalidParameter):
        SchemeConfig(SpaceParams(2, 1.5, 2.0, 1.5))
    with pytest.raises(InvalidParameter):
        SchemeConfig(SP, T=0.1, dt=0.03)
    with pytest.raises(InvalidParameter):
        SchemeConfig(SP, mode="global")
    crit = SpaceParams(2, 2 / 1.5 - 1, 1.5, 1.2)
    cfg = SchemeConfig(crit, mode="global", smallness_c_prime=0.1)
    assert cfg.initial_velocity == "zero"
    assert cfg.theta == pytest.approx(0.0, abs=1e-12)
    assert cfg.lam == pytest.approx(2 * (2 / 1.2 - 2 / 1.5))


def test_zero_data_stops_exactly(grid16):
    zero_a = PhysicalField(grid16, np.zeros(grid16.shape))
    zero_u = PhysicalField(grid16, np.zeros((2,) + grid16.shape))
    rep = run_scheme(zero_a, zero_u, _small_cfg())
    assert rep.stop_reason == "exact" and rep.converged
    assert rep.m_final == 1
    assert all(f == 0.0 for f in rep.F_history)
    assert rep.max_principle_ratio == 0.0


def _scaled_a0(grid, rng, target, cfg):
    a = random_field(grid, rng, sigma=1.5)
    unit = check_smallness(a, PhysicalField(grid, np.zeros((2,) + grid.shape)), cfg).a0_norm
    return PhysicalField(grid, a.values * target / unit)


def test_smallness_gate_threshold(grid16, rng):
    cfg = _small_cfg()
    u0 = PhysicalField(grid16, np.zeros((2,) + grid16.shape))
    c = cfg.smallness_c
    ok = _scaled_a0(grid16, rng, 0.99 * c, cfg)
    assert check_smallness(ok, u0, cfg).passed
    bad = PhysicalField(grid16, ok.values * 2 / 0.99)
    v = check_smallness(bad, u0, cfg)
    assert not v.passed and v.margin < 0
    with pytest.raises(SmallnessGateFailed) as info:
        init_iterates(bad, u0, cfg)
    assert info.value.verdict.a0_norm == pytest.approx(2 * c)


def test_small_run_contracts(grid16, rng):
    cfg = _small_cfg(m_max=5)
    a0 = _scaled_a0(grid16, rng, 0.05, cfg)
    u0 = PhysicalField(grid16, 0.2 * random_field(grid16, rng, comps=2, div_free=True, sigma=1.5).values)
    rep = run_scheme(a0, u0, cfg)
    d = rep.delta_norms
    # early sweeps also pick up new data frequencies from S_{m+1}; the tail contracts
    assert all(d[i + 1] < 0.1 * d[i] for i in range(1, len(d) - 1))
    assert rep.gamma_ok
    # low-pass truncation of the data can overshoot sup|a0| slightly
    assert rep.max_principle_ratio <= 1.02
    rows = rep.csv_rows()
    assert rows[0][0] == "m" and len(rows) == rep.m_final + 2
    assert isinstance(rep.to_dict()["config"], dict)


def test_geometric_fit_exact():
    rho, r2, npts = geometric_fit([0.5 ** m for m in range(1, 8)])
    assert rho == pytest.approx(0.5) and r2 == pytest.approx(1.0) and npts == 7
    assert geometric_fit([1.0, 0.0])[0] is None


def test_refinement_decay_vanishes_for_bandlimited(grid16, rng):
    cfg = _small_cfg()
    a0 = random_field(grid16, rng, sigma=1.0)
    vals, C = refinement_decay(a0, cfg, [0, 1, 2, 3, 4])
    assert vals[-1] < 1e-12 * max(vals[0], 1e-300) or vals[-1] == 0.0
    assert C >= vals[0]
    assert not math.isnan(C)
