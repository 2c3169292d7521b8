import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from siqr import _backend
from siqr.errors import IntegrationError
from siqr.model import MassAction, ParameterSet, QuarantineAdjusted, Standard, State
from siqr.odeint import (IntegratorConfig, Trajectory, convergence_probe, integrate,
                         linear_decay_model)
from siqr.timefn import Affine, Constant, Sinusoid

from conftest import ENDEMIC

BACKENDS = ["python"] + (["compiled"] if _backend.compiled is not None else [])


def test_constant_equilibrium_trajectory():
    p = ParameterSet.constant(Lambda=0.5, d=0.1, gamma=0.2, sigma=0.1)
    traj = integrate(p, MassAction(Constant(1.0)), State(5.0, 0.0, 0.0, 0.0),
                     IntegratorConfig(t_end=50.0))
    assert np.allclose(traj.S, 5.0, rtol=0, atol=1e-12)
    assert np.all(traj.I == 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_linear_decay(backend):
    p, inc = linear_decay_model(1.0)
    traj = integrate(p, inc, State(1.0, 0.0, 0.0, 0.0), IntegratorConfig(t_end=1.0), backend)
    assert traj.t[-1] == 1.0
    assert abs(traj.S[-1] - math.exp(-1.0)) < 1e-8


def test_sample_times_exact():
    p, inc = linear_decay_model(1.0)
    traj = integrate(p, inc, State(1.0, 0.0, 0.0, 0.0),
                     IntegratorConfig(t_end=2.0, sample_stride=0.25))
    assert np.array_equal(traj.t, np.arange(9) * 0.25)
    assert np.all(np.diff(traj.t) > 0)


def test_rk4_fixed_step():
    p, inc = linear_decay_model(1.0)
    traj = integrate(p, inc, State(1.0, 0.0, 0.0, 0.0),
                     IntegratorConfig(method="rk4", t_end=1.0, h=0.01))
    assert abs(traj.S[-1] - math.exp(-1.0)) < 1e-9


def test_probe_endemic_order(endemic, endemic_start):
    p, inc = endemic
    res = convergence_probe(p, inc, endemic_start, h=0.1, t_end=10.0)
    assert res.status == "ok"
    assert 3.5 <= res.order <= 4.5


def test_probe_linear_decay_order():
    p, inc = linear_decay_model(1.0)
    res = convergence_probe(p, inc, State(1.0, 0.0, 0.0, 0.0), h=0.1, t_end=1.0,
                            exact=lambda t: np.array([math.exp(-t), 0.0, 0.0, 0.0]))
    assert res.reference == "exact"
    assert 3.8 <= res.order <= 4.2


def test_probe_degenerate():
    p = ParameterSet.constant(Lambda=1.0, d=0.1, gamma=0.2, sigma=0.1)
    res = convergence_probe(p, MassAction(Constant(0.5)), State(10.0, 0.0, 0.0, 0.0),
                            h=0.1, t_end=10.0)
    assert res.status == "degenerate"
    assert res.order is None


def test_config_validation():
    assert IntegratorConfig().problems() == []
    for bad in (dict(h=-1.0), dict(rtol=0.0), dict(atol=-1.0), dict(sample_stride=0.0),
                dict(method="euler")):
        assert IntegratorConfig(**bad).problems(), bad
    cfg = IntegratorConfig(method="rk4", t_end=30.0, h=0.05)
    assert IntegratorConfig.from_dict(cfg.to_dict()) == cfg


def test_step_underflow_reports_time():
    p = ParameterSet.constant(**ENDEMIC)
    cfg = IntegratorConfig(t_end=10.0, h_min=1e-3)
    with pytest.raises(IntegrationError) as info:
        integrate(p, MassAction(Constant(1e13)), State(1.0, 1.0, 0.0, 0.0), cfg)
    assert info.value.t == pytest.approx(0.0, abs=1e-2)
    assert "t=" in str(info.value)


def test_csv_round_trip(endemic, endemic_start):
    p, inc = endemic
    traj = integrate(p, inc, endemic_start, IntegratorConfig(t_end=20.0))
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,S,I,Q,R,N"
    back = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.array_equal(back[:, 0], traj.t)
    assert np.array_equal(back[:, 1:5], traj.y)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
@pytest.mark.parametrize("method", ["rk45", "rk4"])
def test_backends_bit_identical(method):
    p = ParameterSet.constant(**dict(ENDEMIC, alpha1=0.02, alpha2=0.01))
    beta = Affine(0.25, 0.5, Sinusoid(1.0, 0.7, 0.3))
    for inc in (MassAction(beta), Standard(beta), QuarantineAdjusted(beta)):
        cfg = IntegratorConfig(method=method, t_end=100.0, h=0.02)
        a = integrate(p, inc, State(1.0, 0.5, 0.1, 0.0), cfg, "python")
        b = integrate(p, inc, State(1.0, 0.5, 0.1, 0.0), cfg, "compiled")
        assert np.array_equal(a.t, b.t)
        assert np.array_equal(a.y, b.y)
        assert a.stats["steps"] == b.stats["steps"]


def test_deterministic(endemic, endemic_start):
    p, inc = endemic
    cfg = IntegratorConfig(t_end=50.0)
    a = integrate(p, inc, endemic_start, cfg)
    b = integrate(p, inc, endemic_start, cfg)
    assert np.array_equal(a.y, b.y)


coef = st.floats(0.01, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["mass_action", "standard", "quarantine_adjusted"]),
       st.floats(0.05, 3.0), st.floats(0.0, 0.9), st.floats(0.05, 2.0),
       coef, coef, coef, st.floats(0.0, 5.0), st.floats(1e-6, 5.0))
def test_positivity_and_mass_balance(kind, beta0, rel, omega, gamma, sigma, eps, S0, I0):
    p = ParameterSet.constant(Lambda=0.5, d=0.05, gamma=gamma, sigma=sigma, eps=eps)
    beta = Affine(beta0 * rel, beta0, Sinusoid(1.0, omega, 0.0))
    inc = {"mass_action": MassAction, "standard": Standard,
           "quarantine_adjusted": QuarantineAdjusted}[kind](beta)
    traj = integrate(p, inc, State(S0, I0, 0.0, 0.0), IntegratorConfig(t_end=100.0))
    assert np.all(traj.y >= 0.0)
    # no disease deaths, so N' = Lambda - d N exactly
    N0 = S0 + I0
    expect = 10.0 + (N0 - 10.0) * np.exp(-0.05 * traj.t)
    assert np.allclose(traj.N, expect, rtol=1e-6, atol=1e-8)


def test_trajectory_helpers(endemic, endemic_start):
    p, inc = endemic
    traj = integrate(p, inc, endemic_start, IntegratorConfig(t_end=10.0))
    assert isinstance(traj, Trajectory)
    assert traj.final.t == 10.0
    assert traj.trailing(0.5).sum() == np.sum(traj.t >= 5.0)
