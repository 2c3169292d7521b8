import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from siqr.errors import EvaluationError, SchemaError
from siqr.hypotheses import check_hypotheses
from siqr.model import (MassAction, ParameterSet, PsiG, QuarantineAdjusted, Standard, State,
                        incidence_eval, incidence_from_dict, linearized_incidence, rhs)
from siqr.timefn import Affine, Constant, Power, Quotient, Sinusoid, Sum, Var

from conftest import ENDEMIC, EQUILIBRIUM


def test_rhs_disease_free_equilibrium():
    p = ParameterSet.constant(Lambda=1.0, d=0.1, gamma=0.2, sigma=0.1)
    out = rhs(p, MassAction(Constant(3.0)), State(10.0, 0.0, 0.0, 0.0))
    assert np.array_equal(out, np.zeros(4))


def test_rhs_hand_value(endemic):
    p, inc = endemic
    assert np.allclose(rhs(p, inc, State(1.0, 1.0, 0.0, 0.0)), [0.4, 0.1, 0.1, 0.2], atol=1e-15)


def test_rhs_endemic_equilibrium(endemic):
    p, inc = endemic
    # independent solve of the steady state
    beta, lam, d, g, s, e = 0.5, 1.0, 0.1, 0.2, 0.1, 0.1
    S = (g + s + d) / beta
    I = lam / (g + s + d) - d / beta
    Q = s * I / (d + e)
    R = (g * I + e * Q) / d
    assert np.allclose((S, I, Q, R), EQUILIBRIUM, atol=1e-12)
    assert np.max(np.abs(rhs(p, inc, State(*EQUILIBRIUM)))) < 1e-12


def test_incidence_examples():
    assert incidence_eval(MassAction(Constant(2.0)), 0.0, State(3.0, 0.5, 0.0, 0.0)) == 3.0
    assert incidence_eval(Standard(Constant(1.0)), 0.0, State(0.0, 0.0, 0.0, 0.0)) == 0.0
    assert incidence_eval(QuarantineAdjusted(Constant(1.0)), 0.0,
                          State(2.0, 1.0, 1.0, 100.0)) == 0.5
    assert incidence_eval(QuarantineAdjusted(Constant(1.0)), 0.0,
                          State(0.0, 0.0, 0.0, 5.0)) == 0.0


def test_linearized_examples():
    assert linearized_incidence(MassAction(Constant(0.5)), 0.0, 10.0) == (5.0, 5.0)
    assert linearized_incidence(Standard(Constant(0.3)), 0.0, 10.0) == pytest.approx((0.3, 0.3))
    g = Quotient(Constant(1.0), Sum((Constant(1.0), Var("I"))))
    declared = PsiG(psi=Var("S"), g=g, g_liminf0=1.0, g_limsup0=1.0)
    assert linearized_incidence(declared, 0.0, 2.0) == (2.0, 2.0)
    # undeclared limits fall back to probing g near 0+
    probed = PsiG(psi=Var("S"), g=g)
    assert linearized_incidence(probed, 0.0, 2.0) == pytest.approx((2.0, 2.0), rel=1e-7)


def test_psi_g_misconfigured_names_factor():
    pole = Quotient(Constant(1.0), Sum((Var("I"), Constant(-1.0))))
    inc = PsiG(psi=Var("S"), g=pole, g_liminf0=1.0, g_limsup0=1.0)
    p = ParameterSet.constant(**ENDEMIC)
    with pytest.raises(EvaluationError, match="'g'"):
        rhs(p, inc, State(1.0, 1.0, 0.0, 0.0))


def test_hypothesis_examples():
    rep = check_hypotheses(MassAction(Constant(0.5)), theta=0.1, K=10.0)
    assert rep.passed
    assert rep.K_theta == pytest.approx(0.5, rel=1e-9)
    assert rep.N == pytest.approx(5.0, rel=1e-9)

    bad = PsiG(psi=Var("S"), g=Power(Var("I"), -0.5), g_liminf0=math.inf, g_limsup0=math.inf)
    rep = check_hypotheses(bad, theta=0.1, K=10.0)
    assert rep.verdicts["H4"] == "FAIL"
    assert rep.witnesses["H4"], "a failure must carry a witness"

    ok = PsiG(psi=Var("S"), g=Constant(0.7))
    assert check_hypotheses(ok, theta=0.1, K=10.0).passed


def test_hypotheses_hold_for_builtin_kinds():
    beta = Affine(0.2, 0.4, Sinusoid(1.0, 0.5, 0.0))
    for inc in (MassAction(beta), Standard(beta), QuarantineAdjusted(beta)):
        rep = check_hypotheses(inc, theta=0.1, K=10.0)
        assert rep.passed, rep.failures()


def test_parameter_validation():
    assert ParameterSet.constant(**ENDEMIC).problems() == []
    bad = ParameterSet.constant(**dict(ENDEMIC, d=0.0))
    assert any("d" in msg for msg in bad.problems())
    neg = ParameterSet(**dict(ParameterSet.constant(**ENDEMIC).functions(),
                              gamma=Sinusoid(1.0, 0.3, 0.0)))
    msgs = neg.problems()
    assert any("gamma" in msg and "t=" in msg for msg in msgs), msgs


def test_state_invariants():
    with pytest.raises(ValueError):
        State(-1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        State(math.nan, 0.0, 0.0, 0.0)


def test_incidence_schema():
    inc = incidence_from_dict({"kind": "standard", "beta": {"kind": "const", "value": 0.3}})
    assert isinstance(inc, Standard)
    with pytest.raises(SchemaError, match="incidence.beta"):
        incidence_from_dict({"kind": "mass_action"})


state_val = st.floats(0.0, 50.0)
betas = st.floats(0.01, 5.0)


@settings(max_examples=100)
@given(betas, state_val, state_val, state_val, state_val, st.floats(0.1, 10.0))
def test_standard_kinds_homogeneous(beta, S, I, Q, R, k):
    for inc in (Standard(Constant(beta)), QuarantineAdjusted(Constant(beta))):
        base = inc(0.0, S, I, Q, R)
        scaled = inc(0.0, k * S, k * I, k * Q, k * R)
        assert scaled == pytest.approx(k * base, rel=1e-12, abs=1e-300)


@settings(max_examples=100)
@given(betas, state_val, state_val, state_val, state_val)
def test_incidence_nonnegative_and_zero_without_susceptibles(beta, S, I, Q, R):
    for inc in (MassAction(Constant(beta)), Standard(Constant(beta)),
                QuarantineAdjusted(Constant(beta))):
        assert inc(0.0, S, I, Q, R) >= 0.0
        assert inc(0.0, 0.0, I, Q, R) == 0.0
        assert inc(0.0, S, 0.0, Q, R) == 0.0


@settings(max_examples=50)
@given(betas, st.floats(0.01, 100.0))
def test_linearized_lower_le_upper(beta, x):
    for inc in (MassAction(Constant(beta)), Standard(Constant(beta)),
                QuarantineAdjusted(Constant(beta))):
        lo, hi = linearized_incidence(inc, 0.0, x)
        assert lo == hi


@settings(max_examples=100)
@given(state_val, state_val, state_val, state_val)
def test_rhs_total_population_balance(S, I, Q, R):
    p = ParameterSet.constant(**dict(ENDEMIC, alpha1=0.05, alpha2=0.03))
    out = rhs(p, MassAction(Constant(0.5)), State(S, I, Q, R))
    # N' = Lambda - d N - alpha1 I - alpha2 Q
    expect = 1.0 - 0.1 * (S + I + Q + R) - 0.05 * I - 0.03 * Q
    assert float(np.sum(out)) == pytest.approx(expect, rel=1e-9, abs=1e-9)
