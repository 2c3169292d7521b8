import math

import pytest

from siqr.model import MassAction, ParameterSet, State
from siqr.timefn import Constant

ENDEMIC = dict(Lambda=1.0, d=0.1, gamma=0.2, sigma=0.1, alpha1=0.0, alpha2=0.0, eps=0.1)
EQUILIBRIUM = (0.8, 2.3, 1.15, 5.75)


def const(v):
    return {"kind": "const", "value": float(v)}


def params_doc(**kw):
    vals = dict(ENDEMIC)
    vals.update(kw)
    return {k: (v if isinstance(v, dict) else const(v)) for k, v in vals.items()}


def scenario_doc(name="endemic", beta=0.5, kind="mass_action", t_end=200.0, lambdas=(1.0,),
                 initial=(1.0, 1.0, 0.0, 0.0), scenario_kind="autonomous", **extra):
    doc = {
        "name": name,
        "params": params_doc(),
        "incidence": {"kind": kind, "beta": beta if isinstance(beta, dict) else const(beta)},
        "initial": dict(zip("SIQR", map(float, initial))),
        "integrator": {"method": "rk45", "t_end": float(t_end), "sample_stride": 1.0},
        "thresholds": {"lambdas": list(lambdas), "burn_in": 200.0},
        "kind": scenario_kind,
    }
    doc.update(extra)
    return doc


def periodic_beta(mean=0.4, rel=0.5, T=10.0):
    return {"kind": "affine", "scale": mean * rel, "offset": mean,
            "arg": {"kind": "sin", "amp": 1.0, "omega": 2 * math.pi / T}}


@pytest.fixture
def endemic():
    return ParameterSet.constant(**ENDEMIC), MassAction(Constant(0.5))


@pytest.fixture
def endemic_start():
    return State(1.0, 1.0, 0.0, 0.0)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, title in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {title}")
