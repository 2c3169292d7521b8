"""Scenario documents, runs with cross-validation, the seasonal golden suite and sweeps."""
from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Sequence

import numpy as np

from . import timefn as tf
from .errors import PathError, PreconditionError, SchemaError, ValidationError
from .hypotheses import check_hypotheses
from .model import (MassAction, ParameterSet, Standard, State, incidence_from_dict,
                    time_functions)
from .odeint import IntegratorConfig, Trajectory, integrate
from .thresholds import (DEFAULT_BAND, EXTINCT, INCONCLUSIVE, PERMANENT, ThresholdReport,
                         _time_dependent, autonomous_thresholds, check_periodic, classify,
                         compute_thresholds, periodic_thresholds, windowed_special_thresholds)
from .timefn import WindowStatConfig

KINDS = ("general", "autonomous", "asymptotically_autonomous", "periodic")
PERSISTENT, TRAJ_EXTINCT, UNDETERMINED = "Persistent", "Extinct", "Undetermined"


@dataclass
class Scenario:
    name: str
    params: ParameterSet
    incidence: Any
    initial: State
    integrator: IntegratorConfig
    lambdas: tuple[float, ...] = (1.0,)
    burn_in: float = 1000.0
    scan_length: float | None = None
    t_step: float | None = None
    quadrature_step: float | None = None
    band: float = DEFAULT_BAND
    kind: str = "general"
    period: float | None = None
    limit_params: ParameterSet | None = None
    limit_incidence: Any = None
    waive_hypotheses: bool = False
    metadata: dict = field(default_factory=dict)
    doc: dict | None = None

    def window_config(self, lam: float) -> WindowStatConfig:
        return WindowStatConfig.default(lam, time_functions(self.params, self.incidence),
                                        burn_in=self.burn_in, scan_length=self.scan_length,
                                        t_step=self.t_step, quadrature_step=self.quadrature_step)


# -- loading -------------------------------------------------------------------------

def _get(doc, key, path, required=True):
    if key not in doc:
        if required:
            raise SchemaError(f"{path}.{key}" if path else key, "missing field")
        return None
    return doc[key]


def _number(v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SchemaError(path, "expected a finite number")
    if positive and not v > 0:
        raise SchemaError(path, "must be > 0")
    return float(v)


def _state(doc, path):
    if not isinstance(doc, Mapping):
        raise SchemaError(path, "expected an object")
    vals = {}
    for c in ("S", "I", "Q", "R"):
        v = _number(_get(doc, c, path), f"{path}.{c}")
        if v < 0:
            raise SchemaError(f"{path}.{c}", "must be >= 0")
        vals[c] = v
    return State(**vals)


def load_scenario(document, validate: bool = True) -> Scenario:
    """Parse and validate a scenario document (a mapping, or JSON text)."""
    doc = json.loads(document) if isinstance(document, str) else document
    if not isinstance(doc, Mapping):
        raise SchemaError("$", "expected an object")
    doc = copy.deepcopy(dict(doc))
    name = _get(doc, "name", "")
    if not isinstance(name, str) or not name:
        raise SchemaError("name", "expected a non-empty string")
    params = ParameterSet.from_dict(_get(doc, "params", ""), "params")
    inc = incidence_from_dict(_get(doc, "incidence", ""), "incidence")
    initial = _state(_get(doc, "initial", ""), "initial")
    integ = IntegratorConfig.from_dict(doc.get("integrator", {}), "integrator")

    th = doc.get("thresholds", {})
    if not isinstance(th, Mapping):
        raise SchemaError("thresholds", "expected an object")
    lambdas = th.get("lambdas", [1.0])
    if not isinstance(lambdas, list):
        raise SchemaError("thresholds.lambdas", "expected a list")
    lambdas = tuple(_number(v, f"thresholds.lambdas.{i}", positive=True)
                    for i, v in enumerate(lambdas))
    win = {}
    for key in ("burn_in", "scan_length", "t_step", "quadrature_step", "band"):
        if key in th:
            win[key] = _number(th[key], f"thresholds.{key}", positive=key != "burn_in")
    for key in th:
        if key not in ("lambdas", "burn_in", "scan_length", "t_step", "quadrature_step", "band"):
            raise SchemaError(f"thresholds.{key}", "unknown field")

    kind = doc.get("kind", "general")
    if kind not in KINDS:
        raise SchemaError("kind", f"expected one of {KINDS}, got {kind!r}")
    period = None
    if kind == "periodic":
        period = _number(_get(doc, "period", ""), "period", positive=True)
    limit_params = limit_inc = None
    if "limit_params" in doc:
        lp = doc["limit_params"]
        if not isinstance(lp, Mapping):
            raise SchemaError("limit_params", "expected an object")
        limit_params = ParameterSet.from_dict({k: v for k, v in lp.items() if k != "incidence"},
                                              "limit_params")
        if "incidence" in lp:
            limit_inc = incidence_from_dict(lp["incidence"], "limit_params.incidence")
    waive = doc.get("waive_hypotheses", False)
    if not isinstance(waive, bool):
        raise SchemaError("waive_hypotheses", "expected true or false")
    meta = doc.get("metadata", {})
    if not isinstance(meta, Mapping):
        raise SchemaError("metadata", "expected an object")

    sc = Scenario(name, params, inc, initial, integ, lambdas, kind=kind, period=period,
                  limit_params=limit_params, limit_incidence=limit_inc, waive_hypotheses=waive,
                  metadata=dict(meta), doc=doc, **win)
    if validate:
        problems = scenario_problems(sc)
        if problems:
            raise ValidationError(problems)
    return sc


def load_scenario_file(path) -> Scenario:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError("$", f"not valid JSON: {exc}") from None
    return load_scenario(doc)


def hypothesis_box(p: ParameterSet, s0: State) -> tuple[float, float]:
    """(theta, K) for the hypothesis check: K bounds every trajectory eventually."""
    K = p.ultimate_bound()
    if not math.isfinite(K):
        cfg = WindowStatConfig.default(p.omega_d, [p.d])
        d_avg = tf.liminf_window(p.d, cfg).value / p.omega_d
        K = p.Lambda.bounds()[1] / d_avg if d_avg > 0 else 1.0
    K = max(K, s0.N)
    return K / 100.0, K


def scenario_problems(sc: Scenario) -> list[str]:
    out = list(sc.params.problems(horizon=max(2000.0, sc.integrator.t_end), burn_in=sc.burn_in))
    for lam in sc.lambdas:
        out += [f"thresholds: {m}" for m in sc.window_config(lam).problems()]
    trees = time_functions(sc.params, sc.incidence)
    if sc.kind == "autonomous":
        if any(_time_dependent(t) for t in trees):
            out.append("kind: autonomous scenario has time-dependent coefficients")
    elif sc.kind == "periodic":
        if not (sc.params.Lambda.is_constant() and sc.params.d.is_constant()):
            out.append("kind: periodic scenarios need constant Lambda and d")
        try:
            check_periodic(trees, sc.period)
        except PreconditionError as exc:
            out.append(f"kind: {exc}")
    elif sc.kind == "asymptotically_autonomous":
        out += _limit_problems(sc)
    if not sc.waive_hypotheses and not out:
        theta, K = hypothesis_box(sc.params, sc.initial)
        rep = check_hypotheses(sc.incidence, theta, K)
        out += [f"incidence: {m}" for m in rep.failures()]
    return out


def _limit_inc(sc: Scenario):
    if sc.limit_incidence is not None:
        return sc.limit_incidence
    return sc.incidence


def _limit_problems(sc: Scenario) -> list[str]:
    if sc.limit_params is None:
        return ["limit_params: asymptotically autonomous scenarios must declare their limit "
                "coefficients"]
    out = []
    lim_inc = _limit_inc(sc)
    lim_trees = list(sc.limit_params.functions().values()) + [lim_inc.beta]
    if any(_time_dependent(t) for t in lim_trees):
        out.append("limit_params: limit coefficients must be constant")
        return out
    if lim_inc.kind != sc.incidence.kind:
        out.append("limit_params.incidence: must be of the same kind as the incidence")
        return out
    # sanity probe only: uniform convergence itself is assumed, not verified
    t_probe = sc.burn_in
    pairs = [(f"params.{n}", getattr(sc.params, n), getattr(sc.limit_params, n))
             for n in sc.params.functions()]
    pairs.append(("incidence.beta", sc.incidence.beta, lim_inc.beta))
    for label, f, g in pairs:
        gap = abs(float(f(t_probe)) - float(g(t_probe)))
        if gap > 1e-6 * max(1.0, abs(float(g(t_probe)))):
            out.append(f"{label}: differs from its declared limit by {gap!r} at t={t_probe!r}")
    return out


# -- running --------------------------------------------------------------------------

@dataclass
class CrossValidation:
    threshold_verdict: str
    trajectory_verdict: str
    agreement: bool
    trailing_fraction: float
    persist_floor: float
    extinct_ceiling: float
    min_t_end: float
    I_min_trailing: float
    I_final: float

    def to_dict(self):
        return dict(self.__dict__)


def trajectory_verdict(traj: Trajectory, persist_floor: float = 1e-6,
                       extinct_ceiling: float = 1e-10, trailing: float = 0.3,
                       min_t_end: float = 5000.0) -> tuple[str, float, float]:
    """(verdict, min I over the trailing window, final I)."""
    mask = traj.trailing(trailing)
    i_min = float(np.min(traj.I[mask]))
    i_end = float(traj.I[-1])
    if i_min > persist_floor and traj.t[-1] >= min_t_end:
        return PERSISTENT, i_min, i_end
    if i_end < extinct_ceiling:
        return TRAJ_EXTINCT, i_min, i_end
    return UNDETERMINED, i_min, i_end


def combine_verdicts(verdicts: Sequence[str]) -> str:
    """Any lambda certifying a verdict decides it; conflicting certificates are inconclusive."""
    perm = PERMANENT in verdicts
    ext = EXTINCT in verdicts
    if perm and not ext:
        return PERMANENT
    if ext and not perm:
        return EXTINCT
    return INCONCLUSIVE


def cross_validate(threshold: str, traj: Trajectory, **floors) -> CrossValidation:
    tv, i_min, i_end = trajectory_verdict(traj, **floors)
    expected = {PERMANENT: PERSISTENT, EXTINCT: TRAJ_EXTINCT}.get(threshold)
    agree = expected is None or tv == UNDETERMINED or tv == expected
    return CrossValidation(threshold, tv, agree, floors.get("trailing", 0.3),
                           floors.get("persist_floor", 1e-6),
                           floors.get("extinct_ceiling", 1e-10),
                           floors.get("min_t_end", 5000.0), i_min, i_end)


class RunResult(NamedTuple):
    trajectory: Trajectory | None
    reports: list
    cross: CrossValidation | None

    @property
    def verdict(self) -> str:
        return combine_verdicts([r.verdict for r in self.reports])


def scenario_reports(sc: Scenario, lambdas=None) -> list[ThresholdReport]:
    """Threshold reports for each lambda with the closed forms the kind permits."""
    p, inc = sc.params, sc.incidence
    out = []
    closed: dict[str, Any] = {}
    tag = "general"
    if sc.kind == "autonomous":
        closed["autonomous"] = dict(zip(("R_p", "R_e"), autonomous_thresholds(p, inc)))
        tag = "autonomous"
    elif sc.kind == "periodic":
        rp, re_ = periodic_thresholds(p, inc, sc.period)
        closed["periodic"] = {"T": sc.period, "R_p": rp, "R_e": re_}
        tag = "periodic"
    elif sc.kind == "asymptotically_autonomous":
        rp, re_ = autonomous_thresholds(sc.limit_params, _limit_inc(sc))
        closed["limit_autonomous"] = {"R_p": rp, "R_e": re_}
        tag = "autonomous"
    windowed = (p.Lambda.is_constant() and p.d.is_constant()
                and isinstance(inc, (MassAction, Standard)))
    if windowed and tag == "general":
        tag = "mass_action" if isinstance(inc, MassAction) else "standard_qa"
    for lam in (sc.lambdas if lambdas is None else lambdas):
        cfg = sc.window_config(lam)
        rep = compute_thresholds(p, inc, lam, cfg, band=sc.band)
        rep.specialization = tag
        rep.extras = copy.deepcopy(closed)
        if windowed:
            rep.extras["windowed"] = windowed_special_thresholds(p, inc, lam, cfg).to_dict()
        if "limit_autonomous" in closed:
            lim = closed["limit_autonomous"]
            rep.extras["scan_verdict"] = rep.verdict
            rep.verdict = classify(math.log(lim["R_p"]) if lim["R_p"] > 0 else -math.inf,
                                   math.log(lim["R_e"]) if lim["R_e"] > 0 else -math.inf,
                                   sc.band)
        out.append(rep)
    return out


def run(sc: Scenario, with_trajectory: bool = True, backend: str | None = None) -> RunResult:
    reports = scenario_reports(sc)
    if not with_trajectory:
        return RunResult(None, reports, None)
    traj = integrate(sc.params, sc.incidence, sc.initial, sc.integrator, backend)
    cross = cross_validate(combine_verdicts([r.verdict for r in reports]), traj)
    return RunResult(traj, reports, cross)


# -- trajectory-level checks ----------------------------------------------------------

@dataclass
class EnvelopeCheck:
    ok: bool
    slope: float
    T1: float
    worst_margin: float
    checked: int


def envelope_check(traj: Trajectory, r_e: float, lam: float, band: float = DEFAULT_BAND,
                   t1_fraction: float = 0.2, from_fraction: float = 0.5,
                   zero_floor: float = 1e-150) -> EnvelopeCheck:
    """log I(t) <= log I(T1) + (r_e/lam + band)(t - T1) for the late samples.

    Samples with I below ``zero_floor`` are numerically zero and skipped.
    """
    t0, t1 = traj.t[0], traj.t[-1]
    T1 = t0 + t1_fraction * (t1 - t0)
    k1 = int(np.searchsorted(traj.t, T1))
    T1 = float(traj.t[k1])
    I1 = float(traj.I[k1])
    slope = r_e / lam + band
    if I1 <= 0.0:
        late = traj.t >= t0 + from_fraction * (t1 - t0)
        ok = bool(np.all(traj.I[late] == 0.0))
        return EnvelopeCheck(ok, slope, T1, 0.0, int(late.sum()))
    mask = (traj.t >= t0 + from_fraction * (t1 - t0)) & (traj.I >= zero_floor)
    if not mask.any():
        return EnvelopeCheck(True, slope, T1, math.inf, 0)
    bound = math.log(I1) + slope * (traj.t[mask] - T1)
    margin = bound - np.log(traj.I[mask])
    return EnvelopeCheck(bool(np.all(margin >= 0)), slope, T1, float(np.min(margin)),
                         int(mask.sum()))


def alternate_initial(s0: State) -> State:
    """A second positive starting point, well separated from ``s0``."""
    return State(2.0 * s0.S + 0.01, 0.5 * s0.I + 0.005, s0.Q + 0.002, s0.R + 0.003)


def disease_free_convergence(sc: Scenario, other: State | None = None,
                             trailing: float = 0.1, backend: str | None = None
                             ) -> tuple[float, Trajectory, Trajectory]:
    """Max component distance over the trailing samples of two runs."""
    a = integrate(sc.params, sc.incidence, sc.initial, sc.integrator, backend)
    b = integrate(sc.params, sc.incidence, other or alternate_initial(sc.initial),
                  sc.integrator, backend)
    mask = a.trailing(trailing)
    return float(np.max(np.abs(a.y[mask] - b.y[mask]))), a, b


# -- golden suite ----------------------------------------------------------------------

SEASONAL_PERIOD = 2.0 * math.pi / 0.3
GOLDEN_INITIAL = {"S": 0.0286, "I": 0.01, "Q": 0.0, "R": 0.0}
_GOLDEN = (
    ("mass_action_alpha9", "mass_action", 9.0, 21.0, 1.10599, "R_p^SIM", PERMANENT),
    ("mass_action_alpha8", "mass_action", 8.0, 21.0, 0.98310, "R_e^SIM", EXTINCT),
    ("quarantine_adjusted_alpha0.25", "quarantine_adjusted", 0.25, 0.2, 1.07527, "R_p^S/QA",
     PERMANENT),
    ("quarantine_adjusted_alpha0.23", "quarantine_adjusted", 0.23, 0.2, 0.989247, "R_e^S/QA",
     EXTINCT),
)


def _c(v):
    return {"kind": "const", "value": v}


def seasonal_beta(alpha: float) -> dict:
    """alpha (1 - 0.7 sin(0.3 t)) (2 - e^{-t}) as an expression document."""
    return {"kind": "product", "args": [
        _c(alpha),
        {"kind": "affine", "scale": -0.7, "offset": 1.0,
         "arg": {"kind": "sin", "amp": 1.0, "omega": 0.3}},
        {"kind": "affine", "scale": -1.0, "offset": 2.0, "arg": {"kind": "expdecay", "rate": 1.0}},
    ]}


def golden_document(name, incidence, alpha, lam, reported, quantity, claim) -> dict:
    return {
        "name": name,
        "params": {"Lambda": _c(0.001), "d": _c(0.035), "gamma": _c(0.4), "sigma": _c(0.01),
                   "alpha1": _c(0.2), "alpha2": _c(0.2), "eps": _c(0.2)},
        "incidence": {"kind": incidence, "beta": seasonal_beta(alpha)},
        "initial": dict(GOLDEN_INITIAL),
        "integrator": {"method": "rk45", "t_end": 5000.0, "sample_stride": 1.0},
        "thresholds": {"lambdas": [lam, SEASONAL_PERIOD]},
        "kind": "general",
        "metadata": {"alpha": alpha, "paper_lambda": lam, "paper_reported": reported,
                     "paper_quantity": quantity, "paper_claim": claim,
                     "initial_state_note": "initial state chosen by the artifact, not given "
                                           "with the source figures"},
    }


def golden_scenarios() -> list[Scenario]:
    return [load_scenario(golden_document(*g)) for g in _GOLDEN]


TABLE_COLUMNS = (
    "name", "incidence", "alpha", "paper_quantity", "paper_reported", "paper_claim",
    "lambda", "r_p", "r_e", "R_p", "R_e", "verdict_lambda",
    "lambda_period", "r_p_period", "r_e_period", "verdict_period", "threshold_verdict",
    "printed_lower", "printed_upper", "uniform_lower", "uniform_upper",
    "trajectory_verdict", "I_min_trailing", "I_final", "agreement",
    "envelope_ok", "disease_free_distance", "initial_S", "initial_I", "initial_Q", "initial_R",
)


@dataclass
class SuiteResult:
    scenarios: list
    runs: list
    table: list

    def to_csv(self, target=None) -> str:
        return table_csv(self.table, TABLE_COLUMNS, target)


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def table_csv(rows: Sequence[Mapping], columns: Sequence[str], target=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    text = buf.getvalue()
    if target is not None:
        with open(target, "w", newline="") as fh:
            fh.write(text)
    return text


def suite_row(sc: Scenario, res: RunResult, check_attractivity: bool = True) -> dict:
    md = sc.metadata
    main, alt = res.reports[0], res.reports[-1]
    win = main.extras.get("windowed", {})
    row = {"name": sc.name, "incidence": sc.incidence.kind, "alpha": md.get("alpha"),
           "paper_quantity": md.get("paper_quantity"), "paper_reported": md.get("paper_reported"),
           "paper_claim": md.get("paper_claim"),
           "lambda": main.lam, "r_p": main.r_p, "r_e": main.r_e, "R_p": main.R_p,
           "R_e": main.R_e, "verdict_lambda": main.verdict,
           "lambda_period": alt.lam, "r_p_period": alt.r_p, "r_e_period": alt.r_e,
           "verdict_period": alt.verdict, "threshold_verdict": res.verdict,
           "printed_lower": win.get("printed", [None, None])[0],
           "printed_upper": win.get("printed", [None, None])[1],
           "uniform_lower": win.get("uniform", [None, None])[0],
           "uniform_upper": win.get("uniform", [None, None])[1],
           "trajectory_verdict": res.cross.trajectory_verdict,
           "I_min_trailing": res.cross.I_min_trailing, "I_final": res.cross.I_final,
           "agreement": res.cross.agreement,
           "initial_S": sc.initial.S, "initial_I": sc.initial.I, "initial_Q": sc.initial.Q,
           "initial_R": sc.initial.R}
    env_ok, dist = None, None
    if res.verdict == EXTINCT:
        ext = [r for r in res.reports if r.verdict == EXTINCT]
        best = min(ext, key=lambda r: r.r_e / r.lam)
        env_ok = envelope_check(res.trajectory, best.r_e, best.lam, sc.band).ok
        if check_attractivity:
            dist = disease_free_convergence(sc)[0]
    row["envelope_ok"] = env_ok
    row["disease_free_distance"] = dist
    return row


def paper_suite(backend: str | None = None) -> SuiteResult:
    """Run the four seasonal scenarios and assemble the comparison table."""
    scs = golden_scenarios()
    runs = [run(sc, backend=backend) for sc in scs]
    table = [suite_row(sc, r) for sc, r in zip(scs, runs)]
    return SuiteResult(scs, runs, table)


# -- sweeps ---------------------------------------------------------------------------

def _split(path: str):
    if not isinstance(path, str) or not path:
        raise PathError(path, "empty path")
    return path.split(".")


def get_path(doc, path: str):
    cur = doc
    for part in _split(path):
        if isinstance(cur, list):
            try:
                cur = cur[int(part)]
            except (ValueError, IndexError):
                raise PathError(path, f"no list element {part!r}") from None
        elif isinstance(cur, Mapping):
            if part not in cur:
                raise PathError(path, f"no field {part!r}")
            cur = cur[part]
        else:
            raise PathError(path, f"cannot descend into {type(cur).__name__} at {part!r}")
    return cur


def set_path(doc, path: str, value: float):
    parts = _split(path)
    parent = get_path(doc, ".".join(parts[:-1])) if len(parts) > 1 else doc
    leaf = parts[-1]
    old = get_path(doc, path)
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise PathError(path, "does not address a numeric leaf")
    if isinstance(parent, list):
        parent[int(leaf)] = value
    else:
        parent[leaf] = value


class SweepRow(NamedTuple):
    value: float
    lam: float
    r_p: float
    r_e: float
    verdict: str


SWEEP_COLUMNS = ("value", "lambda", "r_p", "r_e", "verdict")


def sweep(template, path: str, values, with_trajectory: bool = False) -> list[SweepRow]:
    """One threshold run per value of the leaf at ``path``; rows ordered by value."""
    base = template.doc if isinstance(template, Scenario) else template
    if isinstance(base, str):
        base = json.loads(base)
    get_path(base, path)
    rows = []
    for v in sorted(float(x) for x in values):
        doc = copy.deepcopy(base)
        set_path(doc, path, v)
        sc = load_scenario(doc)
        res = run(sc, with_trajectory=with_trajectory)
        rows += [SweepRow(v, r.lam, r.r_p, r.r_e, r.verdict) for r in res.reports]
    return rows


def sweep_csv(rows: Sequence[SweepRow], target=None) -> str:
    return table_csv([dict(zip(SWEEP_COLUMNS, r)) for r in rows], SWEEP_COLUMNS, target)
