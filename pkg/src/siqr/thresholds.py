"""Threshold machinery: auxiliary equation, b_delta, r_p / r_e and verdicts.

The auxiliary solution x(t) of x' = Lambda(t) - d(t) x stands in for the
disease-free susceptible level.  ``compute_thresholds`` integrates
b(s) = lin_incidence(s, x(s)) - (gamma + sigma + d + alpha1)(s) over sliding
windows of length lambda, after a burn-in, and takes the extreme values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from . import timefn as tf
from .errors import LinearizationUndefined, PreconditionError, QuadratureError
from .model import (Incidence, MassAction, ParameterSet, PsiG, Standard,
                    linearized_incidence, time_functions)
from .timefn import Constant, Expr, WindowStatConfig

PERMANENT, EXTINCT, INCONCLUSIVE = "Permanent", "Extinct", "Inconclusive"
DEFAULT_BAND = 1e-3
DEFAULT_X0 = 1.0


def classify(r_p: float, r_e: float, band: float = DEFAULT_BAND) -> str:
    if r_p > band:
        return PERMANENT
    if r_e < -band:
        return EXTINCT
    return INCONCLUSIVE


def _num_out(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def _time_dependent(e: Expr) -> bool:
    for n in e.walk():
        if isinstance(n, tf.Var) and n.name == "t":
            return True
        if isinstance(n, tf.Sinusoid) and n.amp != 0.0 and n.omega != 0.0:
            return True
        if isinstance(n, tf.ExpDecay) and n.rate != 0.0:
            return True
    return False


# -- auxiliary equation ----------------------------------------------------------

@dataclass
class AuxTrajectory:
    """Nodes of x(t) with the cumulative integral of d.

    ``at`` evaluates between nodes by one Simpson step from the preceding
    node, so any point of the horizon is available at node accuracy.
    """

    p: ParameterSet
    t0: float
    x0: float
    t: np.ndarray
    x: np.ndarray
    cum_d: np.ndarray
    closed_form: bool = False

    @property
    def contraction(self) -> float:
        """exp(-integral of d over the whole horizon)."""
        return math.exp(-float(self.cum_d[-1]))

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def at(self, s):
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr < self.t0 - 1e-12) or np.any(s_arr > self.t_end * (1 + 1e-12) + 1e-12):
            raise ValueError("evaluation point outside the auxiliary horizon")
        if self.closed_form:
            out = _closed_form(self.p, self.t0, self.x0, s_arr)
        else:
            j = np.clip(np.searchsorted(self.t, s_arr, side="right") - 1, 0, len(self.t) - 2)
            a = self.t[j]
            A, C, _ = _step_coeffs(self.p, a, s_arr)
            out = A * self.x[j] + C
        return float(out) if np.ndim(s) == 0 else out


def _closed_form(p, t0, x0, s):
    lam = float(p.Lambda(0.0))
    d = float(p.d(0.0))
    dt = s - t0
    if d == 0.0:
        return x0 + lam * dt
    xs = lam / d
    return xs + (x0 - xs) * np.exp(-d * dt)


def _step_coeffs(p: ParameterSet, a, b):
    """(A, C, dD) with x(b) = A x(a) + C over each interval [a, b]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    g = b - a
    m = 0.5 * (a + b)
    da, dm, db = (np.broadcast_to(p.d(v), np.shape(v)) for v in (a, m, b))
    la, lm, lb = (np.broadcast_to(p.Lambda(v), np.shape(v)) for v in (a, m, b))
    dD = g / 6.0 * (da + 4.0 * dm + db)
    d_am = g / 24.0 * (5.0 * da + 8.0 * dm - db)
    A = np.exp(-dD)
    C = g / 6.0 * (A * la + 4.0 * np.exp(-(dD - d_am)) * lm + lb)
    return A, C, dD


def default_aux_grid(t0: float, t_end: float, step: float = 0.25) -> np.ndarray:
    n = max(1, int(math.ceil((t_end - t0) / step)))
    return np.linspace(t0, t_end, n + 1)


def solve_auxiliary(p: ParameterSet, t0: float = 0.0, x0: float = DEFAULT_X0, grid=None,
                    backend: str | None = None) -> AuxTrajectory:
    """Solve x' = Lambda - d x from x(t0) = x0 on the node times ``grid``.

    Constant Lambda and d use the closed form.  Otherwise each interval is
    advanced by the variation-of-constants formula with both integrals done
    by Simpson's rule.  ``grid`` defaults to 1000 time units past t0.
    """
    if not (x0 >= 0 and math.isfinite(x0)):
        raise ValueError("x0 must be finite and >= 0")
    if grid is None:
        grid = default_aux_grid(t0, t0 + 1000.0)
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise ValueError("grid needs at least two node times")
    if t[0] != t0:
        if t[0] < t0:
            raise ValueError("grid starts before t0")
        t = np.concatenate(([t0], t))
    if np.any(np.diff(t) <= 0):
        raise ValueError("grid must be strictly increasing")
    closed = p.Lambda.is_constant() and p.d.is_constant()
    if closed:
        d = float(p.d(0.0))
        x = _closed_form(p, t0, x0, t)
        cum = d * (t - t0)
    else:
        A, C, dD = _step_coeffs(p, t[:-1], t[1:])
        x = _backend.get(backend).aux_recurrence(A, C, float(x0))
        cum = np.concatenate(([0.0], np.cumsum(dD)))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(cum))):
        raise QuadratureError("non-finite value in the auxiliary solution")
    return AuxTrajectory(p, float(t0), float(x0), t, np.asarray(x, dtype=float), cum, closed)


def aux_grid_for_scan(cfg: WindowStatConfig, trees=(), coarse: float = 0.25) -> np.ndarray:
    """Coarse nodes through the burn-in, then half-quadrature-step nodes over the scan."""
    omegas = [w for f in trees for w in f.omegas()]
    if omegas:
        coarse = min(coarse, 2 * math.pi / max(omegas) / 64.0)
    head = default_aux_grid(0.0, cfg.burn_in, coarse) if cfg.burn_in > 0 else np.array([0.0])
    h = cfg.quadrature_step / 2.0
    span = cfg.scan_length + cfg.lam + 2 * cfg.quadrature_step
    tail = cfg.burn_in + h * np.arange(1, int(math.ceil(span / h)) + 1)
    return np.concatenate((head, tail))


# -- b_delta and the threshold scan ------------------------------------------------

def b_delta_limits(p: ParameterSet, inc: Incidence, t, x):
    """(liminf, limsup) of b_delta(t, x) as delta -> 0+."""
    lo, hi = linearized_incidence(inc, t, x)
    rem = p.removal(t)
    return lo - rem, hi - rem


@dataclass
class ThresholdReport:
    lam: float
    r_p: float
    r_e: float
    verdict: str
    specialization: str = "general"
    band: float = DEFAULT_BAND
    argmin_t: float | None = None
    argmax_t: float | None = None
    window: dict = field(default_factory=dict)
    x0: float = DEFAULT_X0
    reason: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def R_p(self) -> float:
        return math.exp(self.r_p) if self.r_p < 709 else math.inf

    @property
    def R_e(self) -> float:
        return math.exp(self.r_e) if self.r_e < 709 else math.inf

    def to_dict(self) -> dict:
        out = {"lambda": self.lam, "r_p": self.r_p, "r_e": self.r_e, "R_p": self.R_p,
               "R_e": self.R_e, "verdict": self.verdict, "specialization": self.specialization,
               "inconclusive_band": self.band, "argmin_t": self.argmin_t,
               "argmax_t": self.argmax_t, "scan": dict(self.window), "x0": self.x0,
               "reason": self.reason, "extras": self.extras}
        return _clean(out)


def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    return _num_out(v)


def _check_cfg(lam, cfg, p, inc):
    if not lam > 0:
        raise ValueError("lambda must be > 0")
    if cfg is None:
        cfg = WindowStatConfig.default(lam, time_functions(p, inc))
    elif abs(cfg.lam - lam) > 1e-12 * lam:
        raise ValueError("window configuration was built for a different lambda")
    return cfg.validate()


def compute_thresholds(p: ParameterSet, inc: Incidence, lam: float,
                       cfg: WindowStatConfig | None = None, x0: float = DEFAULT_X0,
                       band: float = DEFAULT_BAND, aux: AuxTrajectory | None = None
                       ) -> ThresholdReport:
    """Scanned r_p(lambda), r_e(lambda) and the permanence/extinction verdict."""
    cfg = _check_cfg(lam, cfg, p, inc)
    if aux is None:
        aux = solve_auxiliary(p, 0.0, x0, aux_grid_for_scan(cfg, time_functions(p, inc)))
    meta = cfg.to_dict()
    try:
        if isinstance(inc, PsiG):
            inc.g_limits()
    except LinearizationUndefined as exc:
        return ThresholdReport(lam, -math.inf, math.inf, INCONCLUSIVE, band=band, window=meta,
                               x0=x0, reason=str(exc))

    def lower(s):
        return b_delta_limits(p, inc, s, aux.at(s))[0]

    def upper(s):
        return b_delta_limits(p, inc, s, aux.at(s))[1]

    lo = tf.scan_windows(lower, cfg)
    if _same_limits(inc):
        hi = lo
    else:
        hi = tf.scan_windows(upper, cfg)
    r_p, r_e = lo.minimum, hi.maximum
    return ThresholdReport(lam, r_p, r_e, classify(r_p, r_e, band), band=band,
                           argmin_t=lo.argmin, argmax_t=hi.argmax, window=meta, x0=x0)


def _same_limits(inc):
    if isinstance(inc, (MassAction, Standard)):
        return True
    lo, hi = inc.g_limits()
    return lo == hi


def lemma1_independence_probe(p: ParameterSet, inc: Incidence, lam: float,
                              cfg: WindowStatConfig | None = None,
                              x0_list=(0.01, 1.0, 10.0)) -> float:
    """Max pairwise deviation of (r_p, r_e) across auxiliary starting values."""
    if any(not x > 0 for x in x0_list):
        raise ValueError("all starting values must be > 0")
    reps = [compute_thresholds(p, inc, lam, cfg, x0=x) for x in x0_list]
    dev = 0.0
    for a in reps:
        for b in reps:
            for u, v in ((a.r_p, b.r_p), (a.r_e, b.r_e)):
                if u != v:
                    dev = max(dev, abs(u - v))
    return dev


# -- perturbation constant -----------------------------------------------------------

def perturbation_constant(p: ParameterSet, burn_in: float = 1000.0) -> float:
    """D = (2 omega_d / d^-) exp(d^- / 2), with d^- the windowed liminf of d."""
    w = p.omega_d
    cfg = WindowStatConfig.default(w, [p.d], burn_in=burn_in)
    d_minus = tf.liminf_window(p.d, cfg).value
    if not d_minus > 0:
        raise PreconditionError("windowed liminf of d must be > 0")
    return 2.0 * w / d_minus * math.exp(d_minus / 2.0)


def perturbation_deviation(p: ParameterSet, f: float, t0: float = 0.0,
                           x0: float = DEFAULT_X0, grid=None) -> float:
    """sup |x_f - x| for x' = Lambda - d x + f versus f = 0, same start."""
    shifted = ParameterSet(**{**p.functions(), "Lambda": tf.Sum((p.Lambda, Constant(f)))},
                           omega_d=p.omega_d, omega_Lambda=p.omega_Lambda)
    base = solve_auxiliary(p, t0, x0, grid)
    pert = solve_auxiliary(shifted, t0, x0, base.t)
    return float(np.max(np.abs(pert.x - base.x)))


# -- closed-form specializations --------------------------------------------------------

def autonomous_thresholds(p: ParameterSet, inc: Incidence) -> tuple[float, float]:
    """(R_aut_p, R_aut_e): linearized incidence at Lambda/d over the removal rate."""
    trees = list(p.functions().values()) + [inc.beta]
    if isinstance(inc, PsiG):
        trees += [inc.psi, inc.g]
    bad = [t for t in trees if _time_dependent(t)]
    if bad:
        raise PreconditionError("autonomous thresholds need time-independent coefficients")
    lam, d = float(p.Lambda(0.0)), float(p.d(0.0))
    if not d > 0:
        raise PreconditionError("d must be > 0")
    lo, hi = linearized_incidence(inc, 0.0, lam / d)
    rem = float(p.removal(0.0))
    return float(lo) / rem, float(hi) / rem


def check_periodic(trees, T: float, n_probes: int = 100, rtol: float = 1e-9):
    ts = np.linspace(0.0, 10.0 * T, n_probes)
    for tree in trees:
        if tree.variables() - {"t"}:
            continue
        a = np.broadcast_to(tree(ts), ts.shape)
        b = np.broadcast_to(tree(ts + T), ts.shape)
        gap = np.abs(a - b) > rtol * np.maximum(1.0, np.abs(a))
        if gap.any():
            k = int(np.argmax(gap))
            raise PreconditionError(
                f"coefficient is not {T!r}-periodic: f({ts[k]!r})={a[k]!r}, "
                f"f({ts[k] + T!r})={b[k]!r}")


def periodic_thresholds(p: ParameterSet, inc: Incidence, T: float,
                        n_panels: int = 4096) -> tuple[float, float]:
    """(R_per_p, R_per_e) for a T-periodic model with constant Lambda and d."""
    if not T > 0:
        raise ValueError("period must be > 0")
    if not (p.Lambda.is_constant() and p.d.is_constant()):
        raise PreconditionError("periodic thresholds need constant Lambda and d")
    check_periodic(time_functions(p, inc), T)
    lam, d = float(p.Lambda(0.0)), float(p.d(0.0))
    xs = lam / d
    edges = np.linspace(0.0, T, n_panels + 1)

    def avg(f):
        return float(np.sum(tf.simpson_panels(f, edges))) / T

    def lin(k):
        return lambda s: np.broadcast_to(linearized_incidence(inc, s, xs)[k], np.shape(s))

    den = avg(p.gamma) + avg(p.sigma) + d + avg(p.alpha1)
    return avg(lin(0)) / den, avg(lin(1)) / den


@dataclass
class WindowedThresholds:
    """Windowed ratios as printed (bare d) and uniformly windowed (d * lambda)."""

    lower: float
    upper: float
    uniform_lower: float
    uniform_upper: float
    family: str
    stats: dict

    def __iter__(self):
        yield self.lower
        yield self.upper

    def to_dict(self):
        return _clean({"printed": [self.lower, self.upper],
                       "uniform": [self.uniform_lower, self.uniform_upper],
                       "family": self.family, "window_stats": self.stats})


def windowed_special_thresholds(p: ParameterSet, inc: Incidence, lam: float,
                                cfg: WindowStatConfig | None = None) -> WindowedThresholds:
    """Ratios of windowed extremes of beta, gamma, sigma, alpha1."""
    if not (p.Lambda.is_constant() and p.d.is_constant()):
        raise PreconditionError("windowed specializations need constant Lambda and d")
    if not isinstance(inc, (MassAction, Standard)):
        raise PreconditionError("windowed specializations cover mass-action, standard and "
                                "quarantine-adjusted incidence")
    cfg = _check_cfg(lam, cfg, p, inc)
    L, d = float(p.Lambda(0.0)), float(p.d(0.0))
    stats = {}
    for name, f in (("beta", inc.beta), ("gamma", p.gamma), ("sigma", p.sigma),
                    ("alpha1", p.alpha1)):
        s = tf.window_stats(f, cfg)
        stats[name] = (s.minimum, s.maximum)
    scale = L / d if isinstance(inc, MassAction) else 1.0
    family = "mass_action" if isinstance(inc, MassAction) else "standard_qa"

    def ratio(k, dd):
        b = stats["beta"][k]
        return scale * b / (stats["gamma"][k] + stats["sigma"][k] + dd + stats["alpha1"][k])

    return WindowedThresholds(ratio(0, d), ratio(1, d), ratio(0, d * lam), ratio(1, d * lam),
                              family, {k: list(v) for k, v in stats.items()})


__all__ = ["AuxTrajectory", "ThresholdReport", "WindowedThresholds", "solve_auxiliary",
           "b_delta_limits", "compute_thresholds", "autonomous_thresholds",
           "periodic_thresholds", "windowed_special_thresholds", "lemma1_independence_probe",
           "perturbation_constant", "perturbation_deviation", "classify", "PERMANENT",
           "EXTINCT", "INCONCLUSIVE"]
