"""SIQR model: coefficients, incidence families and the right-hand side."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from . import timefn as tf
from .errors import EvaluationError, LinearizationUndefined, SchemaError, ValidationError
from .timefn import Constant, Expr, WindowStatConfig

PARAM_NAMES = ("Lambda", "d", "gamma", "sigma", "alpha1", "alpha2", "eps")
COMPARTMENTS = ("S", "I", "Q", "R")
PROBE_DELTAS = (1e-4, 1e-6, 1e-8)


@dataclass(frozen=True)
class ParameterSet:
    """The seven coefficient functions plus the windows used to validate d and Lambda."""

    Lambda: Expr
    d: Expr
    gamma: Expr
    sigma: Expr
    alpha1: Expr
    alpha2: Expr
    eps: Expr
    omega_d: float = 1.0
    omega_Lambda: float = 1.0

    @classmethod
    def constant(cls, Lambda, d, gamma, sigma, alpha1=0.0, alpha2=0.0, eps=0.0, **kw):
        vals = dict(Lambda=Lambda, d=d, gamma=gamma, sigma=sigma,
                    alpha1=alpha1, alpha2=alpha2, eps=eps)
        return cls(**{k: Constant(float(v)) for k, v in vals.items()}, **kw)

    def functions(self) -> dict[str, Expr]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def is_constant(self) -> bool:
        return all(f.is_constant() for f in self.functions().values())

    def removal(self, t):
        """gamma + sigma + d + alpha1 at t."""
        return self.gamma(t) + self.sigma(t) + self.d(t) + self.alpha1(t)

    def removal_tree(self) -> Expr:
        return tf.Sum((self.gamma, self.sigma, self.d, self.alpha1))

    def ultimate_bound(self) -> float:
        """Certified sup(Lambda) / inf(d); infinite when inf(d) cannot be bounded away from 0."""
        lam_hi = self.Lambda.bounds()[1]
        d_lo = self.d.bounds()[0]
        if d_lo <= 0:
            return math.inf
        return lam_hi / d_lo

    def problems(self, horizon: float = 2000.0, burn_in: float = 1000.0) -> list[str]:
        out = []
        for name, f in self.functions().items():
            if not f.is_time_function():
                out.append(f"params.{name}: only time-function node kinds are allowed")
                continue
            lo, hi = f.bounds()
            if not (math.isfinite(lo) and math.isfinite(hi)):
                out.append(f"params.{name}: not certifiably bounded")
            t_bad = tf.find_negative(f, horizon)
            if t_bad is not None:
                out.append(f"params.{name}: negative value {f(t_bad)!r} at t={t_bad!r} "
                           "(coefficients must be nonnegative)")
        if out:
            return out
        for name, window in (("d", self.omega_d), ("Lambda", self.omega_Lambda)):
            if not window > 0:
                out.append(f"params.omega_{name}: must be > 0")
                continue
            f = getattr(self, name)
            cfg = WindowStatConfig.default(window, [f], burn_in=burn_in)
            low = tf.liminf_window(f, cfg).value
            if not low > 0:
                out.append(f"params.{name}: windowed liminf {name}^-_omega = {low!r} "
                           f"must be > 0 (omega_{name}={window!r})")
        return out

    def validate(self, horizon: float = 2000.0, burn_in: float = 1000.0) -> "ParameterSet":
        probs = self.problems(horizon, burn_in)
        if probs:
            raise ValidationError(probs)
        return self

    def to_dict(self) -> dict:
        out = {name: f.to_dict() for name, f in self.functions().items()}
        out["omega_d"] = self.omega_d
        out["omega_Lambda"] = self.omega_Lambda
        return out

    @classmethod
    def from_dict(cls, doc, path="params") -> "ParameterSet":
        if not isinstance(doc, Mapping):
            raise SchemaError(path, "expected an object")
        kw = {}
        for name in PARAM_NAMES:
            if name not in doc:
                raise SchemaError(f"{path}.{name}", "missing field")
            kw[name] = tf.from_dict(doc[name], f"{path}.{name}")
        for name in ("omega_d", "omega_Lambda"):
            if name in doc:
                v = doc[name]
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise SchemaError(f"{path}.{name}", "expected a number")
                kw[name] = float(v)
        return cls(**kw)


@dataclass(frozen=True)
class State:
    S: float
    I: float
    Q: float
    R: float
    t: float = 0.0

    def __post_init__(self):
        for name in COMPARTMENTS:
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"state component {name} must be finite and >= 0, got {v!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.I, self.Q, self.R], dtype=float)

    @property
    def N(self) -> float:
        return self.S + self.I + self.Q + self.R


# -- incidence -----------------------------------------------------------------

class LimitProbe(NamedTuple):
    deltas: tuple[float, ...]
    values: tuple[float, ...]
    estimate: float
    converged: bool


def probe_limit(fn, deltas=PROBE_DELTAS) -> LimitProbe:
    """Probe lim_{delta -> 0+} fn(delta) on a geometric sequence.

    Convergence requires finite values whose successive differences shrink
    (the last difference at most a tenth of the previous one, or both below
    a 1e-9 relative floor).
    """
    vals = tuple(float(fn(dl)) for dl in deltas)
    est = vals[-1]
    ok = all(math.isfinite(v) for v in vals)
    if ok:
        scale = max(1.0, abs(est))
        d1 = abs(vals[1] - vals[0])
        d2 = abs(vals[2] - vals[1])
        ok = d2 <= 1e-9 * scale or d2 <= 0.1 * d1
    return LimitProbe(tuple(deltas), vals, est, ok)


class Incidence:
    """Incidence phi(t, S, R, Q, I); callable on scalars or arrays."""

    kind = ""

    def time_functions(self) -> list[Expr]:
        return [self.beta]

    def diagnose(self, t, S, I, Q, R) -> str | None:
        b = self.beta(t)
        if not math.isfinite(b):
            return "beta"
        return None


def _scalar_inputs(*vals):
    return all(np.ndim(v) == 0 for v in vals)


@dataclass(frozen=True)
class MassAction(Incidence):
    beta: Expr
    kind = "mass_action"

    def __call__(self, t, S, I, Q, R):
        return self.beta(t) * S * I

    def linearized(self, t, x):
        v = self.beta(t) * x
        return v, v

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta.to_dict()}


@dataclass(frozen=True)
class Standard(Incidence):
    """beta S I / (S + I + Q + R), extended by 0 at the origin."""

    beta: Expr
    kind = "standard"

    def _den(self, S, I, Q, R):
        return S + I + Q + R

    def __call__(self, t, S, I, Q, R):
        den = self._den(S, I, Q, R)
        if _scalar_inputs(t, S, I, Q, R):
            if den == 0.0:
                return 0.0
            return self.beta(t) * S * I / den
        num = self.beta(t) * S * I
        den = np.asarray(den, dtype=float)
        num, den = np.broadcast_arrays(num, den)
        out = np.zeros(num.shape)
        np.divide(num, den, out=out, where=den != 0.0)
        return out

    def linearized(self, t, x):
        b = self.beta(t) * (np.ones_like(x) if np.ndim(x) else 1.0)
        return b, b

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta.to_dict()}


@dataclass(frozen=True)
class QuarantineAdjusted(Standard):
    """beta S I / (S + I + Q); the recovered class is excluded."""

    beta: Expr
    kind = "quarantine_adjusted"

    def _den(self, S, I, Q, R):
        return S + I + Q


@dataclass(frozen=True)
class PsiG(Incidence):
    """phi = beta(t) * psi(S, Q, R) * g(I) * I.

    The limits of g at 0+ are declared by the author; ``None`` falls back
    to a numerical probe.  ``beta`` defaults to the constant 1.
    """

    psi: Expr
    g: Expr
    g_liminf0: float | None = None
    g_limsup0: float | None = None
    beta: Expr = field(default_factory=lambda: Constant(1.0))
    kind = "psi_g"

    def __post_init__(self):
        if not self.psi.variables() <= {"S", "Q", "R", "t"}:
            raise ValueError("psi may only reference S, Q, R")
        if not self.g.variables() <= {"I", "t"}:
            raise ValueError("g may only reference I")
        if self.g_liminf0 is not None and self.g_limsup0 is not None:
            if self.g_liminf0 > self.g_limsup0:
                raise ValueError("g_liminf0 must not exceed g_limsup0")

    def __call__(self, t, S, I, Q, R):
        if _scalar_inputs(t, S, I, Q, R):
            if S == 0.0 or I == 0.0:
                return 0.0
            return (self.beta(t) * self.psi(t, {"S": S, "Q": Q, "R": R})
                    * self.g(t, {"I": I}) * I)
        S, I, Q, R = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (S, I, Q, R)))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = (self.beta(t) * self.psi(t, {"S": S, "Q": Q, "R": R})
                   * self.g(t, {"I": I}) * I)
        return np.where((S == 0.0) | (I == 0.0), 0.0, val)

    def g_probe(self) -> LimitProbe:
        return probe_limit(lambda dl: self.g(0.0, {"I": dl}))

    def g_limits(self) -> tuple[float, float]:
        lo, hi = self.g_liminf0, self.g_limsup0
        if lo is not None and hi is not None:
            return lo, hi
        probe = self.g_probe()
        if not probe.converged:
            raise LinearizationUndefined(
                "linearization undefined: g has no declared limits at 0+ and the "
                f"numerical probe does not converge (values {probe.values})")
        return (probe.estimate if lo is None else lo, probe.estimate if hi is None else hi)

    def linearized(self, t, x):
        lo, hi = self.g_limits()
        zero = np.zeros_like(x) if np.ndim(x) else 0.0
        coef = self.beta(t) * self.psi(t, {"S": x, "Q": zero, "R": zero})
        with np.errstate(invalid="ignore"):
            a = coef * lo
            b = coef * hi
        # 0 * inf: psi vanishes, so does the incidence
        if np.ndim(a):
            a = np.where(coef == 0.0, 0.0, a)
            b = np.where(coef == 0.0, 0.0, b)
        elif coef == 0.0:
            a = b = 0.0
        return a, b

    def time_functions(self):
        return [self.beta] + [n for n in (self.psi, self.g) if not n.variables() - {"t"}]

    def diagnose(self, t, S, I, Q, R):
        if not math.isfinite(self.beta(t)):
            return "beta"
        if not math.isfinite(self.psi(t, {"S": S, "Q": Q, "R": R})):
            return "psi"
        if not math.isfinite(self.g(t, {"I": I})):
            return "g"
        return None

    def to_dict(self):
        out = {"kind": self.kind, "psi": self.psi.to_dict(), "g": self.g.to_dict(),
               "g_liminf0": _limit_out(self.g_liminf0), "g_limsup0": _limit_out(self.g_limsup0)}
        if not (isinstance(self.beta, Constant) and self.beta.value == 1.0):
            out["beta"] = self.beta.to_dict()
        return out


def _limit_out(v):
    if v is None:
        return None
    if math.isinf(v):
        return "inf"
    return v


def _limit_in(doc, key, path):
    v = doc.get(key)
    if v is None:
        return None
    if isinstance(v, str) and v.lower() in ("inf", "infinity", "+inf"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v) or v < 0:
        raise SchemaError(f"{path}.{key}", "expected a nonnegative number or \"inf\"")
    return float(v)


INCIDENCE_KINDS = {"mass_action": MassAction, "standard": Standard,
                   "quarantine_adjusted": QuarantineAdjusted, "psi_g": PsiG}


def incidence_from_dict(doc, path="incidence") -> Incidence:
    if not isinstance(doc, Mapping):
        raise SchemaError(path, "expected an object")
    kind = doc.get("kind")
    if kind not in INCIDENCE_KINDS:
        raise SchemaError(f"{path}.kind", f"unknown incidence kind {kind!r}")
    if kind == "psi_g":
        for key in ("psi", "g"):
            if key not in doc:
                raise SchemaError(f"{path}.{key}", "missing field")
        psi = tf.from_dict(doc["psi"], f"{path}.psi")
        g = tf.from_dict(doc["g"], f"{path}.g")
        beta = tf.from_dict(doc["beta"], f"{path}.beta") if "beta" in doc else Constant(1.0)
        try:
            return PsiG(psi, g, _limit_in(doc, "g_liminf0", path),
                        _limit_in(doc, "g_limsup0", path), beta)
        except ValueError as exc:
            raise SchemaError(path, str(exc)) from None
    if "beta" not in doc:
        raise SchemaError(f"{path}.beta", "missing field")
    return INCIDENCE_KINDS[kind](tf.from_dict(doc["beta"], f"{path}.beta"))


# -- operations ----------------------------------------------------------------

def incidence_eval(inc: Incidence, t: float, s: State) -> float:
    return float(inc(t, s.S, s.I, s.Q, s.R))


def linearized_incidence(inc: Incidence, t, x):
    """(liminf, limsup) of phi(t, x, 0, 0, delta) / delta as delta -> 0+."""
    if np.ndim(x) == 0 and not x > 0:
        raise ValueError("susceptible level must be > 0")
    return inc.linearized(t, x)


def numerical_linearization(inc: Incidence, t: float, x: float) -> LimitProbe:
    """Probe phi(t, x, 0, 0, delta) / delta directly; a check on the closed forms."""
    return probe_limit(lambda dl: inc(t, x, dl, 0.0, 0.0) / dl)


def rhs(p: ParameterSet, inc: Incidence, s: State) -> np.ndarray:
    """(S', I', Q', R') of the SIQR system at state ``s``."""
    t = s.t
    S, I, Q, R = s.S, s.I, s.Q, s.R
    phi = inc(t, S, I, Q, R)
    if not math.isfinite(phi):
        factor = inc.diagnose(t, S, I, Q, R) or "incidence"
        raise EvaluationError(f"non-finite incidence at t={t!r}: factor {factor!r}")
    d = p.d(t)
    return np.array([
        p.Lambda(t) - phi - d * S,
        phi - (p.gamma(t) + p.sigma(t) + d + p.alpha1(t)) * I,
        p.sigma(t) * I - (d + p.alpha2(t) + p.eps(t)) * Q,
        p.gamma(t) * I + p.eps(t) * Q - d * R,
    ])


def time_functions(p: ParameterSet, inc: Incidence) -> list[Expr]:
    return list(p.functions().values()) + inc.time_functions()

