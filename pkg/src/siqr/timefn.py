"""Time-varying coefficient expressions and windowed integral statistics.

Coefficients are small immutable expression trees evaluated in closed form.
The same trees (plus the ``var``/``pow``/``quotient`` nodes) describe the
state-dependent factors of the general incidence family, so one module owns
evaluation, serialization, certified bounds and compilation to the flat
stack programs consumed by the integration kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import QuadratureError, SchemaError

# opcodes of the flat stack program (mirrored in _kernels.pyx / _pykernels.py)
OP_CONST, OP_SIN, OP_EXP, OP_VAR, OP_ADD, OP_MUL, OP_AFFINE, OP_POW, OP_DIV = range(9)
VAR_INDEX = {"t": 0, "S": 1, "I": 2, "Q": 3, "R": 4}
MAX_STACK = 64


def _is_array_input(t, env):
    if isinstance(t, np.ndarray) and t.ndim > 0:
        return True
    if env:
        return any(isinstance(v, np.ndarray) and v.ndim > 0 for v in env.values())
    return False


class Expr:
    """Base node.  Calling a node evaluates it at ``t`` (scalar or array)."""

    kind: str = ""

    def __call__(self, t, env: Mapping[str, object] | None = None):
        if _is_array_input(t, env):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return self._array(np.asarray(t, dtype=float), env)
        return self._scalar(float(t), env)

    def children(self) -> tuple["Expr", ...]:
        return ()

    def walk(self):
        yield self
        for c in self.children():
            yield from c.walk()

    # -- structural queries -------------------------------------------------
    def is_time_function(self) -> bool:
        return all(isinstance(n, _TIME_KINDS) for n in self.walk())

    def is_constant(self) -> bool:
        """True when the value cannot depend on ``t`` or on any state variable."""
        for n in self.walk():
            if isinstance(n, Var):
                return False
            if isinstance(n, Sinusoid) and n.amp != 0.0 and n.omega != 0.0:
                return False
            if isinstance(n, ExpDecay) and n.rate != 0.0:
                return False
        return True

    def variables(self) -> set[str]:
        return {n.name for n in self.walk() if isinstance(n, Var)}

    def omegas(self) -> list[float]:
        return [abs(n.omega) for n in self.walk()
                if isinstance(n, Sinusoid) and n.omega != 0.0 and n.amp != 0.0]

    def bounds(self) -> tuple[float, float]:
        """Certified (lower, upper) bounds over t >= 0 by interval arithmetic."""
        raise NotImplementedError

    def value_sup(self) -> float:
        return self.bounds()[1]

    # -- compilation --------------------------------------------------------
    def compile(self) -> tuple[np.ndarray, np.ndarray]:
        """Postfix program: ``(ops int32[n], args float64[n, 3])``."""
        ops: list[int] = []
        args: list[tuple[float, float, float]] = []
        depth = self._emit(ops, args, 0)
        if depth > MAX_STACK:
            raise ValueError(f"expression too deep for the kernel stack ({depth})")
        return np.asarray(ops, dtype=np.int32), np.asarray(args, dtype=float).reshape(-1, 3)

    def _emit(self, ops, args, depth) -> int:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Expr):
    value: float
    kind = "const"

    def _scalar(self, t, env):
        return self.value

    def _array(self, t, env):
        shape = np.broadcast_shapes(np.shape(t), *_env_shapes(env))
        return np.full(shape, self.value)

    def bounds(self):
        return (self.value, self.value)

    def _emit(self, ops, args, depth):
        ops.append(OP_CONST)
        args.append((self.value, 0.0, 0.0))
        return depth + 1

    def to_dict(self):
        return {"kind": "const", "value": self.value}


@dataclass(frozen=True)
class Sinusoid(Expr):
    """``amp * sin(omega * t + phase)``; omega in rad/time."""

    amp: float
    omega: float
    phase: float = 0.0
    kind = "sin"

    def _scalar(self, t, env):
        return self.amp * math.sin(self.omega * t + self.phase)

    def _array(self, t, env):
        v = self.amp * np.sin(self.omega * t + self.phase)
        return np.broadcast_to(v, np.broadcast_shapes(v.shape, *_env_shapes(env))).copy()

    def bounds(self):
        if self.omega == 0.0:
            v = self.amp * math.sin(self.phase)
            return (v, v)
        a = abs(self.amp)
        return (-a, a)

    def _emit(self, ops, args, depth):
        ops.append(OP_SIN)
        args.append((self.amp, self.omega, self.phase))
        return depth + 1

    def to_dict(self):
        return {"kind": "sin", "amp": self.amp, "omega": self.omega, "phase": self.phase}


@dataclass(frozen=True)
class ExpDecay(Expr):
    """``exp(-rate * t)`` with rate >= 0."""

    rate: float
    kind = "expdecay"

    def __post_init__(self):
        if not self.rate >= 0.0:
            raise ValueError("expdecay rate must be >= 0 (bounded on t >= 0)")

    def _scalar(self, t, env):
        return math.exp(-self.rate * t)

    def _array(self, t, env):
        v = np.exp(-self.rate * t)
        return np.broadcast_to(v, np.broadcast_shapes(v.shape, *_env_shapes(env))).copy()

    def bounds(self):
        if self.rate == 0.0:
            return (1.0, 1.0)
        return (0.0, 1.0)

    def _emit(self, ops, args, depth):
        ops.append(OP_EXP)
        args.append((self.rate, 0.0, 0.0))
        return depth + 1

    def to_dict(self):
        return {"kind": "expdecay", "rate": self.rate}


@dataclass(frozen=True)
class Sum(Expr):
    args: tuple[Expr, ...]
    kind = "sum"

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def children(self):
        return self.args

    def _scalar(self, t, env):
        total = 0.0
        for a in self.args:
            total += a._scalar(t, env)
        return total

    def _array(self, t, env):
        total = Constant(0.0)._array(t, env)
        for a in self.args:
            total = total + a._array(t, env)
        return total

    def bounds(self):
        lo = hi = 0.0
        for a in self.args:
            alo, ahi = a.bounds()
            lo += alo
            hi += ahi
        return (lo, hi)

    def _emit(self, ops, args, depth):
        peak = depth
        for i, a in enumerate(self.args):
            peak = max(peak, a._emit(ops, args, depth + i))
        ops.append(OP_ADD)
        args.append((float(len(self.args)), 0.0, 0.0))
        return max(peak, depth + 1)

    def to_dict(self):
        return {"kind": "sum", "args": [a.to_dict() for a in self.args]}


@dataclass(frozen=True)
class Product(Expr):
    args: tuple[Expr, ...]
    kind = "product"

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))

    def children(self):
        return self.args

    def _scalar(self, t, env):
        total = 1.0
        for a in self.args:
            total *= a._scalar(t, env)
        return total

    def _array(self, t, env):
        total = Constant(1.0)._array(t, env)
        for a in self.args:
            total = total * a._array(t, env)
        return total

    def bounds(self):
        lo = hi = 1.0
        for a in self.args:
            alo, ahi = a.bounds()
            corners = (lo * alo, lo * ahi, hi * alo, hi * ahi)
            lo, hi = min(corners), max(corners)
        return (lo, hi)

    def _emit(self, ops, args, depth):
        peak = depth
        for i, a in enumerate(self.args):
            peak = max(peak, a._emit(ops, args, depth + i))
        ops.append(OP_MUL)
        args.append((float(len(self.args)), 0.0, 0.0))
        return max(peak, depth + 1)

    def to_dict(self):
        return {"kind": "product", "args": [a.to_dict() for a in self.args]}


@dataclass(frozen=True)
class Affine(Expr):
    """``scale * arg + offset``."""

    scale: float
    offset: float
    arg: Expr
    kind = "affine"

    def children(self):
        return (self.arg,)

    def _scalar(self, t, env):
        return self.scale * self.arg._scalar(t, env) + self.offset

    def _array(self, t, env):
        return self.scale * self.arg._array(t, env) + self.offset

    def bounds(self):
        lo, hi = self.arg.bounds()
        a, b = self.scale * lo, self.scale * hi
        return (min(a, b) + self.offset, max(a, b) + self.offset)

    def _emit(self, ops, args, depth):
        peak = self.arg._emit(ops, args, depth)
        ops.append(OP_AFFINE)
        args.append((self.scale, self.offset, 0.0))
        return peak

    def to_dict(self):
        return {"kind": "affine", "scale": self.scale, "offset": self.offset,
                "arg": self.arg.to_dict()}


# -- state-expression nodes (general incidence factors) -----------------------

@dataclass(frozen=True)
class Var(Expr):
    """A state variable (``S``, ``I``, ``Q``, ``R``) or ``t``."""

    name: str
    kind = "var"

    def __post_init__(self):
        if self.name not in VAR_INDEX:
            raise ValueError(f"unknown variable {self.name!r}")

    def _scalar(self, t, env):
        if self.name == "t":
            return t
        return float(env[self.name])

    def _array(self, t, env):
        if self.name == "t":
            v = t
        else:
            v = np.asarray(env[self.name], dtype=float)
        return np.broadcast_to(v, np.broadcast_shapes(np.shape(t), *_env_shapes(env))).copy()

    def bounds(self):
        return (-math.inf, math.inf)

    def _emit(self, ops, args, depth):
        ops.append(OP_VAR)
        args.append((float(VAR_INDEX[self.name]), 0.0, 0.0))
        return depth + 1

    def to_dict(self):
        return {"kind": "var", "name": self.name}


@dataclass(frozen=True)
class Power(Expr):
    base: Expr
    exponent: float
    kind = "pow"

    def children(self):
        return (self.base,)

    def _scalar(self, t, env):
        b = self.base._scalar(t, env)
        return _pow(b, self.exponent)

    def _array(self, t, env):
        return np.power(self.base._array(t, env), self.exponent)

    def bounds(self):
        return (-math.inf, math.inf)

    def _emit(self, ops, args, depth):
        peak = self.base._emit(ops, args, depth)
        ops.append(OP_POW)
        args.append((self.exponent, 0.0, 0.0))
        return peak

    def to_dict(self):
        return {"kind": "pow", "base": self.base.to_dict(), "exponent": self.exponent}


@dataclass(frozen=True)
class Quotient(Expr):
    num: Expr
    den: Expr
    kind = "quotient"

    def children(self):
        return (self.num, self.den)

    def _scalar(self, t, env):
        n = self.num._scalar(t, env)
        d = self.den._scalar(t, env)
        return _div(n, d)

    def _array(self, t, env):
        return self.num._array(t, env) / self.den._array(t, env)

    def bounds(self):
        return (-math.inf, math.inf)

    def _emit(self, ops, args, depth):
        p1 = self.num._emit(ops, args, depth)
        p2 = self.den._emit(ops, args, depth + 1)
        ops.append(OP_DIV)
        args.append((0.0, 0.0, 0.0))
        return max(p1, p2)

    def to_dict(self):
        return {"kind": "quotient", "num": self.num.to_dict(), "den": self.den.to_dict()}


_TIME_KINDS = (Constant, Sinusoid, ExpDecay, Sum, Product, Affine)


def _pow(b, e):
    # IEEE semantics (0**-x = inf) instead of Python's ZeroDivisionError
    if b == 0.0 and e < 0.0:
        return math.inf
    if b < 0.0 and e != math.floor(e):
        return math.nan
    try:
        return b ** e
    except OverflowError:
        return math.inf


def _div(n, d):
    if d == 0.0:
        if n == 0.0 or n != n:
            return math.nan
        return math.copysign(math.inf, n)
    return n / d


def _env_shapes(env):
    if not env:
        return ()
    return tuple(np.shape(v) for v in env.values())


TimeFunction = Expr


def const(v: float) -> Constant:
    return Constant(float(v))


# -- serialization ------------------------------------------------------------

def _num(doc, key, path):
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing field")
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{path}.{key}", "expected a number")
    v = float(v)
    if not math.isfinite(v):
        raise SchemaError(f"{path}.{key}", "expected a finite number")
    return v


def _node(doc, key, path):
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing field")
    return from_dict(doc[key], f"{path}.{key}")


def from_dict(doc, path: str = "$") -> Expr:
    """Parse the object form of an expression tree."""
    if not isinstance(doc, Mapping):
        raise SchemaError(path, "expected an expression object")
    kind = doc.get("kind")
    if kind == "const":
        return Constant(_num(doc, "value", path))
    if kind == "sin":
        return Sinusoid(_num(doc, "amp", path), _num(doc, "omega", path),
                        _num(doc, "phase", path) if "phase" in doc else 0.0)
    if kind == "expdecay":
        rate = _num(doc, "rate", path)
        if rate < 0:
            raise SchemaError(f"{path}.rate", "must be >= 0")
        return ExpDecay(rate)
    if kind in ("sum", "product"):
        items = doc.get("args")
        if not isinstance(items, list):
            raise SchemaError(f"{path}.args", "expected a list")
        children = tuple(from_dict(a, f"{path}.args.{i}") for i, a in enumerate(items))
        return Sum(children) if kind == "sum" else Product(children)
    if kind == "affine":
        return Affine(_num(doc, "scale", path), _num(doc, "offset", path) if "offset" in doc else 0.0,
                      _node(doc, "arg", path))
    if kind == "var":
        name = doc.get("name")
        if name not in VAR_INDEX:
            raise SchemaError(f"{path}.name", f"unknown variable {name!r}")
        return Var(name)
    if kind == "pow":
        return Power(_node(doc, "base", path), _num(doc, "exponent", path))
    if kind == "quotient":
        return Quotient(_node(doc, "num", path), _node(doc, "den", path))
    raise SchemaError(f"{path}.kind", f"unknown expression kind {kind!r}")


# -- validation helpers -------------------------------------------------------

def find_negative(f: Expr, horizon: float, n: int = 10_000) -> float | None:
    """First sampled t in [0, horizon] with f(t) < 0, or None."""
    ts = np.linspace(0.0, horizon, n)
    vals = f(ts)
    bad = np.flatnonzero(~(vals >= 0.0))
    if bad.size:
        return float(ts[bad[0]])
    return None


def slowest_period(trees: Sequence[Expr]) -> float | None:
    omegas = [w for f in trees for w in f.omegas()]
    if not omegas:
        return None
    return 2.0 * math.pi / min(omegas)


# -- quadrature and window statistics ------------------------------------------

def _panel_edges(t: float, lam: float, h: float) -> np.ndarray:
    n_full = lam / h
    k = int(round(n_full))
    if abs(n_full - k) <= 1e-9 * max(1.0, n_full):
        edges = t + h * np.arange(k + 1)
        edges[-1] = t + lam
        return edges
    k = int(math.floor(n_full))
    return np.append(t + h * np.arange(k + 1), t + lam)


def simpson_panels(f: Callable, edges: np.ndarray) -> np.ndarray:
    """Per-panel Simpson integrals over consecutive ``edges``."""
    a, b = edges[:-1], edges[1:]
    fa = np.asarray(f(a), dtype=float)
    fm = np.asarray(f(0.5 * (a + b)), dtype=float)
    fb = np.asarray(f(b), dtype=float)
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def window_integral(f: Callable, t: float, lam: float, quadrature_step: float) -> float:
    """Composite Simpson approximation of the integral of f over [t, t+lam].

    Panels have width ``quadrature_step``; the last one is shortened to end
    exactly at ``t + lam``.
    """
    if not lam > 0:
        raise ValueError("window length must be > 0")
    if not quadrature_step > 0:
        raise ValueError("quadrature_step must be > 0")
    edges = _panel_edges(float(t), float(lam), float(quadrature_step))
    panels = simpson_panels(f, edges)
    total = float(np.sum(panels))
    if not math.isfinite(total):
        raise QuadratureError(f"non-finite integrand on [{t}, {t + lam}]")
    return total


@dataclass(frozen=True)
class WindowStatConfig:
    lam: float
    burn_in: float = 1000.0
    scan_length: float | None = None
    t_step: float | None = None
    quadrature_step: float | None = None

    def __post_init__(self):
        if self.scan_length is None:
            object.__setattr__(self, "scan_length", 10.0 * self.lam)
        if self.t_step is None:
            object.__setattr__(self, "t_step", self.lam / 64.0)
        if self.quadrature_step is None:
            object.__setattr__(self, "quadrature_step", self.t_step)

    @classmethod
    def default(cls, lam: float, trees: Sequence[Expr] = (), burn_in: float = 1000.0,
                **overrides) -> "WindowStatConfig":
        period = slowest_period(trees)
        scan = 10.0 * lam if period is None else max(10.0 * lam, 5.0 * period)
        kw = dict(lam=lam, burn_in=burn_in, scan_length=scan)
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kw)

    def problems(self) -> list[str]:
        out = []
        if not self.lam > 0:
            out.append("window length must be > 0")
        if not self.burn_in >= 0:
            out.append("burn_in must be >= 0")
        if not self.scan_length >= 10.0 * self.lam * (1 - 1e-12):
            out.append("scan_length must be >= 10 * window length")
        if not self.t_step <= self.lam / 8.0 * (1 + 1e-12) or not self.t_step > 0:
            out.append("t_step must lie in (0, window/8]")
        if not 0 < self.quadrature_step <= self.t_step * (1 + 1e-12):
            out.append("quadrature_step must lie in (0, t_step]")
        return out

    def validate(self) -> "WindowStatConfig":
        probs = self.problems()
        if probs:
            raise ValueError("invalid window configuration: " + "; ".join(probs))
        return self

    def scan_times(self) -> np.ndarray:
        n = int(math.floor(self.scan_length / self.t_step + 1e-9))
        return self.burn_in + self.t_step * np.arange(n + 1)

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "burn_in": self.burn_in, "scan_length": self.scan_length,
                "t_step": self.t_step, "quadrature_step": self.quadrature_step}


class WindowScan(NamedTuple):
    minimum: float
    argmin: float
    maximum: float
    argmax: float


class WindowStat(NamedTuple):
    value: float
    t: float


def _ratio(a: float, b: float) -> int | None:
    q = a / b
    k = int(round(q))
    if k >= 1 and abs(q - k) <= 1e-9 * max(1.0, q):
        return k
    return None


def scan_windows(integrand: Callable[[np.ndarray], np.ndarray], cfg: WindowStatConfig,
                 chunk: int = 2048) -> WindowScan:
    """Min and max of the window integrals over the configured scan grid.

    When the window and the outer step are whole multiples of the quadrature
    step all windows share one panel grid and are read off a cumulative sum.
    """
    cfg.validate()
    times = cfg.scan_times()
    h = cfg.quadrature_step
    m = _ratio(cfg.t_step, h)
    L = _ratio(cfg.lam, h)
    if m is not None and L is not None:
        n_panels = (len(times) - 1) * m + L
        edges = cfg.burn_in + h * np.arange(n_panels + 1)
        panels = simpson_panels(integrand, edges)
        cum = np.concatenate(([0.0], np.cumsum(panels)))
        idx = m * np.arange(len(times))
        vals = cum[idx + L] - cum[idx]
    else:
        vals = np.empty(len(times))
        k = int(math.floor(cfg.lam / h))
        offs = np.append(h * np.arange(k + 1), cfg.lam)
        if cfg.lam - offs[-2] <= 1e-12 * cfg.lam:
            offs = offs[:-1]
            offs[-1] = cfg.lam
        for start in range(0, len(times), chunk):
            tt = times[start:start + chunk, None]
            e = tt + offs[None, :]
            a, b = e[:, :-1], e[:, 1:]
            fa = np.asarray(integrand(a.ravel())).reshape(a.shape)
            fm = np.asarray(integrand((0.5 * (a + b)).ravel())).reshape(a.shape)
            fb = np.asarray(integrand(b.ravel())).reshape(a.shape)
            vals[start:start + chunk] = np.sum((b - a) / 6.0 * (fa + 4.0 * fm + fb), axis=1)
    if np.isnan(vals).any():
        raise QuadratureError("non-finite window integral during scan")
    imin = int(np.argmin(vals))
    imax = int(np.argmax(vals))
    return WindowScan(float(vals[imin]), float(times[imin]), float(vals[imax]), float(times[imax]))


def window_stats(f: Expr, cfg: WindowStatConfig) -> WindowScan:
    return scan_windows(f, cfg)


def liminf_window(f: Expr, cfg: WindowStatConfig) -> WindowStat:
    s = scan_windows(f, cfg)
    return WindowStat(s.minimum, s.argmin)


def limsup_window(f: Expr, cfg: WindowStatConfig) -> WindowStat:
    s = scan_windows(f, cfg)
    return WindowStat(s.maximum, s.argmax)
