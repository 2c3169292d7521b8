"""Initial-value integrators for the SIQR system.

Both integrators run inside the kernel backend selected by ``siqr._backend``.
The model is packed once into flat stack programs, so a run never calls back
into Python per step on the compiled path.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import _backend
from .errors import IntegrationError, ProbeInvalid, SchemaError
from .model import (COMPARTMENTS, PARAM_NAMES, Incidence, MassAction, ParameterSet, PsiG,
                    QuarantineAdjusted, Standard, State)
from .timefn import Constant

INC_CODES = {"mass_action": 0, "standard": 1, "quarantine_adjusted": 2, "psi_g": 3}
METHODS = ("rk45", "rk4")


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator settings.

    ``h`` is the fixed step for rk4 and is ignored by rk45.  ``rel_guard``
    caps the relative local error of each component that is above
    ``guard_floor`` in magnitude, which keeps decaying tails accurate long
    after they drop below ``atol``.
    """

    method: str = "rk45"
    t_end: float = 100.0
    sample_stride: float = 1.0
    h: float = 0.01
    rtol: float = 1e-8
    atol: float = 1e-12
    h_min: float = 1e-10
    h_max: float = 1.0
    positivity_tolerance: float = 1e-10
    rel_guard: float = 1e-6
    guard_floor: float = 1e-200

    def problems(self) -> list[str]:
        out = []
        if self.method not in METHODS:
            out.append(f"method must be one of {METHODS}, got {self.method!r}")
        for name in ("t_end", "sample_stride", "h", "rtol", "atol", "h_min", "h_max",
                     "rel_guard"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                out.append(f"{name} must be finite and > 0, got {v!r}")
        if not self.positivity_tolerance >= 0:
            out.append("positivity_tolerance must be >= 0")
        if not self.guard_floor >= 0:
            out.append("guard_floor must be >= 0")
        if not out and self.h_min > self.h_max:
            out.append("h_min must not exceed h_max")
        return out

    def validate(self) -> "IntegratorConfig":
        errs = self.problems()
        if errs:
            raise ValueError("; ".join(errs))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping, path: str = "integrator") -> "IntegratorConfig":
        if not isinstance(doc, Mapping):
            raise SchemaError(path, "expected an object")
        known = {f for f in cls.__dataclass_fields__}
        kw = {}
        for k, v in doc.items():
            key = "positivity_tolerance" if k == "pos_tol" else k
            if key not in known:
                raise SchemaError(f"{path}.{k}", "unknown field")
            if key == "method":
                m = str(v).lower().replace("-", "").replace("_", "")
                m = {"rk45": "rk45", "rk45adaptive": "rk45", "adaptive": "rk45",
                     "rk4": "rk4", "rk4fixed": "rk4", "fixed": "rk4"}.get(m)
                if m is None:
                    raise SchemaError(f"{path}.method", f"unknown method {v!r}")
                kw[key] = m
                continue
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{path}.{k}", "expected a number")
            kw[key] = float(v)
        cfg = cls(**kw)
        errs = cfg.problems()
        if errs:
            raise SchemaError(path, "; ".join(errs))
        return cfg


@dataclass(frozen=True)
class PackedModel:
    ops: np.ndarray
    args: np.ndarray
    offsets: np.ndarray
    inc_code: int


def pack_model(p: ParameterSet, inc: Incidence) -> PackedModel:
    """Flatten coefficients and incidence into one program table for the kernels.

    Program slots: Lambda, d, gamma, sigma, alpha1, alpha2, eps, beta, psi, g.
    """
    if isinstance(inc, PsiG):
        extra = [inc.beta, inc.psi, inc.g]
    elif isinstance(inc, (MassAction, Standard, QuarantineAdjusted)):
        extra = [inc.beta, None, None]
    else:
        raise TypeError(f"unsupported incidence {type(inc).__name__}")
    trees = [getattr(p, n) for n in PARAM_NAMES] + extra
    ops, args, offsets = [], [], np.zeros((10, 2), dtype=np.int64)
    pos = 0
    for j, tree in enumerate(trees):
        if tree is None:
            offsets[j] = (pos, 0)
            continue
        o, a = tree.compile()
        ops.append(o)
        args.append(a)
        offsets[j] = (pos, len(o))
        pos += len(o)
    return PackedModel(np.concatenate(ops).astype(np.int32),
                       np.ascontiguousarray(np.concatenate(args, axis=0), dtype=np.float64),
                       offsets, INC_CODES[inc.kind])


@dataclass
class Trajectory:
    """Samples at t0, t0 + stride, ... (t_end appended when off-grid)."""

    t: np.ndarray
    y: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def S(self):
        return self.y[:, 0]

    @property
    def I(self):
        return self.y[:, 1]

    @property
    def Q(self):
        return self.y[:, 2]

    @property
    def R(self):
        return self.y[:, 3]

    @property
    def N(self):
        return self.y[:, 0] + self.y[:, 1] + self.y[:, 2] + self.y[:, 3]

    def __len__(self):
        return len(self.t)

    def state(self, k: int) -> State:
        S, I, Q, R = (float(v) for v in self.y[k])
        return State(S, I, Q, R, float(self.t[k]))

    @property
    def final(self) -> State:
        return self.state(len(self.t) - 1)

    def trailing(self, fraction: float) -> np.ndarray:
        """Mask of samples in the last ``fraction`` of the time span."""
        t0, t1 = self.t[0], self.t[-1]
        return self.t >= t1 - fraction * (t1 - t0)

    def to_csv(self, target=None) -> str:
        """CSV with header ``t,S,I,Q,R,N``; floats in shortest round-trip form."""
        buf = io.StringIO()
        buf.write("t,S,I,Q,R,N\n")
        for tk, row, n in zip(self.t.tolist(), self.y.tolist(), self.N.tolist()):
            buf.write(",".join(repr(float(v)) for v in (tk, *row, n)))
            buf.write("\n")
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text


def integrate(p: ParameterSet, inc: Incidence, s0: State, cfg: IntegratorConfig,
              backend: str | None = None) -> Trajectory:
    """Integrate from ``s0`` (at time ``s0.t``) to ``cfg.t_end``."""
    cfg.validate()
    if not cfg.t_end > s0.t:
        raise ValueError("t_end must be after the initial time")
    k = _backend.get(backend)
    m = pack_model(p, inc)
    y0 = s0.as_array()
    if cfg.method == "rk45":
        t, y, stats = k.integrate_rk45(m.ops, m.args, m.offsets, m.inc_code, y0,
                                       float(s0.t), float(cfg.t_end), float(cfg.sample_stride),
                                       cfg.rtol, cfg.atol, cfg.h_min, cfg.h_max,
                                       cfg.positivity_tolerance, cfg.rel_guard, cfg.guard_floor)
    else:
        t, y, stats = k.integrate_rk4(m.ops, m.args, m.offsets, m.inc_code, y0,
                                      float(s0.t), float(cfg.t_end), float(cfg.sample_stride),
                                      cfg.h, cfg.positivity_tolerance)
    stats = dict(stats, backend=k.BACKEND, method=cfg.method)
    return Trajectory(np.asarray(t), np.asarray(y), stats)


@dataclass(frozen=True)
class ProbeResult:
    """Observed convergence order of fixed-step RK4.

    ``errors`` are max-norm endpoint errors at h, h/2, h/4; ``orders`` the
    log2 ratios of consecutive errors.  ``order`` is the finest ratio, or
    None when the status is "degenerate".
    """

    status: str
    order: float | None
    orders: tuple[float, ...]
    errors: tuple[float, ...]
    steps: tuple[float, ...]
    reference: str


def convergence_probe(p: ParameterSet, inc: Incidence, s0: State, h: float, t_end: float,
                      exact: Callable[[float], np.ndarray] | None = None,
                      backend: str | None = None) -> ProbeResult:
    """Self-convergence (against h/8) or exact-solution convergence of RK4."""
    def end(step):
        cfg = IntegratorConfig(method="rk4", h=step, t_end=t_end, sample_stride=t_end - s0.t)
        traj = integrate(p, inc, s0, cfg, backend)
        if traj.stats["clamps"]:
            raise ProbeInvalid(f"clamping occurred at step {step!r}; the probe needs a smooth run")
        return traj.y[-1]

    steps = (h, h / 2, h / 4)
    ends = [end(s) for s in steps]
    if exact is None:
        ref = end(h / 8)
        label = "h/8"
    else:
        ref = np.asarray(exact(t_end), dtype=float)
        label = "exact"
    errs = tuple(float(np.max(np.abs(e - ref))) for e in ends)
    scale = max(1.0, float(np.max(np.abs(ref))))
    if max(errs) <= 1e-14 * scale:
        return ProbeResult("degenerate", None, (), errs, steps, label)
    if min(errs) == 0.0:
        raise ProbeInvalid("an error vanished before the others; ratios undefined")
    orders = tuple(math.log2(errs[i] / errs[i + 1]) for i in range(2))
    return ProbeResult("ok", orders[-1], orders, errs, steps, label)


def linear_decay_model(rate: float = 1.0) -> tuple[ParameterSet, Incidence]:
    """The decoupled test problem S' = -rate * S (no inflow, no incidence)."""
    p = ParameterSet.constant(Lambda=0.0, d=rate, gamma=0.0, sigma=0.0)
    return p, MassAction(Constant(0.0))


__all__ = ["IntegratorConfig", "Trajectory", "PackedModel", "ProbeResult", "pack_model",
           "integrate", "convergence_probe", "linear_decay_model", "IntegrationError",
           "COMPARTMENTS"]
