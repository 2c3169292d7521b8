"""Sampled checks of the standing incidence hypotheses H1-H4.

Points are written (t, x, y, w, z) = (t, S, R, Q, I).  A sampled checker can
only falsify: PASS means no violation was found on the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LinearizationUndefined
from .model import Incidence

PASS, FAIL = "PASS", "FAIL"
_REL = 1e-9


@dataclass(frozen=True)
class HypothesisGrid:
    n_state: int = 33
    n_time: int = 5
    n_delta: int = 9
    n_sub: int = 9
    tau_factor: float = 3.0


@dataclass
class HypothesisReport:
    verdicts: dict[str, str]
    witnesses: dict[str, list[dict]]
    K_theta: float
    N: float
    theta: float
    K: float
    times: tuple[float, ...]
    grid: HypothesisGrid = field(default_factory=HypothesisGrid)

    @property
    def passed(self) -> bool:
        return all(v == PASS for v in self.verdicts.values())

    def failures(self) -> list[str]:
        out = []
        for h, v in self.verdicts.items():
            if v == FAIL:
                w = self.witnesses[h][0]
                out.append(f"{h} violated at {w}")
        return out

    def to_dict(self) -> dict:
        return {"verdicts": dict(self.verdicts), "witnesses": self.witnesses,
                "K_theta": self.K_theta, "N": self.N, "theta": self.theta, "K": self.K,
                "times": list(self.times), "tau_factor": self.grid.tau_factor}


def _witness(t, x, y, w, z, **extra):
    out = {"t": float(t), "S": float(x), "R": float(y), "Q": float(w), "I": float(z)}
    out.update({k: float(v) for k, v in extra.items()})
    return out


def _phi(inc, t, x, y, w, z):
    # incidence call order is (t, S, I, Q, R)
    with np.errstate(all="ignore"):
        return np.asarray(inc(t, x, z, w, y), dtype=float)


def default_times(inc: Incidence, n: int = 5) -> np.ndarray:
    omegas = [w for f in inc.time_functions() for w in f.omegas()]
    horizon = 2 * math.pi / min(omegas) if omegas else 10.0
    return np.linspace(0.0, horizon, n)


def check_hypotheses(inc: Incidence, theta: float, K: float,
                     grid: HypothesisGrid | None = None,
                     times=None, max_witnesses: int = 3) -> HypothesisReport:
    """Sample Delta_{theta,K} and a time grid and test H1-H4."""
    if not 0 < theta < K:
        raise ValueError("need 0 < theta < K")
    grid = grid or HypothesisGrid()
    ts = np.asarray(default_times(inc, grid.n_time) if times is None else times, dtype=float)
    verdicts = {h: PASS for h in ("H1", "H2", "H3", "H4")}
    wit: dict[str, list[dict]] = {h: [] for h in verdicts}

    def fail(h, wd):
        verdicts[h] = FAIL
        if len(wit[h]) < max_witnesses:
            wit[h].append(wd)

    xs = np.linspace(0.0, K, grid.n_state)
    others = np.linspace(0.0, K, grid.n_state)
    X = xs[:, None, None, None]
    Y = others[None, :, None, None]
    W = others[None, None, :, None]
    Z = others[None, None, None, :]
    xs_th = np.linspace(theta, K, grid.n_state)
    k_theta = 0.0

    for t in ts:
        # H1: phi(t, 0, .) = 0 and nondecreasing in x
        f = _phi(inc, t, X, Y, W, Z)
        f = np.broadcast_to(f, (len(xs), len(others), len(others), len(others)))
        bad = ~np.isfinite(f)
        if bad.any():
            i, j, k, l = np.argwhere(bad)[0]
            fail("H1", _witness(t, xs[i], others[j], others[k], others[l], phi=f[i, j, k, l]))
            continue
        scale = max(1.0, float(np.max(np.abs(f))))
        zero = np.abs(f[0]) > _REL * scale
        if zero.any():
            j, k, l = np.argwhere(zero)[0]
            fail("H1", _witness(t, 0.0, others[j], others[k], others[l], phi=f[0, j, k, l]))
        drop = np.diff(f, axis=0) < -_REL * scale
        if drop.any():
            i, j, k, l = np.argwhere(drop)[0]
            fail("H1", _witness(t, xs[i + 1], others[j], others[k], others[l],
                                phi=f[i + 1, j, k, l], phi_prev=f[i, j, k, l]))

        # H2: Lipschitz in x on Delta_{theta,K}, scaled by z
        g = np.broadcast_to(_phi(inc, t, xs_th[:, None, None, None], Y, W, Z),
                            (len(xs_th), len(others), len(others), len(others)))
        dx = np.diff(xs_th)[:, None, None, None]
        with np.errstate(all="ignore"):
            ratio = np.abs(np.diff(g, axis=0)) / (dx * Z)
        ratio = ratio[..., 1:]  # z > 0
        if not np.all(np.isfinite(ratio)):
            i, j, k, l = np.argwhere(~np.isfinite(ratio))[0]
            fail("H2", _witness(t, xs_th[i], others[j], others[k], others[l + 1]))
        elif ratio.size:
            k_theta = max(k_theta, float(np.max(ratio)))

    # H3 / H4 on the small-infective boxes and on the whole box
    deltas = K * 2.0 ** -np.arange(grid.n_delta)
    n_est = 0.0
    xs_pos = xs[1:]
    for t in ts:
        try:
            _, upper = inc.linearized(t, xs_pos)
            upper = np.broadcast_to(np.asarray(upper, dtype=float), xs_pos.shape)
        except LinearizationUndefined as exc:
            fail("H4", _witness(t, xs_pos[0], 0.0, 0.0, 0.0, upper=math.inf) | {"reason": str(exc)})
            upper = None
        for dl in deltas:
            sub = dl * np.arange(1, grid.n_sub + 1) / grid.n_sub
            taus = grid.tau_factor * dl * np.arange(1, grid.n_sub + 1) / grid.n_sub
            with np.errstate(all="ignore"):
                inf_tau = np.min(_phi(inc, t, xs_pos[:, None], 0.0, 0.0, taus[None, :])
                                 / taus[None, :], axis=1)
                vals = (_phi(inc, t, xs_pos[:, None, None, None], sub[None, :, None, None],
                             sub[None, None, :, None], sub[None, None, None, :])
                        / sub[None, None, None, :])
            vals = np.broadcast_to(vals, (len(xs_pos), len(sub), len(sub), len(sub)))
            if not np.all(np.isfinite(vals)):
                i, j, k, l = np.argwhere(~np.isfinite(vals))[0]
                fail("H3", _witness(t, xs_pos[i], sub[j], sub[k], sub[l], ratio=vals[i, j, k, l]))
                continue
            n_est = max(n_est, float(np.max(vals)))
            lo = inf_tau[:, None, None, None] > vals * (1 + _REL) + _REL
            if lo.any():
                i, j, k, l = np.argwhere(lo)[0]
                fail("H3", _witness(t, xs_pos[i], sub[j], sub[k], sub[l],
                                    ratio=vals[i, j, k, l], inf_tau=inf_tau[i]))
        if upper is None:
            continue
        if not np.all(np.isfinite(upper)):
            i = int(np.argmax(~np.isfinite(upper)))
            fail("H4", _witness(t, xs_pos[i], 0.0, 0.0, 0.0, upper=upper[i]))
            continue
        full = others[1:]
        with np.errstate(all="ignore"):
            vals = (_phi(inc, t, xs_pos[:, None, None, None], full[None, :, None, None],
                         full[None, None, :, None], full[None, None, None, :])
                    / full[None, None, None, :])
        vals = np.broadcast_to(vals, (len(xs_pos), len(full), len(full), len(full)))
        over = ~(vals <= upper[:, None, None, None] * (1 + _REL) + _REL)
        if over.any():
            i, j, k, l = np.argwhere(over)[0]
            fail("H4", _witness(t, xs_pos[i], full[j], full[k], full[l],
                                ratio=vals[i, j, k, l], upper=upper[i]))

    return HypothesisReport(verdicts, wit, k_theta, n_est, float(theta), float(K),
                            tuple(float(t) for t in ts), grid)
