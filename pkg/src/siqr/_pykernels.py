"""Pure-Python integration kernels.

Same contract as the compiled ``_kernels`` extension: packed stack programs
in, sampled trajectory out.  Programs are turned into nested closures once
per call so the step loop does not re-dispatch on opcodes.
"""
import math

import numpy as np

from .errors import IntegrationError

OP_CONST, OP_SIN, OP_EXP, OP_VAR, OP_ADD, OP_MUL, OP_AFFINE, OP_POW, OP_DIV = range(9)
COMPONENTS = ("S", "I", "Q", "R")
BACKEND = "python"

_sin = math.sin
_exp = math.exp


def _pow(b, e):
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


def _sum_of(kids):
    def f(t, y):
        s = 0.0
        for k in kids:
            s += k(t, y)
        return s
    return f


def _prod_of(kids):
    def f(t, y):
        s = 1.0
        for k in kids:
            s *= k(t, y)
        return s
    return f


def compile_closure(ops, args, start, length):
    """Closure ``f(t, y)`` for ``ops[start:start+length]``; y = (S, I, Q, R)."""
    if length == 0:
        return None
    stack = []
    for k in range(start, start + length):
        op = int(ops[k])
        a0, a1, a2 = float(args[k, 0]), float(args[k, 1]), float(args[k, 2])
        if op == OP_CONST:
            stack.append(lambda t, y, v=a0: v)
        elif op == OP_SIN:
            stack.append(lambda t, y, a=a0, w=a1, p=a2: a * _sin(w * t + p))
        elif op == OP_EXP:
            stack.append(lambda t, y, r=a0: _exp(-r * t))
        elif op == OP_VAR:
            i = int(a0)
            if i == 0:
                stack.append(lambda t, y: t)
            else:
                stack.append(lambda t, y, i=i - 1: y[i])
        elif op in (OP_ADD, OP_MUL):
            n = int(a0)
            kids = tuple(stack[len(stack) - n:]) if n else ()
            del stack[len(stack) - n:]
            stack.append(_sum_of(kids) if op == OP_ADD else _prod_of(kids))
        elif op == OP_AFFINE:
            c = stack.pop()
            stack.append(lambda t, y, c=c, s=a0, o=a1: s * c(t, y) + o)
        elif op == OP_POW:
            c = stack.pop()
            stack.append(lambda t, y, c=c, e=a0: _pow(c(t, y), e))
        elif op == OP_DIV:
            den = stack.pop()
            num = stack.pop()
            stack.append(lambda t, y, n=num, d=den: _div(n(t, y), d(t, y)))
        else:
            raise ValueError(f"unknown opcode {op}")
    if len(stack) != 1:
        raise ValueError("malformed program")
    return stack[0]


def eval_program(ops, args, t, S=0.0, I=0.0, Q=0.0, R=0.0):
    f = compile_closure(ops, args, 0, len(ops))
    return f(float(t), (float(S), float(I), float(Q), float(R)))


def make_rhs(ops, args, offsets, inc_code):
    """Right-hand side closure ``f(t, y) -> [S', I', Q', R']``."""
    progs = [compile_closure(ops, args, int(offsets[j, 0]), int(offsets[j, 1]))
             for j in range(10)]
    Lam, d_, gam, sig, al1, al2, eps, beta, psi, g = progs

    def rhs(t, y):
        S, I, Q, R = y
        b = beta(t, y)
        if inc_code == 0:
            phi = b * S * I
        elif inc_code == 3:
            if S == 0.0 or I == 0.0:
                phi = 0.0
            else:
                phi = b * psi(t, y) * g(t, y) * I
        else:
            den = S + I + Q if inc_code == 2 else S + I + Q + R
            phi = 0.0 if den == 0.0 else b * S * I / den
        d = d_(t, y)
        return [
            Lam(t, y) - phi - d * S,
            phi - (gam(t, y) + sig(t, y) + d + al1(t, y)) * I,
            sig(t, y) * I - (d + al2(t, y) + eps(t, y)) * Q,
            gam(t, y) * I + eps(t, y) * Q - d * R,
        ]

    return rhs


def rhs_eval(ops, args, offsets, inc_code, t, y):
    return np.array(make_rhs(ops, args, offsets, inc_code)(float(t), [float(v) for v in y]))


def _nonfinite(vec):
    for i, v in enumerate(vec):
        if not math.isfinite(v):
            return i
    return -1


def _initial_step(f, t0, y0, f0, rtol, atol, order=5):
    # explicit accumulation keeps the rounding identical to the compiled kernel
    sc = [atol + rtol * abs(v) for v in y0]
    d0 = d1 = 0.0
    for i in range(4):
        d0 += (y0[i] / sc[i]) * (y0[i] / sc[i])
        d1 += (f0[i] / sc[i]) * (f0[i] / sc[i])
    d0 = math.sqrt(d0 / 4)
    d1 = math.sqrt(d1 / 4)
    if not math.isfinite(d1):
        return 1e-6
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = [y0[i] + h0 * f0[i] for i in range(4)]
    f1 = f(t0 + h0, y1)
    d2 = 0.0
    for i in range(4):
        e = (f1[i] - f0[i]) / sc[i]
        d2 += e * e
    d2 = math.sqrt(d2 / 4) / h0
    if not math.isfinite(d2):
        return h0
    m = max(d1, d2)
    h1 = max(1e-6, h0 * 1e-3) if m <= 1e-15 else (0.01 / m) ** (1.0 / order)
    return min(100 * h0, h1)


def sample_times(t0, t_end, stride):
    n = int(math.floor((t_end - t0) / stride + 1e-9))
    ts = t0 + stride * np.arange(n + 1)
    if t_end - ts[-1] > 1e-9 * stride:
        ts = np.append(ts, t_end)
    return ts


# Dormand-Prince 5(4)
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200,
                          22 / 525, -1 / 40)


def integrate_rk45(ops, args, offsets, inc_code, y0, t0, t_end, stride,
                   rtol, atol, h_min, h_max, pos_tol, rel_guard, guard_floor):
    f = make_rhs(ops, args, offsets, inc_code)
    times = sample_times(t0, t_end, stride)
    out = np.empty((len(times), 4))
    y = [float(v) for v in y0]
    out[0] = y
    t = float(t0)
    k1 = f(t, y)
    nfev = 1
    if _nonfinite(k1) >= 0:
        raise IntegrationError(t, "non-finite derivative", COMPONENTS[_nonfinite(k1)])
    h_prop = min(h_max, max(h_min, _initial_step(f, t, y, k1, rtol, atol)))
    nfev += 1
    steps = rejections = clamps = 0
    min_step = math.inf
    min_land = math.inf
    k = 1
    n = len(times)
    while k < n:
        ts = float(times[k])
        gap = ts - t
        if h_prop >= gap * (1.0 - 1e-12):
            h, land = gap, True
        else:
            h, land = h_prop, False
        y2 = [y[i] + h * (A21 * k1[i]) for i in range(4)]
        k2 = f(t + h / 5, y2)
        y3 = [y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in range(4)]
        k3 = f(t + 3 * h / 10, y3)
        y4 = [y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in range(4)]
        k4 = f(t + 4 * h / 5, y4)
        y5 = [y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]) for i in range(4)]
        k5 = f(t + 8 * h / 9, y5)
        y6 = [y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
              for i in range(4)]
        k6 = f(t + h, y6)
        yn = [y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
              for i in range(4)]
        k7 = f(t + h, yn)
        nfev += 6
        err_vec = [h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
                   for i in range(4)]
        bad = _nonfinite(yn)
        if bad < 0:
            bad = _nonfinite(err_vec)
        reason = None
        if bad >= 0:
            reason, factor = f"non-finite state in component {COMPONENTS[bad]}", 0.5
        else:
            neg = -1
            for i in range(4):
                if yn[i] < -pos_tol:
                    neg = i
                    break
            if neg >= 0:
                reason, factor = f"positivity violated in component {COMPONENTS[neg]}", 0.5
            else:
                err = 0.0
                for i in range(4):
                    m = max(abs(y[i]), abs(yn[i]))
                    e = abs(err_vec[i])
                    r = e / (atol + rtol * m)
                    if m > guard_floor:
                        r = max(r, e / (rel_guard * m))
                    if r > err:
                        err = r
                if err > 1.0:
                    reason, factor = "error estimate", max(0.2, 0.9 * err ** -0.2)
        if reason is not None:
            rejections += 1
            h_new = h * factor
            if h_new < h_min:
                comp = COMPONENTS[bad] if bad >= 0 else None
                raise IntegrationError(t, f"step size underflow (h={h_new!r} < h_min={h_min!r}; "
                                          f"last rejection: {reason})", comp)
            h_prop = h_new
            continue
        clamped = False
        for i in range(4):
            if yn[i] < 0.0:
                yn[i] = 0.0
                clamped = True
        if clamped:
            clamps += 1
        t = ts if land else t + h
        y = yn
        if clamped:
            k1 = f(t, y)
            nfev += 1
        else:
            k1 = k7
        steps += 1
        if land and h < h_prop:
            min_land = min(min_land, h)
        else:
            min_step = min(min_step, h)
        factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        h_next = h * factor
        if land and h < h_prop:
            h_next = h_prop if factor >= 1.0 else min(h_prop, h_next)
        h_prop = min(h_max, max(h_min, h_next))
        if land:
            out[k] = y
            k += 1
    if min_step == math.inf:
        min_step = min_land
    stats = {"steps": steps, "rejections": rejections, "min_step": min_step,
             "clamps": clamps, "rhs_evals": nfev}
    return times, out, stats


def integrate_rk4(ops, args, offsets, inc_code, y0, t0, t_end, stride, h_fixed, pos_tol):
    f = make_rhs(ops, args, offsets, inc_code)
    times = sample_times(t0, t_end, stride)
    out = np.empty((len(times), 4))
    y = [float(v) for v in y0]
    out[0] = y
    t = float(t0)
    steps = clamps = nfev = 0
    min_step = math.inf
    k = 1
    n = len(times)
    while k < n:
        ts = float(times[k])
        gap = ts - t
        if h_fixed >= gap - 1e-9 * h_fixed:
            h, land = gap, True
        else:
            h, land = h_fixed, False
        k1 = f(t, y)
        k2 = f(t + h / 2, [y[i] + h / 2 * k1[i] for i in range(4)])
        k3 = f(t + h / 2, [y[i] + h / 2 * k2[i] for i in range(4)])
        k4 = f(t + h, [y[i] + h * k3[i] for i in range(4)])
        nfev += 4
        yn = [y[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(4)]
        bad = _nonfinite(yn)
        if bad >= 0:
            raise IntegrationError(t, "non-finite state", COMPONENTS[bad])
        clamped = False
        for i in range(4):
            if yn[i] < -pos_tol:
                raise IntegrationError(t, "positivity violated in fixed-step mode", COMPONENTS[i])
            if yn[i] < 0.0:
                yn[i] = 0.0
                clamped = True
        if clamped:
            clamps += 1
        t = ts if land else t + h
        y = yn
        steps += 1
        min_step = min(min_step, h)
        if land:
            out[k] = y
            k += 1
    stats = {"steps": steps, "rejections": 0, "min_step": min_step,
             "clamps": clamps, "rhs_evals": nfev}
    return times, out, stats


def aux_recurrence(a, c, x0):
    """x[0] = x0, x[j+1] = a[j] * x[j] + c[j]."""
    a = np.asarray(a, dtype=float).tolist()
    c = np.asarray(c, dtype=float).tolist()
    out = [float(x0)]
    v = out[0]
    for aj, cj in zip(a, c):
        v = aj * v + cj
        out.append(v)
    return np.array(out)
