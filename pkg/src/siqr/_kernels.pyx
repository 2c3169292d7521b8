# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled integration kernels (same contract as ``_pykernels``)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, exp, pow, sqrt, floor, fabs, isfinite, INFINITY, NAN, copysign

from .errors import IntegrationError

cnp.import_array()

BACKEND = "compiled"
COMPONENTS = ("S", "I", "Q", "R")

DEF MAX_STACK = 64

cdef enum:
    OP_CONST = 0
    OP_SIN = 1
    OP_EXP = 2
    OP_VAR = 3
    OP_ADD = 4
    OP_MUL = 5
    OP_AFFINE = 6
    OP_POW = 7
    OP_DIV = 8


cdef struct Model:
    const int* ops
    const double* args
    const long* offsets
    int inc_code


cdef double run_prog(const int* ops, const double* args, long start, long length,
                     double t, const double* y) noexcept nogil:
    cdef double stack[MAX_STACK]
    cdef int sp = 0
    cdef long k
    cdef int n, j
    cdef double s, x, e, num, den
    cdef const double* a
    for k in range(start, start + length):
        a = args + 3 * k
        op = ops[k]
        if op == OP_CONST:
            stack[sp] = a[0]
            sp += 1
        elif op == OP_SIN:
            stack[sp] = a[0] * sin(a[1] * t + a[2])
            sp += 1
        elif op == OP_EXP:
            stack[sp] = exp(-a[0] * t)
            sp += 1
        elif op == OP_VAR:
            n = <int>a[0]
            stack[sp] = t if n == 0 else y[n - 1]
            sp += 1
        elif op == OP_ADD:
            n = <int>a[0]
            s = 0.0
            for j in range(sp - n, sp):
                s += stack[j]
            sp -= n
            stack[sp] = s
            sp += 1
        elif op == OP_MUL:
            n = <int>a[0]
            s = 1.0
            for j in range(sp - n, sp):
                s *= stack[j]
            sp -= n
            stack[sp] = s
            sp += 1
        elif op == OP_AFFINE:
            stack[sp - 1] = a[0] * stack[sp - 1] + a[1]
        elif op == OP_POW:
            x = stack[sp - 1]
            e = a[0]
            if x == 0.0 and e < 0.0:
                stack[sp - 1] = INFINITY
            elif x < 0.0 and e != floor(e):
                stack[sp - 1] = NAN
            else:
                stack[sp - 1] = pow(x, e)
        elif op == OP_DIV:
            den = stack[sp - 1]
            num = stack[sp - 2]
            sp -= 1
            if den == 0.0:
                if num == 0.0 or num != num:
                    stack[sp - 1] = NAN
                else:
                    stack[sp - 1] = copysign(INFINITY, num)
            else:
                stack[sp - 1] = num / den
    return stack[0]


cdef inline double prog(const Model* m, int j, double t, const double* y) noexcept nogil:
    return run_prog(m.ops, m.args, m.offsets[2 * j], m.offsets[2 * j + 1], t, y)


cdef void model_rhs(const Model* m, double t, const double* y, double* out) noexcept nogil:
    cdef double S = y[0], I = y[1], Q = y[2], R = y[3]
    cdef double b = prog(m, 7, t, y)
    cdef double phi, den, d
    if m.inc_code == 0:
        phi = b * S * I
    elif m.inc_code == 3:
        if S == 0.0 or I == 0.0:
            phi = 0.0
        else:
            phi = b * prog(m, 8, t, y) * prog(m, 9, t, y) * I
    else:
        if m.inc_code == 2:
            den = S + I + Q
        else:
            den = S + I + Q + R
        phi = 0.0 if den == 0.0 else b * S * I / den
    d = prog(m, 1, t, y)
    out[0] = prog(m, 0, t, y) - phi - d * S
    out[1] = phi - (prog(m, 2, t, y) + prog(m, 3, t, y) + d + prog(m, 4, t, y)) * I
    out[2] = prog(m, 3, t, y) * I - (d + prog(m, 5, t, y) + prog(m, 6, t, y)) * Q
    out[3] = prog(m, 2, t, y) * I + prog(m, 6, t, y) * Q - d * R


cdef int nonfinite(const double* v) noexcept nogil:
    cdef int i
    for i in range(4):
        if not isfinite(v[i]):
            return i
    return -1


cdef class _Packed:
    cdef cnp.ndarray ops, args, offsets
    cdef Model m

    def __init__(self, ops, args, offsets, int inc_code):
        self.ops = np.ascontiguousarray(ops, dtype=np.int32)
        self.args = np.ascontiguousarray(args, dtype=np.float64).reshape(-1, 3)
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64).reshape(10, 2)
        if self.ops.shape[0] == 0:
            raise ValueError("empty model program")
        self.m.ops = <const int*>cnp.PyArray_DATA(self.ops)
        self.m.args = <const double*>cnp.PyArray_DATA(self.args)
        self.m.offsets = <const long*>cnp.PyArray_DATA(self.offsets)
        self.m.inc_code = inc_code


def eval_program(ops, args, double t, double S=0.0, double I=0.0, double Q=0.0, double R=0.0):
    cdef cnp.ndarray o = np.ascontiguousarray(ops, dtype=np.int32)
    cdef cnp.ndarray a = np.ascontiguousarray(args, dtype=np.float64).reshape(-1, 3)
    cdef double y[4]
    y[0] = S; y[1] = I; y[2] = Q; y[3] = R
    return run_prog(<const int*>cnp.PyArray_DATA(o), <const double*>cnp.PyArray_DATA(a),
                    0, o.shape[0], t, y)


def rhs_eval(ops, args, offsets, int inc_code, double t, y):
    cdef _Packed p = _Packed(ops, args, offsets, inc_code)
    cdef double yy[4]
    cdef double out[4]
    for i in range(4):
        yy[i] = y[i]
    model_rhs(&p.m, t, yy, out)
    return np.array([out[0], out[1], out[2], out[3]])


def sample_times(double t0, double t_end, double stride):
    cdef long n = <long>floor((t_end - t0) / stride + 1e-9)
    ts = t0 + stride * np.arange(n + 1)
    if t_end - ts[-1] > 1e-9 * stride:
        ts = np.append(ts, t_end)
    return ts


cdef double initial_step(const Model* m, double t0, const double* y0, const double* f0,
                         double rtol, double atol) noexcept nogil:
    cdef double sc[4]
    cdef double y1[4]
    cdef double f1[4]
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, h0, h1, mx, e
    cdef int i
    for i in range(4):
        sc[i] = atol + rtol * fabs(y0[i])
        d0 += (y0[i] / sc[i]) * (y0[i] / sc[i])
        d1 += (f0[i] / sc[i]) * (f0[i] / sc[i])
    d0 = sqrt(d0 / 4)
    d1 = sqrt(d1 / 4)
    if not isfinite(d1):
        return 1e-6
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    for i in range(4):
        y1[i] = y0[i] + h0 * f0[i]
    model_rhs(m, t0 + h0, y1, f1)
    for i in range(4):
        e = (f1[i] - f0[i]) / sc[i]
        d2 += e * e
    d2 = sqrt(d2 / 4) / h0
    if not isfinite(d2):
        return h0
    mx = d1 if d1 > d2 else d2
    if mx <= 1e-15:
        h1 = h0 * 1e-3
        if h1 < 1e-6:
            h1 = 1e-6
    else:
        h1 = pow(0.01 / mx, 1.0 / 5)
    return 100 * h0 if 100 * h0 < h1 else h1


# Dormand-Prince 5(4)
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200
cdef double E6 = 22.0 / 525, E7 = -1.0 / 40


def integrate_rk45(ops, args, offsets, int inc_code, y0, double t0, double t_end, double stride,
                   double rtol, double atol, double h_min, double h_max, double pos_tol,
                   double rel_guard, double guard_floor):
    cdef _Packed p = _Packed(ops, args, offsets, inc_code)
    cdef const Model* m = &p.m
    times_arr = sample_times(t0, t_end, stride)
    cdef double[::1] times = times_arr
    cdef long n = times.shape[0]
    out_arr = np.empty((n, 4))
    cdef double[:, ::1] out = out_arr
    cdef double y[4]
    cdef double yt[4]
    cdef double yn[4]
    cdef double ev[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double k5[4]
    cdef double k6[4]
    cdef double k7[4]
    cdef double t = t0, ts, gap, h, h_prop, h_new, h_next, factor, err, mm, e, r
    cdef int i, bad, neg, land, clamped, reason
    cdef long k = 1, steps = 0, rejections = 0, clamps = 0, nfev = 1
    cdef double min_step = INFINITY, min_land = INFINITY
    for i in range(4):
        y[i] = y0[i]
        out[0, i] = y[i]
    model_rhs(m, t, y, k1)
    bad = nonfinite(k1)
    if bad >= 0:
        raise IntegrationError(t, "non-finite derivative", COMPONENTS[bad])
    h_prop = initial_step(m, t, y, k1, rtol, atol)
    h_prop = h_max if h_prop > h_max else (h_min if h_prop < h_min else h_prop)
    nfev += 1
    while k < n:
        ts = times[k]
        gap = ts - t
        if h_prop >= gap * (1.0 - 1e-12):
            h = gap
            land = 1
        else:
            h = h_prop
            land = 0
        for i in range(4):
            yt[i] = y[i] + h * (A21 * k1[i])
        model_rhs(m, t + h / 5, yt, k2)
        for i in range(4):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        model_rhs(m, t + 3 * h / 10, yt, k3)
        for i in range(4):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        model_rhs(m, t + 4 * h / 5, yt, k4)
        for i in range(4):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        model_rhs(m, t + 8 * h / 9, yt, k5)
        for i in range(4):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        model_rhs(m, t + h, yt, k6)
        for i in range(4):
            yn[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        model_rhs(m, t + h, yn, k7)
        nfev += 6
        for i in range(4):
            ev[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        bad = nonfinite(yn)
        if bad < 0:
            bad = nonfinite(ev)
        reason = 0
        neg = -1
        err = 0.0
        if bad >= 0:
            reason = 1
            factor = 0.5
        else:
            for i in range(4):
                if yn[i] < -pos_tol:
                    neg = i
                    break
            if neg >= 0:
                reason = 2
                factor = 0.5
            else:
                for i in range(4):
                    mm = fabs(y[i]) if fabs(y[i]) >= fabs(yn[i]) else fabs(yn[i])
                    e = fabs(ev[i])
                    r = e / (atol + rtol * mm)
                    if mm > guard_floor and e / (rel_guard * mm) > r:
                        r = e / (rel_guard * mm)
                    if r > err:
                        err = r
                if err > 1.0:
                    reason = 3
                    factor = 0.9 * pow(err, -0.2)
                    if factor < 0.2:
                        factor = 0.2
        if reason != 0:
            rejections += 1
            h_new = h * factor
            if h_new < h_min:
                if reason == 1:
                    why = f"non-finite state in component {COMPONENTS[bad]}"
                elif reason == 2:
                    why = f"positivity violated in component {COMPONENTS[neg]}"
                else:
                    why = "error estimate"
                raise IntegrationError(
                    t, f"step size underflow (h={h_new!r} < h_min={h_min!r}; last rejection: {why})",
                    COMPONENTS[bad] if bad >= 0 else None)
            h_prop = h_new
            continue
        clamped = 0
        for i in range(4):
            if yn[i] < 0.0:
                yn[i] = 0.0
                clamped = 1
        if clamped:
            clamps += 1
        t = ts if land else t + h
        for i in range(4):
            y[i] = yn[i]
        if clamped:
            model_rhs(m, t, y, k1)
            nfev += 1
        else:
            for i in range(4):
                k1[i] = k7[i]
        steps += 1
        if land and h < h_prop:
            if h < min_land:
                min_land = h
        elif h < min_step:
            min_step = h
        if err == 0.0:
            factor = 5.0
        else:
            factor = 0.9 * pow(err, -0.2)
            factor = 0.2 if factor < 0.2 else (5.0 if factor > 5.0 else factor)
        h_next = h * factor
        if land and h < h_prop:
            if factor >= 1.0:
                h_next = h_prop
            elif h_next > h_prop:
                h_next = h_prop
        if h_next < h_min:
            h_prop = h_min
        elif h_next > h_max:
            h_prop = h_max
        else:
            h_prop = h_next
        if land:
            for i in range(4):
                out[k, i] = y[i]
            k += 1
    if min_step == INFINITY:
        min_step = min_land
    stats = {"steps": steps, "rejections": rejections, "min_step": min_step,
             "clamps": clamps, "rhs_evals": nfev}
    return times_arr, out_arr, stats


def integrate_rk4(ops, args, offsets, int inc_code, y0, double t0, double t_end, double stride,
                  double h_fixed, double pos_tol):
    cdef _Packed p = _Packed(ops, args, offsets, inc_code)
    cdef const Model* m = &p.m
    times_arr = sample_times(t0, t_end, stride)
    cdef double[::1] times = times_arr
    cdef long n = times.shape[0]
    out_arr = np.empty((n, 4))
    cdef double[:, ::1] out = out_arr
    cdef double y[4]
    cdef double yt[4]
    cdef double yn[4]
    cdef double k1[4]
    cdef double k2[4]
    cdef double k3[4]
    cdef double k4[4]
    cdef double t = t0, ts, gap, h
    cdef int i, bad, land, clamped
    cdef long k = 1, steps = 0, clamps = 0, nfev = 0
    cdef double min_step = INFINITY
    for i in range(4):
        y[i] = y0[i]
        out[0, i] = y[i]
    while k < n:
        ts = times[k]
        gap = ts - t
        if h_fixed >= gap - 1e-9 * h_fixed:
            h = gap
            land = 1
        else:
            h = h_fixed
            land = 0
        model_rhs(m, t, y, k1)
        for i in range(4):
            yt[i] = y[i] + h / 2 * k1[i]
        model_rhs(m, t + h / 2, yt, k2)
        for i in range(4):
            yt[i] = y[i] + h / 2 * k2[i]
        model_rhs(m, t + h / 2, yt, k3)
        for i in range(4):
            yt[i] = y[i] + h * k3[i]
        model_rhs(m, t + h, yt, k4)
        nfev += 4
        for i in range(4):
            yn[i] = y[i] + h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
        bad = nonfinite(yn)
        if bad >= 0:
            raise IntegrationError(t, "non-finite state", COMPONENTS[bad])
        clamped = 0
        for i in range(4):
            if yn[i] < -pos_tol:
                raise IntegrationError(t, "positivity violated in fixed-step mode", COMPONENTS[i])
            if yn[i] < 0.0:
                yn[i] = 0.0
                clamped = 1
        if clamped:
            clamps += 1
        t = ts if land else t + h
        for i in range(4):
            y[i] = yn[i]
        steps += 1
        if h < min_step:
            min_step = h
        if land:
            for i in range(4):
                out[k, i] = y[i]
            k += 1
    stats = {"steps": steps, "rejections": 0, "min_step": min_step,
             "clamps": clamps, "rhs_evals": nfev}
    return times_arr, out_arr, stats


def aux_recurrence(a, c, double x0):
    """x[0] = x0, x[j+1] = a[j] * x[j] + c[j]."""
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef long n = av.shape[0], j
    x_arr = np.empty(n + 1)
    cdef double[::1] x = x_arr
    cdef double v = x0
    x[0] = v
    for j in range(n):
        v = av[j] * v + cv[j]
        x[j + 1] = v
    return x_arr
