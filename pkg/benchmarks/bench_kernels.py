"""Compare the compiled and pure-Python kernels.

    python benchmarks/bench_kernels.py [--t-end 2000] [--repeat 3]

Reports wall time per kernel and backend, the speedup and whether the two
backends produced bit-identical output.
"""
import argparse
import time

import numpy as np

from siqr import _backend
from siqr.odeint import IntegratorConfig, integrate
from siqr.scenarios import golden_scenarios


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_integrate(sc, cfg, repeat):
    rows = []
    for backend in ("python", "compiled"):
        dt, traj = best_of(lambda: integrate(sc.params, sc.incidence, sc.initial, cfg, backend),
                           repeat)
        rows.append((backend, dt, traj))
    return rows


def bench_aux(n, repeat):
    rng = np.random.default_rng(0)
    a = rng.uniform(0.9, 1.0, n)
    c = rng.uniform(0.0, 1e-3, n)
    rows = []
    for backend in ("python", "compiled"):
        k = _backend.get(backend)
        dt, x = best_of(lambda: k.aux_recurrence(a, c, 1.0), repeat)
        rows.append((backend, dt, x))
    return rows


def report(label, rows, extract):
    (_, t_py, o_py), (_, t_c, o_c) = rows
    same = np.array_equal(extract(o_py), extract(o_c))
    print(f"{label:<34} python {t_py * 1e3:9.1f} ms   compiled {t_c * 1e3:8.2f} ms   "
          f"speedup {t_py / t_c:7.1f}x   identical={same}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t-end", type=float, default=2000.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--aux-n", type=int, default=200_000)
    args = ap.parse_args()
    if _backend.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")

    scs = {sc.name: sc for sc in golden_scenarios()}
    for name in ("mass_action_alpha9", "quarantine_adjusted_alpha0.25"):
        sc = scs[name]
        for method in ("rk45", "rk4"):
            cfg = IntegratorConfig(method=method, t_end=args.t_end, h=0.01)
            rows = bench_integrate(sc, cfg, args.repeat)
            report(f"{method} {name}", rows, lambda tr: tr.y)
    report(f"aux_recurrence n={args.aux_n}", bench_aux(args.aux_n, args.repeat), lambda x: x)


if __name__ == "__main__":
    main()
