"""Command-line frontend.

Exit status: 0 success, 1 bad input (usage, schema or validation), 2 run
failure (integration or evaluation).
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .errors import PathError, SchemaError, SiqrError, ValidationError
from .plotting import PlotSpec, render_svg
from .scenarios import (EXTINCT, TRAJ_EXTINCT, load_scenario_file, paper_suite, run,
                        scenario_reports, sweep, sweep_csv)

EXIT_OK, EXIT_INPUT, EXIT_RUN = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _dump(obj):
    return json.dumps(obj, indent=2, allow_nan=False)


def _outdir(path):
    os.makedirs(path, exist_ok=True)
    return path


def _plot(res, name, path):
    log = (res.cross.trajectory_verdict == TRAJ_EXTINCT or res.verdict == EXTINCT)
    spec = PlotSpec(series=("I",), log_I=log, title=f"{name}: I(t)", path=path)
    render_svg(res.trajectory, spec)


def cmd_simulate(args) -> int:
    sc = load_scenario_file(args.scenario)
    res = run(sc)
    out = _outdir(args.output)
    res.trajectory.to_csv(os.path.join(out, f"{sc.name}.csv"))
    _plot(res, sc.name, os.path.join(out, f"{sc.name}_I.svg"))
    print(_dump({"name": sc.name, "samples": len(res.trajectory),
                 "stats": res.trajectory.stats, "cross_validation": res.cross.to_dict()}))
    return EXIT_OK


def cmd_thresholds(args) -> int:
    sc = load_scenario_file(args.scenario)
    reps = scenario_reports(sc, args.lambdas or None)
    print(_dump([r.to_dict() for r in reps]))
    return EXIT_OK


def cmd_classify(args) -> int:
    sc = load_scenario_file(args.scenario)
    res = run(sc)
    cv = res.cross
    print(_dump({"name": sc.name, "threshold_verdict": cv.threshold_verdict,
                 "trajectory_verdict": cv.trajectory_verdict, "agreement": cv.agreement,
                 "per_lambda": {repr(r.lam): r.verdict for r in res.reports}}))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    out = _outdir(args.output)
    suite = paper_suite()
    suite.to_csv(os.path.join(out, "paper_suite.csv"))
    for sc, res in zip(suite.scenarios, suite.runs):
        _plot(res, sc.name, os.path.join(out, f"{sc.name}_I.svg"))
    for row in suite.table:
        print(f"{row['name']}: threshold {row['threshold_verdict']}, "
              f"trajectory {row['trajectory_verdict']}, agreement {row['agreement']}")
    return EXIT_OK


def _values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def cmd_sweep(args) -> int:
    sc = load_scenario_file(args.scenario)
    rows = sweep(sc, args.path, args.values)
    text = sweep_csv(rows, args.output)
    if args.output is None:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="siqr", description="Nonautonomous SIQR simulation and thresholds")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="integrate a scenario; write CSV and an SVG of I(t)")
    p.add_argument("scenario")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("thresholds", help="print threshold reports")
    p.add_argument("scenario")
    p.add_argument("--lambda", dest="lambdas", type=float, action="append",
                   help="window length; repeatable (default: the scenario's list)")
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("classify", help="threshold verdict and trajectory cross-check")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("reproduce-paper", help="run the seasonal golden suite")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("sweep", help="threshold sweep over one numeric leaf")
    p.add_argument("scenario")
    p.add_argument("--path", required=True, help="dotted path, e.g. incidence.beta.args.0.value")
    p.add_argument("--values", required=True, type=_values, help="v1,v2,...")
    p.add_argument("-o", "--output", help="CSV file (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        return args.func(args)
    except (SchemaError, ValidationError, PathError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SiqrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN
    except Exception as exc:  # noqa: BLE001 - every path must map to an exit status
        print(f"error: unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
