"""Command-line front end: run experiment configs, list the registry,
fit convergence slopes of a results CSV."""

import argparse
import csv
import sys
from pathlib import Path

from .assembly import AssemblyError, SolverError
from .coefficients import CoefficientError
from .experiments import (
    ExperimentError,
    fit_convergence_slope,
    list_experiments,
    run_experiment,
)
from .mesh import MeshError

_FAILURES = (ExperimentError, AssemblyError, SolverError, MeshError,
             CoefficientError, OSError)


def _fit_lines(csv_path):
    p = Path(csv_path)
    if not p.is_file():
        raise ExperimentError(f"csv file not found: {p}")
    with open(p, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "H" not in fields:
            raise ExperimentError("csv needs an 'H' column to fit against")
        cols = [c for c in fields if c.endswith("_rel")]
        if not cols:
            raise ExperimentError("csv has no '*_rel' error columns")
        rows = list(reader)
    lines = []
    for col in cols:
        series = [(row["H"], row[col]) for row in rows]
        slope, r2 = fit_convergence_slope(series)
        lines.append(f"{col}: slope {slope:.4f} (r2 {r2:.4f})")
    return lines


def build_parser():
    parser = argparse.ArgumentParser(
        prog="felodm",
        description="multiscale elliptic solver experiments")
    sub = parser.add_subparsers(dest="cmd", required=True)

    runp = sub.add_parser("run", help="run an experiment config")
    runp.add_argument("--config", required=True, help="key=value config file")
    runp.add_argument("--outdir", default=None,
                      help="output directory (default: results/<experiment>)")
    runp.add_argument("--full-scale", action="store_true",
                      help="allow fine meshes beyond the desk-scale limit")

    sub.add_parser("list-experiments", help="list known experiment ids")

    fitp = sub.add_parser("fit", help="fit log-log slopes of a results CSV")
    fitp.add_argument("--csv", required=True, help="CSV with H and *_rel columns")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            report = run_experiment(args.config, outdir=args.outdir,
                                    full_scale=args.full_scale)
            sys.stdout.write(report.text)
            print(f"wrote {report.outdir}")
        elif args.cmd == "list-experiments":
            for eid, desc in list_experiments():
                print(f"{eid}: {desc}")
        elif args.cmd == "fit":
            for line in _fit_lines(args.csv):
                print(line)
    except _FAILURES as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
