"""Command line entry point.

Exit codes: 0 success, 1 spec/config error, 2 some runs failed,
3 property violation reported by ``exact``.
"""
import argparse
import json
import os
import sys

from ..core import DecPomdpModel
from ..validation import ConfigurationError, ModelValidationError
from .experiment import OUTPUT_ENV, ExperimentSpec, OutputExistsError, replot, run_experiment, run_sweep
from .report import exact_report, write_report

EXIT_OK, EXIT_SPEC, EXIT_RUNS, EXIT_PROPERTY = 0, 1, 2, 3


def _parser():
    p = argparse.ArgumentParser(prog="marlcritics", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a multi-seed experiment from a JSON spec")
    r.add_argument("spec")
    r.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<spec output>)")
    r.add_argument("--force", action="store_true", help="overwrite an existing output directory")
    r.add_argument("--workers", type=int)

    e = sub.add_parser("exact", help="exact analysis of an explicit model")
    e.add_argument("model", help="registry name or path to a model JSON file")
    e.add_argument("--policy", help="policy JSON file (default: uniform)")
    e.add_argument("--k", type=int, default=1)
    e.add_argument("--out", help="directory for exact_report.json/.csv")

    s = sub.add_parser("sweep", help="grid search over the experiment file's 'grid' entry")
    s.add_argument("spec")
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")
    s.add_argument("--workers", type=int)

    pl = sub.add_parser("plot", help="regenerate SVG charts for an experiment directory")
    pl.add_argument("dir")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "run":
            spec = ExperimentSpec.load(args.spec)
            out, manifest = run_experiment(spec, args.out, args.force, args.workers)
            print(f"wrote {out} ({len(manifest['files'])} files, {len(manifest['failures'])} failed runs)")
            return EXIT_RUNS if manifest["failures"] else EXIT_OK
        if args.command == "sweep":
            spec = ExperimentSpec.load(args.spec)
            out, sweep, n_fail = run_sweep(spec, args.out, args.force, args.workers)
            print(f"wrote {out} ({len(sweep['cells'])} cells, {n_fail} failed runs)")
            return EXIT_RUNS if n_fail else EXIT_OK
        if args.command == "exact":
            model = DecPomdpModel.load(args.model) if os.path.isfile(args.model) else args.model
            rep = exact_report(model, args.policy, args.k)
            out = args.out or os.path.join(os.environ.get(OUTPUT_ENV, "results"), f"exact_{rep['model']}_k{args.k}")
            jpath, _ = write_report(rep, out)
            summary = {
                "model": rep["model"],
                "marginalization_residual": rep["marginalization_residual"],
                "gradient_equality_residual": rep["gradient_equality_residual"],
                "min_variance_gap": rep["min_variance_gap"],
                "violations": rep["violations"],
                "warnings": rep["warnings"],
                "report": jpath,
            }
            print(json.dumps(summary, indent=1))
            return EXIT_PROPERTY if rep["violations"] else EXIT_OK
        if args.command == "plot":
            paths = replot(args.dir)
            print("\n".join(paths))
            return EXIT_OK
    except (ConfigurationError, ModelValidationError, OutputExistsError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
