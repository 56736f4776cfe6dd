"""Command line entry point: ``hyperwave <verb> --config run.toml``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import parse_config
from .errors import ConfigError, HyperwaveError, NumericalError
from .pipeline import convergence_study, dumps_report, emit_plotdata, run_pipeline, write_outputs

log = logging.getLogger("hyperwave")

STAGES = {
    "simulate": ("simulate",),
    "gauge": ("simulate", "ladder", "gauge"),
    "diagnose": ("simulate", "ladder", "gauge", "diagnose"),
}


def _load(args):
    cfg = parse_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output"] = cfg.output.model_copy(update={"directory": str(args.out)})
    return cfg.model_copy(update=updates) if updates else cfg


def _run(args):
    cfg = _load(args)
    report, timings, results = run_pipeline(cfg, threads=args.threads, stages=STAGES[args.verb])
    out = write_outputs(cfg, report, timings, results, cfg.output.directory)
    log.info("wrote %s", out)
    return 0


def _study(args):
    cfg = _load(args)
    table = convergence_study(cfg, levels=args.levels, threads=args.threads)
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "study.json").write_text(dumps_report(table))
    emit_plotdata({"study": table}, out / "plotdata")
    for row in table["rows"]:
        rates = ", ".join(f"{r:.2f}" for r in row["rates"])
        print(f"{row['quantity']:45s} rates {rates}")
    return 0


def _export(args):
    report = json.loads(Path(args.report).read_text())
    out = Path(args.out or Path(args.report).parent / "plotdata")
    emit_plotdata(report, out)
    log.info("wrote %s", out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="hyperwave", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, helptext in (("simulate", "evolve the wave map only"),
                           ("gauge", "evolve, flow and build the caloric gauge"),
                           ("diagnose", "the full pipeline with every residual suite"),
                           ("study", "refinement study with fitted rates")):
        sp = sub.add_parser(verb, help=helptext)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None, help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--seed", type=int, default=None)
        if verb == "study":
            sp.add_argument("--levels", type=int, default=2)
    ex = sub.add_parser("export", help="plot-data CSVs from an existing report")
    ex.add_argument("--report", required=True)
    ex.add_argument("--out", default=None)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return 2
    handler = {"study": _study, "export": _export}.get(args.verb, _run)
    try:
        return handler(args)
    except NumericalError as exc:
        print(f"numerical error in stage {getattr(exc, 'stage', '?')}: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, HyperwaveError, ValueError, FileNotFoundError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" in stage {stage}" if stage else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
