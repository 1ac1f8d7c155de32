#!/usr/bin/env python3
import argparse
import importlib.metadata
import os
import platform
import sys
from typing import List, Optional

import pandas as pd
from dotenv import load_dotenv
from natsort import natsorted
from rich.table import Table

from experiments.experiment import experiments
from geometry.metric import Tolerances
from metrics.preset import load_metric
from util import formatter, schemajson
from util.errors import ConfigurationError, LabError
from util.jobs import default_jobs
from util.log import log
from util.resultcsv import write_json
from util.template import Template, apply_overrides, parse_overrides, unfold

SCHEMA = "experiment.schema.json"
PACKAGES = ["numpy", "scipy", "pandas", "pyyaml", "jsonschema", "simplejson", "dataclasses-json", "rich", "psutil"]
REDUCTION_TOLERANCE = 0.0


def versions() -> dict:
    result = {"python": platform.python_version()}
    for package in PACKAGES:
        try:
            result[package] = importlib.metadata.version(package)
        except importlib.metadata.PackageNotFoundError:
            result[package] = None
    return result


def load_config(path: str, overrides: Optional[dict] = None) -> List[dict]:
    """
    Loads and validates an experiment configuration, applies the overrides and unfolds the
    parameter sweep into one configuration per combination (with a templated title).

    Raises:
        ConfigurationError: If the file is missing, malformed, or violates the schema.
    """
    config = schemajson.load(path, SCHEMA)
    if overrides:
        config = apply_overrides(config, overrides)
        schemajson.validate(config, SCHEMA)

    kinds = experiments()
    if config["kind"] not in kinds:
        raise ConfigurationError(f"unknown experiment kind '{config['kind']}', known: {', '.join(kinds)}")

    configs = []
    title = Template(config.get("title", "${kind}"))
    for parameter in unfold(config.get("parameter", {})):
        mapping = {"kind": config["kind"], **parameter, **{f"parameter.{k}": v for k, v in parameter.items()}}
        configs.append(dict(config, parameter=parameter, title=title.safe_substitute(mapping)))

    titles = [c["title"] for c in configs]
    if len(set(titles)) != len(titles):
        raise ConfigurationError(f"the title '{config.get('title', '${kind}')}' does not separate the {len(configs)} sweep points")
    return configs


def run_experiment(config: dict, output: str, seed: int, jobs: int) -> bool:
    """Runs one unfolded configuration into output/<title>; returns whether every check passed."""
    spec = load_metric(config["metric"])
    tolerances = Tolerances().with_overrides(config.get("tolerances", {}))
    directory = os.path.join(output, config["title"])
    os.makedirs(directory, exist_ok=True)

    experiment = experiments()[config["kind"]].instantiate(spec, config, directory, tolerances, seed, jobs)
    manifest = {
        "title": config["title"],
        "kind": config["kind"],
        "config": config,
        "metric": spec.to_dict(),
        "seed": seed,
        "jobs": jobs,
        "tolerances": tolerances.to_dict(),
        "multiplicities": experiment.multiplicities(),
        "reduction_tolerance": REDUCTION_TOLERANCE,
        "versions": versions(),
        "status": "running",
    }
    if "grid" in config:
        manifest["grid"] = experiment.grid.to_dict()

    log.header(f"{config['title']}: {experiment.description}")
    try:
        with log.file(os.path.join(directory, "run.log")):
            experiment.run()
            passed = experiment.finish()
        manifest["status"] = "passed" if passed else "failed"
    except LabError as e:
        manifest["status"] = "error"
        manifest["error"] = {"type": type(e).__name__, "message": str(e), "diagnostics": e.diagnostics}
        experiment.finish()
        raise
    finally:
        write_json(os.path.join(directory, "manifest.json"), manifest)

    summary(experiment.checks, config["title"])
    return passed


def summary(checks, title: str):
    table = Table(title=title)
    for column in ("check", "value", "limit", "status"):
        table.add_column(column)
    for check in checks:
        shown = check.error if check.error is not None else check.value
        status = "info" if check.passed is None else ("[green]ok[/]" if check.passed else "[red]FAILED[/]")
        value = formatter.format_float(shown) if isinstance(shown, (int, float)) and not isinstance(shown, bool) else str(shown)
        table.add_row(check.name, value, formatter.format_float(check.limit), status)
    log.print(table)


def run(config_path: str, overrides: Optional[List[str]] = None, jobs: Optional[int] = None, seed: Optional[int] = None) -> int:
    """
    Runs every sweep point of a configuration.

    Returns:
        0 if every check of every run passed, 1 otherwise.

    Raises:
        ConfigurationError: On schema or parameter errors (exit code 2).
        LabError: On runtime failures (exit code 1).
    """
    configs = load_config(config_path, parse_overrides(overrides))
    passed = True
    for config in configs:
        run_seed = seed if seed is not None else int(config.get("seed", 0))
        run_jobs = jobs if jobs is not None else int(config.get("jobs", default_jobs()))
        output = config.get("output", "results")
        log.driver(f"Running {config['title']} ({config['kind']}, seed {run_seed}, {run_jobs} jobs) into {output}")
        passed &= run_experiment(config, output, run_seed, run_jobs)
    return 0 if passed else 1


def _verdict(value) -> Optional[bool]:
    if isinstance(value, bool):
        return value
    if pd.isna(value) or value == "":
        return None
    return str(value).lower() == "true"


def precision_recall(verdicts: pd.DataFrame) -> dict:
    """Precision and recall of the pipeline column against the oracle (or r2) column; indeterminate rows are counted apart."""
    truth_column = "oracle" if "oracle" in verdicts.columns else "r2"
    truth = verdicts[truth_column].map(_verdict)
    pipeline = verdicts["pipeline"].map(_verdict)
    decided = truth.notna() & pipeline.notna()
    truth, pipeline = truth[decided].astype(bool), pipeline[decided].astype(bool)
    tp = int((truth & pipeline).sum())
    fp = int((~truth & pipeline).sum())
    fn = int((truth & ~pipeline).sum())
    return {
        "truth": truth_column,
        "rows": len(verdicts),
        "indeterminate": int((~decided).sum()),
        "tp": tp, "fp": fp, "fn": fn, "tn": int((~truth & ~pipeline).sum()),
        "precision": tp / (tp + fp) if tp + fp else None,
        "recall": tp / (tp + fn) if tp + fn else None,
    }


def report_directory(directory: str) -> dict:
    """
    Aggregates one run directory into report/ (summary.json, checks.csv, scores.csv) and prints it.

    Raises:
        LabError: If the manifest or the check table is missing.
    """
    for required in ("manifest.json", "checks.csv"):
        if not os.path.isfile(os.path.join(directory, required)):
            raise LabError(f"{directory} has no {required}, not a completed run")
    manifest = schemajson.parse_json(os.path.join(directory, "manifest.json"))
    out = os.path.join(directory, "report")
    os.makedirs(out, exist_ok=True)

    checks = pd.read_csv(os.path.join(directory, "checks.csv"), keep_default_na=False)
    passed = checks["passed"].astype(str).str.lower()
    result = {"title": manifest["title"], "kind": manifest["kind"], "status": manifest["status"],
              "checks": {"passed": int((passed == "true").sum()), "failed": int((passed == "false").sum()),
                         "info": int((passed == "").sum())}}
    checks.to_csv(os.path.join(out, "checks.csv"), index=False)

    verdicts_file = os.path.join(directory, "verdicts.csv")
    if os.path.isfile(verdicts_file):
        verdicts = pd.read_csv(verdicts_file, keep_default_na=False)
        if "pipeline" in verdicts.columns:
            result["verdicts"] = precision_recall(verdicts)

    traces_file = os.path.join(directory, "traces.csv")
    if os.path.isfile(traces_file):
        curves = []
        for _, trace in pd.read_csv(traces_file, keep_default_na=False).iterrows():
            if not trace["scores"]:
                continue
            scores_file = os.path.join(directory, trace["scores"])
            if not os.path.isfile(scores_file):
                raise LabError(f"score curve {trace['scores']} listed in traces.csv is missing")
            curves.append(pd.read_csv(scores_file).assign(label=trace["label"]))
        if curves:
            pd.concat(curves, ignore_index=True)[["label", "r", "energy"]].to_csv(os.path.join(out, "scores.csv"), index=False)
        result["score_curves"] = len(curves)

    write_json(os.path.join(out, "summary.json"), result)
    log.header(f"{result['title']} ({result['kind']})")
    log.info(f"status {result['status']}: {result['checks']['passed']} passed, {result['checks']['failed']} failed, "
             f"{result['checks']['info']} informational")
    if "verdicts" in result:
        v = result["verdicts"]
        log.info(f"pipeline against {v['truth']}: precision {formatter.format_float(v['precision'])}, "
                 f"recall {formatter.format_float(v['recall'])} ({v['indeterminate']} indeterminate of {v['rows']})")
    for _, row in checks[passed == "false"].iterrows():
        log.warn(f"failed: {row['check']} ({row['detail'] or row['error']})")
    return result


def report(directory: str) -> int:
    """
    Reports a run directory, or every run directory below it (sweeps write one per point).

    Returns:
        0 if every reported run passed, 1 otherwise.
    """
    if not os.path.isdir(directory):
        raise LabError(f"run directory {directory} does not exist")
    if os.path.isfile(os.path.join(directory, "manifest.json")):
        directories = [directory]
    else:
        directories = natsorted(os.path.join(directory, d) for d in os.listdir(directory)
                                if os.path.isfile(os.path.join(directory, d, "manifest.json")))
        if not directories:
            raise LabError(f"{directory} holds no run manifest")
    results = [report_directory(d) for d in directories]
    return 0 if all(r["status"] == "passed" for r in results) else 1


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="Wave-interaction laboratory")
    parser.add_argument("-v", "--verbose", dest="verbose", default=False, action="store_true", help="verbose output")
    parser.add_argument("-vv", "--very-verbose", dest="very_verbose", default=False, action="store_true", help="very verbose output")
    parser.add_argument("--env", dest="env", type=str, default=None, help="file containing environment variables")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="run an experiment configuration")
    run_parser.add_argument("config", type=str, help="path to the experiment's yaml definition")
    run_parser.add_argument("--override", dest="overrides", action="append", default=[], help="key=value, dotted keys allowed")
    run_parser.add_argument("--jobs", "-j", dest="jobs", type=int, default=None, help="worker processes (default: logical CPUs)")
    run_parser.add_argument("--seed", dest="seed", type=int, default=None, help="seed (default: the config's seed)")

    report_parser = commands.add_parser("report", help="summarize a run directory")
    report_parser.add_argument("directory", type=str, help="run directory (or a directory of runs)")

    args = parser.parse_args(argv)
    if args.verbose:
        log.set_verbose(True)
    if args.very_verbose:
        log.set_very_verbose(True)
    if args.env:
        load_dotenv(args.env)

    try:
        if args.command == "run":
            return run(args.config, args.overrides, args.jobs, args.seed)
        return report(args.directory)
    except LabError as e:
        log.error(e)
        return e.exit_code


if __name__ == "__main__":
    try:
        sys.exit(main())
    except Exception as e:
        log.error(e)
        raise e
