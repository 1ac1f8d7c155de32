#!/usr/bin/env python3
import argparse
import os
import shutil
import sys

import pandas as pd
from natsort import natsorted

import cli
from util import schemajson
from util.errors import LabError
from util.log import log

workdir = os.getcwd()


def main():
    parser = argparse.ArgumentParser(description="Test the wave laboratory end to end.")
    parser.add_argument("filenames", nargs="*", default=[], help="Optional list of configuration files")
    args = parser.parse_args()

    requested = {os.path.basename(f).split('.')[0] for f in args.filenames}
    yaml_files = natsorted(
        f for f in os.listdir(os.path.join(workdir, "test"))
        if f.endswith('.experiment.yaml') and (not requested or f.split('.')[0] in requested)
    )
    if args.filenames and not yaml_files:
        log.error(f"No test files matched: {', '.join(args.filenames)}")
        return False

    succeeded = []
    failed = []
    for file in yaml_files:
        log.header(file)

        try:
            run_test(file)
            succeeded.append(file)
        except Exception as e:
            log.error(f"Test '{file}' failed: {e}")
            failed.append((file, e))

    log.header("Test summary")
    log.info(f"{len(succeeded)}/{len(yaml_files)} tests succeeded")
    for file in succeeded:
        log.info(f"  PASS {file}")
    for file, e in failed:
        log.error(f"  FAIL {file}: {e}")

    return len(failed) == 0


def run_test(file):
    name = file.split('.')[0]
    expected_file = os.path.join(workdir, "test", "expected", f"{name}.yaml")
    if not os.path.isfile(expected_file):
        raise Exception(f"No expectation found for '{name}' (expected at {expected_file}).")
    expected = schemajson.parse_yaml(expected_file)

    config_file = os.path.join(workdir, "test", file)
    try:
        exit_code = cli.run(config_file, jobs=1)
        configs = cli.load_config(config_file)
    except LabError as e:
        exit_code = e.exit_code
        configs = []

    if exit_code != expected["exit_code"]:
        raise Exception(f"exit code {exit_code}, expected {expected['exit_code']}")

    for config in configs:
        run_dir = os.path.join(workdir, config.get("output", "results"), config["title"])
        for artifact in expected.get("artifacts", []):
            if not os.path.isfile(os.path.join(run_dir, artifact)):
                raise Exception(f"artifact '{artifact}' missing in {run_dir}")

        if "verdicts" in expected:
            verdicts = pd.read_csv(os.path.join(run_dir, "verdicts.csv"), keep_default_na=False)
            if len(verdicts) != expected["verdicts"]:
                raise Exception(f"{len(verdicts)} verdict rows, expected {expected['verdicts']}")
            # indeterminate is allowed, a contradiction of the oracle is not
            contradictions = verdicts[(verdicts["r2"].astype(str).str.lower() == "true")
                                      & (verdicts["r1"].astype(str).str.lower() != "true")]
            if len(contradictions):
                raise Exception(f"{len(contradictions)} verdict rows with r2 but not r1")

        if cli.report(run_dir) != expected["exit_code"]:
            raise Exception("report disagrees with the run's exit code")
        shutil.rmtree(os.path.join(run_dir, "report"))


if __name__ == "__main__":
    try:
        all_passed = main()
    except Exception as e:
        log.error(e)
        raise e
    sys.exit(0 if all_passed else 1)
