import json
import os
import subprocess

import pandas as pd
import pytest

import cli
from util.errors import ConfigurationError, LabError

HERE = os.path.dirname(os.path.abspath(__file__))


def write_config(tmp_path, text: str) -> str:
    path = tmp_path / "sweep.experiment.yaml"
    path.write_text(text)
    return str(path)


def test_malformed_config_exits_with_two():
    assert cli.main(["run", os.path.join(HERE, "malformed.experiment.yaml")]) == 2


def test_sweep_unfolding(tmp_path):
    path = write_config(tmp_path, "title: packets-${freq}-${parameter.order}\nkind: packet-propagation\n"
                                  "metric: {preset: minkowski}\nparameter: {freq: [2, 4], order: 2}\n")
    configs = cli.load_config(path)
    assert [c["title"] for c in configs] == ["packets-2-2", "packets-4-2"]
    assert configs[1]["parameter"] == {"freq": 4, "order": 2}


def test_titles_must_separate_the_sweep(tmp_path):
    path = write_config(tmp_path, "title: packets\nkind: packet-propagation\nmetric: {preset: minkowski}\nparameter: {freq: [2, 4]}\n")
    with pytest.raises(ConfigurationError):
        cli.load_config(path)


def test_overrides_are_validated(tmp_path):
    path = write_config(tmp_path, "kind: geometry-selftest\nmetric: {preset: minkowski}\n")
    assert cli.load_config(path, {"metric.dimension": 3})[0]["metric"]["dimension"] == 3
    with pytest.raises(ConfigurationError):
        cli.load_config(path, {"metric.dimension": 7})


def test_precision_recall():
    verdicts = pd.DataFrame({"r2": ["true", "true", "false", "false", ""], "pipeline": ["true", "false", "true", "false", "true"]})
    scores = cli.precision_recall(verdicts)
    assert scores["truth"] == "r2"
    assert (scores["tp"], scores["fp"], scores["fn"], scores["tn"]) == (1, 1, 1, 1)
    assert scores["indeterminate"] == 1
    assert scores["precision"] == pytest.approx(0.5)


def test_report_of_a_run_directory(tmp_path):
    run = tmp_path / "relation"
    run.mkdir()
    (run / "manifest.json").write_text(json.dumps({"title": "relation", "kind": "relation-batch", "status": "passed"}))
    pd.DataFrame({"check": ["r2 implies r1", "batch size"], "value": [0, 6], "limit": [0, ""], "passed": ["true", ""],
                  "detail": ["", ""], "error": ["", ""]}).to_csv(run / "checks.csv", index=False)
    pd.DataFrame({"quad": [0, 1], "r1": ["true", "false"], "r2": ["true", "false"], "pipeline": ["true", "false"]}) \
        .to_csv(run / "verdicts.csv", index=False)
    assert cli.report(str(tmp_path)) == 0
    summary = json.loads((run / "report" / "summary.json").read_text())
    assert summary["checks"] == {"passed": 1, "failed": 0, "info": 1}
    assert summary["verdicts"]["precision"] == 1.0


def test_report_errors(tmp_path):
    with pytest.raises(LabError):
        cli.report(str(tmp_path / "missing"))
    with pytest.raises(LabError):
        cli.report(str(tmp_path))
    assert cli.main(["report", str(tmp_path / "missing")]) == 1


@pytest.mark.parametrize("code, retries, calls", [(0, 2, 1), (1, 2, 1), (2, 2, 1), (137, 0, 1), (137, 2, 3)])
def test_lab_script_retries_only_aborted_runs(tmp_path, code, retries, calls):
    count = tmp_path / "calls"
    stub = tmp_path / "cli"
    stub.write_text(f"#!/bin/bash\necho \"$@\" >> {count}\nexit {code}\n")
    stub.chmod(0o755)
    result = subprocess.run(["bash", os.path.join(HERE, "..", "lab.sh"), "--retries", str(retries), "sweep.experiment.yaml"],
                            env=dict(os.environ, LAB_CLI=str(stub)), capture_output=True, text=True)
    assert result.returncode == code
    assert count.read_text().splitlines() == ["run sweep.experiment.yaml"] * calls
