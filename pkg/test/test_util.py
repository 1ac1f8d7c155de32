import numpy as np
import pytest

from util import formatter, schemajson
from util.errors import ConfigurationError, DependencyError, LabError
from util.jobs import parallel_map
from util.log import log
from util.resultcsv import ResultCSV, write_columns, write_json
from util.template import Template, apply_overrides, parse_overrides, parse_value, unfold


def test_unfold():
    assert unfold({}) == [{}]
    assert unfold({"a": 1, "b": [2, 3]}) == [{"a": 1, "b": 2}, {"a": 1, "b": 3}]
    assert len(unfold({"a": [1, 2], "b": [3, 4], "c": [5, 6, 7]})) == 12


def test_template_accepts_dotted_names():
    assert Template("${kind}-${parameter.freq}").safe_substitute({"kind": "packet", "parameter.freq": 4}) == "packet-4"


@pytest.mark.parametrize("text, value", [("true", True), ("False", False), ("12", 12), ("1e-3", 1e-3), ("cascade", "cascade")])
def test_parse_value(text, value):
    assert parse_value(text) == value


def test_overrides():
    overrides = parse_overrides(["grid.cells=256", "seed = 3", "detection.method=stencil"])
    assert overrides == {"grid.cells": 256, "seed": 3, "detection.method": "stencil"}
    config = {"grid": {"cells": 128, "time": [0, 8]}, "seed": 0}
    updated = apply_overrides(config, overrides)
    assert updated["grid"] == {"cells": 256, "time": [0, 8]}
    assert updated["detection"] == {"method": "stencil"}
    assert config["grid"]["cells"] == 128


def test_override_errors():
    with pytest.raises(ConfigurationError):
        parse_overrides(["cells"])
    with pytest.raises(ConfigurationError):
        apply_overrides({"seed": 1}, {"seed.value": 2})


def test_error_exit_codes():
    assert ConfigurationError("x").exit_code == 2
    error = DependencyError("u_012 needs u_0", missing=[0])
    assert error.exit_code == 1
    assert error.diagnostics == {"missing": [0]}
    assert isinstance(error, LabError)


def test_parse_yaml_env(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("output: !ENV ${RESULTS}/boomerang\nother: !ENV ${UNSET_VARIABLE}\n")
    config = schemajson.parse_yaml(str(path), env={"RESULTS": "/tmp/lab"})
    assert config == {"output": "/tmp/lab/boomerang", "other": "${UNSET_VARIABLE}"}


def test_validate_against_the_experiment_schema():
    schemajson.validate({"kind": "boomerang", "metric": {"preset": "minkowski"}}, "experiment.schema.json")
    with pytest.raises(ConfigurationError, match="metric"):
        schemajson.validate({"kind": "boomerang", "metric": {"preset": "minkowski", "dimension": 5}}, "experiment.schema.json")
    with pytest.raises(ConfigurationError):
        schemajson.validate({"kind": "boomerang", "metric": {"preset": "minkowski"}, "resolution": 2}, "experiment.schema.json")


def test_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        schemajson.load(str(tmp_path / "missing.yaml"), "experiment.schema.json")
    broken = tmp_path / "broken.yaml"
    broken.write_text("kind: [boomerang\n")
    with pytest.raises(ConfigurationError):
        schemajson.load(str(broken), "experiment.schema.json")
    scalar = tmp_path / "scalar.yaml"
    scalar.write_text("boomerang\n")
    with pytest.raises(ConfigurationError):
        schemajson.load(str(scalar), "experiment.schema.json")


def test_result_csv_cells(tmp_path):
    path = tmp_path / "verdicts.csv"
    with ResultCSV(str(path), ["label", "r1", "r2", "score", "xi"]) as out:
        out.start("first")
        assert (tmp_path / "verdicts.csv_current").exists()
        out.row({"label": "first", "r1": True, "r2": None, "score": np.float64(0.5), "xi": np.array([-1.0, 1.0])})
        out.row({"label": "second", "r1": np.bool_(False), "score": float("nan")})
    assert not (tmp_path / "verdicts.csv_current").exists()
    lines = path.read_text().splitlines()
    assert lines[0] == "label,r1,r2,score,xi"
    assert lines[1] == 'first,true,,0.5,"[-1.0, 1.0]"'
    assert lines[2] == "second,false,,nan,"


def test_write_columns_and_json(tmp_path):
    write_columns(str(tmp_path / "columns.csv"), {"r": np.array([0.0, 0.5]), "energy": [1.0, 2.0]})
    assert (tmp_path / "columns.csv").read_text().splitlines() == ["r,energy", "0.0,1.0", "0.5,2.0"]
    write_json(str(tmp_path / "out.json"), {"value": np.float32(1.5), "ids": np.arange(2), "ok": np.bool_(True)})
    assert schemajson.parse_json(str(tmp_path / "out.json")) == {"value": 1.5, "ids": [0, 1], "ok": True}


def _square(x):
    return x * x


@pytest.mark.parametrize("jobs", [1, 2])
def test_parallel_map_keeps_order(jobs):
    assert parallel_map(_square, range(6), jobs) == [0, 1, 4, 9, 16, 25]


def test_formatter():
    assert formatter.format_float(None) == "n/a"
    assert formatter.format_float(float("nan")) == "n/a"
    assert formatter.format_float(0.25) == "0.250"
    assert formatter.format_float(1e-6) == "1.000e-06"
    assert formatter.format_time(1234.5) == "1'234.50 s"
    assert formatter.format_verdict(None) == "indeterminate"
    assert formatter.format_verdict(True) == "true"


def test_log_file_copies_rows(tmp_path):
    path = tmp_path / "run.log"
    with log.file(str(path)):
        log.solver("marching 12 levels")
        log.header("phase")
    log.solver("not copied")
    text = path.read_text()
    assert "SOLVER" in text and "marching 12 levels" in text and "phase" in text
    assert "not copied" not in text
    assert "\x1b" not in text
