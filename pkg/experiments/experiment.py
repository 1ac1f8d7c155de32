import os
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from detector.pipeline import DetectionSettings
from detector.singularity import SingularityReport
from geometry.metric import MetricSpec, Tolerances
from geometry.observer import AffineCurve, ObserverCurve, observer_from_config
from solver.cascade import CascadePlan
from solver.grid import Grid
from solver.trace import TraceSeries
from util.errors import ConfigurationError
from util.jobs import default_jobs
from util.log import log
from util.resultcsv import ResultCSV

CHECK_COLUMNS = ["check", "value", "expected", "error", "limit", "passed", "detail"]
TRACE_COLUMNS = ["label", "file", "band_low", "band_high", "smoothing", "scores"]


@dataclass
class Check:
    """One assertion of an experiment. `passed` is None for informational entries."""
    name: str
    value: object
    expected: object
    error: Optional[float]
    limit: Optional[float]
    passed: Optional[bool]
    detail: str = ""

    def row(self) -> dict:
        return {"check": self.name, "value": self.value, "expected": self.expected, "error": self.error, "limit": self.limit,
                "passed": self.passed, "detail": self.detail}


class Experiment(ABC):
    """
    One run of an experiment kind: a metric, an optional observer and grid, and the `parameter`
    and `setup` sections of the (unfolded) configuration. Results go to `output_dir`.
    """

    def __init__(self, spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs: Optional[int] = 1):
        self.spec = spec
        self.config = config
        self.output_dir = output_dir
        self.tolerances = tolerances
        self.seed = seed
        self.jobs = jobs
        self.checks: List[Check] = []
        self.traces: List[dict] = []
        self._curve: Optional[ObserverCurve] = None
        self._grid: Optional[Grid] = None

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @property
    @abstractmethod
    def description(self) -> str:
        pass

    @abstractmethod
    def run(self):
        pass

    def plans(self) -> List[CascadePlan]:
        """Cascades whose multiplicities are recorded in the manifest."""
        return []

    # configuration

    def parameter(self, key: str, default=None):
        parameter = self.config.get("parameter", {})
        if key in parameter:
            return parameter[key]
        return self.config.get("setup", {}).get(key, default)

    def limit(self, key: str, default: float) -> float:
        return float(self.config.get("limits", {}).get(key, default))

    def settings(self) -> DetectionSettings:
        detection = dict(self.config.get("detection", {}))
        detection.setdefault("jobs", self.jobs or default_jobs())
        settings = DetectionSettings.from_dict(detection)
        settings.check()
        return settings

    @property
    def curve(self) -> ObserverCurve:
        if self._curve is None:
            if "observer" in self.config:
                self._curve = observer_from_config(self.config["observer"])
            else:
                self._curve = self.time_axis()
            self._curve.validate(self.spec)
        return self._curve

    def time_axis(self) -> ObserverCurve:
        """The static observer through the spatial center of the chart, spanning most of its time range."""
        spec = self.spec
        center = 0.5 * (spec.lower + spec.upper)
        t_low, t_high = spec.lower[0] + 1.0, spec.upper[0] - 1.0
        origin = np.concatenate([[0.5 * (t_low + t_high)], center[1:]])
        velocity = np.concatenate([[0.5 * (t_high - t_low)], np.zeros(spec.d)])
        return AffineCurve(origin, velocity)

    def quadruple_region(self, margin: float, window=(0.45, 0.55)):
        """
        A space-time box for witness points y (the middle of the grid time range, `margin` away from
        the damping layer) and a predicate keeping every generated base point as far from it.
        """
        grid = self.grid
        low, high = grid.interior_bounds()
        span = grid.t_end - grid.t_start
        region = (np.concatenate([[grid.t_start + window[0] * span], low + margin]),
                  np.concatenate([[grid.t_start + window[1] * span], high - margin]))

        def inside(point) -> bool:
            return bool(np.all(point.spatial >= low + margin) and np.all(point.spatial <= high - margin)
                        and grid.t_start + margin <= point.t <= grid.t_end - margin)

        return region, inside

    @property
    def grid(self) -> Grid:
        if self._grid is None:
            if "grid" not in self.config:
                raise ConfigurationError(f"experiment '{self.name}' needs a grid section")
            self._grid = Grid.from_config(self.spec, self.config["grid"])
            log.experiment_verbose(f"grid {self._grid.cells.tolist()} cells, dt={self._grid.dt:.4g}, {self._grid.steps} steps", self)
        return self._grid

    # results

    def path(self, *parts: str) -> str:
        path = os.path.join(self.output_dir, *parts)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        return path

    def check(self, name: str, value, limit: Optional[float], expected=None, at_least: bool = False, detail: str = "") -> Check:
        """
        Records an assertion: |value - expected| <= limit (or value <= limit without `expected`,
        value >= limit with `at_least`). A limit of None makes the entry informational.
        """
        error = None
        if expected is not None:
            error = float(np.max(np.abs(np.asarray(value, dtype=float) - np.asarray(expected, dtype=float))))
        measured = error if error is not None else (float(value) if value is not None and np.ndim(value) == 0 else None)
        passed = None
        if limit is not None and measured is not None:
            passed = bool(measured >= limit) if at_least else bool(measured <= limit)
        if isinstance(value, np.ndarray):
            value = value.tolist()
        if isinstance(expected, np.ndarray):
            expected = expected.tolist()
        check = Check(name, value, expected, error, limit, passed, detail)
        self.checks.append(check)
        status = "info" if passed is None else ("ok" if passed else "FAILED")
        shown = error if error is not None else measured
        log.experiment_verbose(f"{name}: {status} ({'-' if shown is None else f'{shown:.3e}'}{'' if limit is None else f' vs {limit:.3e}'})", self)
        if passed is False:
            log.warn(f"{self.name}: check '{name}' failed ({detail or shown})")
        return check

    def write_trace(self, trace: TraceSeries, band, smoothing: float, report: Optional[SingularityReport] = None) -> str:
        """Writes a trace (and its score curve E(s)) and indexes it for `report`."""
        label = trace.label.replace(" ", "_").replace("(", "").replace(")", "") or f"trace{len(self.traces)}"
        filename = os.path.join("traces", f"{len(self.traces):03d}_{label}.csv")
        trace.write(self.path(filename))
        scores = None
        if report is not None and report.energy is not None:
            scores = os.path.join("scores", f"{len(self.traces):03d}_{label}.csv")
            report.write_scores(self.path(scores))
        self.traces.append({"label": trace.label, "file": filename, "band_low": float(band[0]), "band_high": float(band[1]),
                            "smoothing": smoothing, "scores": scores})
        return filename

    def finish(self) -> bool:
        with ResultCSV(self.path("checks.csv"), CHECK_COLUMNS) as out:
            out.rows(check.row() for check in self.checks)
        if self.traces:
            with ResultCSV(self.path("traces.csv"), TRACE_COLUMNS) as out:
                out.rows(self.traces)
        failed = [check for check in self.checks if check.passed is False]
        decided = [check for check in self.checks if check.passed is not None]
        log.experiment(f"{len(decided) - len(failed)}/{len(decided)} checks passed", self)
        return not failed

    def multiplicities(self) -> Dict[str, Dict[str, int]]:
        result = {}
        for plan in self.plans():
            result[plan.label] = plan.multiplicities()
        return result


class ExperimentDescription:
    @staticmethod
    def get_name() -> str:
        raise NotImplementedError()

    @staticmethod
    def get_description() -> str:
        raise NotImplementedError()

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0,
                    jobs: Optional[int] = 1) -> Experiment:
        raise NotImplementedError()


def experiments() -> Dict[str, ExperimentDescription]:
    from experiments import boomerang, geometry_selftest, linearization, packet_propagation, relation_batch, solver_hygiene, span_demo

    experiment_list = [
        geometry_selftest.GeometrySelftestDescription,
        packet_propagation.PacketPropagationDescription,
        linearization.LinearizationCrosscheckDescription,
        boomerang.BoomerangDescription,
        relation_batch.RelationBatchDescription,
        span_demo.SpanDemoDescription,
        solver_hygiene.SolverHygieneDescription,
    ]
    return {experiment.get_name(): experiment for experiment in experiment_list}
