from typing import List

import numpy as np

from detector.boomerang import boomerang_test
from detector.pipeline import DetectionSettings
from experiments import experiment
from geometry.covector import Covector, normalize, null_covector
from geometry.flow import BACKWARD, FORWARD, distance_to_trajectory, flow
from geometry.metric import MetricSpec, Point, Tolerances
from solver.grid import Grid
from sources.source import make_packet
from util.errors import LabError
from util.jobs import parallel_map
from util.log import log
from util.resultcsv import ResultCSV

PAIR_COLUMNS = ["pair", "x0", "x1", "xi0", "xi1", "case", "oracle", "pipeline", "margin", "r_expected", "flags"]


def _evaluate_pair(task) -> dict:
    index, spec, grid, curve, xi0, xi1, oracle, margin, settings, tolerances, seed = task
    row = {"pair": index, "x0": xi0.base.to_list(), "x1": xi1.base.to_list(), "xi0": xi0.xi.tolist(), "xi1": xi1.xi.tolist(),
           "case": None, "oracle": oracle, "pipeline": None, "margin": margin, "r_expected": None, "flags": []}
    try:
        verdict = boomerang_test(spec, grid, curve, xi0, xi1, settings, tolerances, seed)
        row.update({"case": verdict.case, "pipeline": verdict.verdict, "r_expected": verdict.r_expected, "flags": verdict.flags})
    except LabError as e:
        row["flags"] = [f"{type(e).__name__}: {e}"]
        log.warn(f"pair {index}: {e}")
    return row


class Boomerang(experiment.Experiment):
    """
    Sampled (xi_0, xi_1) pairs, half of them with x_0 on the forward flowout of xi_1, decided by
    the wave pipeline and compared with the incidence oracle (distance of x_0 to the ray).
    """

    @property
    def name(self) -> str:
        return "boomerang"

    @property
    def description(self) -> str:
        return f"Boomerang pairs on {self.spec.name}"

    def _inside(self, point: np.ndarray, margin: float) -> bool:
        low, high = self.grid.interior_bounds()
        return bool(np.all(point[1:] >= low + margin) and np.all(point[1:] <= high - margin)
                    and self.grid.t_start + margin <= point[0] <= self.grid.t_end - margin)

    def _random_direction(self, rng: np.random.Generator) -> np.ndarray:
        v = rng.normal(size=self.spec.d)
        return v / np.linalg.norm(v)

    def _along(self, xi: Covector, dt: float, direction: int) -> Covector:
        """The normalized covector reached after the chart time changed by dt along the ray of xi."""
        s = 0.5 * dt * float(self.spec.beta(xi.x))
        ray = flow(self.spec, xi, s, direction, self.tolerances, samples_per_unit=64)
        return normalize(self.spec, ray.covector_at(self.spec, ray.s_max, self.tolerances), self.tolerances)

    def sample_pairs(self, settings: DetectionSettings) -> List[tuple]:
        spec, grid = self.spec, self.grid
        rng = np.random.default_rng(self.seed)
        count = int(self.parameter("pairs", 20))
        travel = self.parameter("travel", [0.8, 1.4])
        miss = float(self.parameter("miss", 0.5))
        margin = 2 * settings.h
        low, high = grid.interior_bounds()
        span = grid.t_end - grid.t_start

        pairs = []
        if self.parameter("on_curve", True):
            x0 = Point(self.curve.mu(float(self.parameter("on_curve_r", 0.2))))
            xi0 = null_covector(spec, x0, self._random_direction(rng), True, self.tolerances)
            xi1 = self._along(null_covector(spec, x0, self._random_direction(rng), True, self.tolerances), float(np.mean(travel)), BACKWARD)
            pairs.append((xi0, xi1))

        attempts = 0
        while len(pairs) < count:
            attempts += 1
            if attempts > 50 * count:
                log.warn(f"{self.name}: only {len(pairs)} of {count} pairs fit the grid")
                break
            start = np.concatenate([[rng.uniform(grid.t_start + margin, grid.t_start + 0.4 * span)], rng.uniform(low + margin, high - margin)])
            direction = self._random_direction(rng)
            try:
                xi1 = null_covector(spec, Point(start), direction, True, self.tolerances)
                y = self._along(xi1, float(rng.uniform(*travel)), FORWARD).x
            except LabError:
                continue
            if len(pairs) % 2 == 1:
                perpendicular = self._random_direction(rng)
                perpendicular -= (perpendicular @ direction) * direction
                perpendicular /= max(np.linalg.norm(perpendicular), 1e-12)
                y = y + miss * np.concatenate([[1.0], perpendicular])
            if not self._inside(y, margin):
                continue
            xi0 = null_covector(spec, Point(y), self._random_direction(rng), True, self.tolerances)
            pairs.append((xi0, xi1))
        return pairs

    def oracle(self, xi0: Covector, xi1: Covector, grid: Grid) -> tuple:
        """Incidence of x_0 on the forward ray of xi_1 and the distance to it."""
        s = 0.5 * (xi0.base.t - xi1.base.t + 1.0) * float(np.max(self.spec.beta(np.array([xi1.x, xi0.x]))))
        ray = flow(self.spec, xi1, max(s, 1e-3), FORWARD, self.tolerances)
        distance, _ = distance_to_trajectory(self.spec, ray, xi0.x)
        return distance <= max(self.tolerances.meet, float(np.max(grid.dx))), distance

    def run(self):
        settings = self.settings()
        grid, curve = self.grid, self.curve
        width = make_packet(self.spec, grid, null_covector(self.spec, Point(curve.mu(0.0)), [1.0] + [0.0] * (self.spec.d - 1), True,
                                                           self.tolerances), settings.h, settings.freq, settings.order).width

        tasks = []
        for index, (xi0, xi1) in enumerate(self.sample_pairs(settings)):
            incident, distance = self.oracle(xi0, xi1, grid)
            tasks.append((index, self.spec, grid, curve, xi0, xi1, incident, distance / width, settings, self.tolerances,
                          self.seed * 1000 + index))
        rows = parallel_map(_evaluate_pair, tasks, self.jobs, description="boomerang pairs")
        self.write(rows)

        decided = [row for row in rows if row["pipeline"] is not None]
        agree = [row for row in decided if row["pipeline"] == row["oracle"]]
        confident = [row for row in decided if row["pipeline"] != row["oracle"] and row["margin"] > 5.0]
        self.check("pairs decided", len(decided), None, detail=f"{len(rows) - len(decided)} indeterminate")
        self.check("agreement with the incidence oracle", len(agree) / max(len(rows), 1), self.limit("agreement", 0.9), at_least=True,
                   detail=f"{len(agree)}/{len(rows)}")
        self.check("disagreements beyond five envelope widths", len(confident), 0.0)

    def write(self, rows: List[dict]):
        with ResultCSV(self.path("verdicts.csv"), PAIR_COLUMNS) as out:
            for row in rows:
                out.row({**row, "flags": "; ".join(row["flags"])})


class BoomerangDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "boomerang"

    @staticmethod
    def get_description() -> str:
        return "Boomerang test on sampled pairs against the geometric incidence oracle"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return Boomerang(spec, config, output_dir, tolerances, seed, jobs)
