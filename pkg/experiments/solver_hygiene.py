from typing import List

import numpy as np

from experiments import experiment
from geometry.metric import MetricSpec, Tolerances
from solver.forcing import SampledSource, local_box
from solver.grid import Grid
from solver.wave import FieldHistory, Recording, WaveOperator, energy_drift, solve_linear
from sources.source import box_points, bump_profile
from util.log import log
from util.resultcsv import write_columns


class SolverHygiene(experiment.Experiment):
    """
    Checks of the linear solver itself: conservation of the discrete energy on a reflecting
    grid once the forcing is off, the convergence order on a refinement triple, and containment
    of the field in the causal future of its source.
    """

    @property
    def name(self) -> str:
        return "solver-hygiene"

    @property
    def description(self) -> str:
        return f"Solver hygiene on {self.spec.name}"

    def source_center(self, grid: Grid) -> np.ndarray:
        default = [grid.t_start + 0.25 * (grid.t_end - grid.t_start)] + (0.5 * (grid.lower + grid.upper)).tolist()
        return np.asarray(self.parameter("center", default), dtype=float)

    def smooth_source(self, grid: Grid, center: np.ndarray, a: float) -> SampledSource:
        """f = chi_a sampled on the grid (a smooth right-hand side, not box_g of a known field)."""
        first, last, box = local_box(grid, center, a / np.sqrt(self.spec.aux_weights))
        return SampledSource(first, box, bump_profile(self.spec, box_points(grid, first, last, box), center, a))

    def run(self):
        a = float(self.parameter("a", 0.5))
        self.conservation(a)
        self.convergence(a)
        self.containment(a)

    def conservation(self, a: float):
        if not self.spec.static:
            log.experiment("energy conservation needs a static metric, skipped", self)
            return
        grid = Grid.from_config(self.spec, self.config["grid"], reflecting=True)
        source = self.smooth_source(grid, self.source_center(grid), a)
        history = solve_linear(self.spec, grid, source, Recording(energy=True))
        drift = energy_drift(history, source.last_level + 1)
        write_columns(self.path("energy.csv"), {"t": grid.times[1:], "energy": history.energy})
        self.check("energy drift after the forcing", drift, self.limit("energy_drift", 1e-3),
                   detail=f"{grid.steps - source.last_level} levels without forcing")

    def convergence(self, a: float):
        grids: List[Grid] = [self.grid, self.grid.refined(2), self.grid.refined(4)]
        finals = []
        for grid in grids:
            source = self.smooth_source(grid, self.source_center(grid), a)
            finals.append(solve_linear(self.spec, grid, source, operator=WaveOperator(self.spec, grid)).final.u)
        coarse = tuple(slice(None, None, 2) for _ in range(self.spec.d))
        coarsest = tuple(slice(None, None, 4) for _ in range(self.spec.d))
        e1 = float(np.max(np.abs(finals[0] - finals[1][coarse])))
        e2 = float(np.max(np.abs(finals[1][coarse] - finals[2][coarsest])))
        order = float(np.log2(e1 / e2)) if e2 > 0 else float("inf")
        self.check("convergence order", order, self.limit("order", 1.9), at_least=True,
                   detail=f"differences {e1:.3e}, {e2:.3e} at t={self.grid.t_end:.4g}")

    def containment(self, a: float):
        grid = self.grid
        center = self.source_center(grid)
        source = self.smooth_source(grid, center, a)
        history: FieldHistory = solve_linear(self.spec, grid, source, Recording(stride=int(self.parameter("stride", 8))))
        radius = a / np.sqrt(self.spec.aux_weights)
        onset = center[0] - radius[0]
        threshold = float(self.parameter("support_threshold", 1e-4)) * max(history.sup_norm(), 1e-300)

        mesh = np.stack(np.meshgrid(*grid.axes, indexing="ij"), axis=-1)
        distance = np.sqrt(np.sum((mesh - center[1:]) ** 2, axis=-1))
        low, high = grid.interior_bounds()
        interior = np.all((mesh >= low) & (mesh <= high), axis=-1)

        excess = []
        for level, snapshot in zip(history.levels, history.data):
            reach = float(np.max(radius[1:])) + grid.c_max * max(grid.times[level] - onset, 0.0)
            support = (np.abs(snapshot) > threshold) & interior
            beyond = float(np.max(distance[support]) - reach) if np.any(support) else -reach
            excess.append(max(beyond, 0.0) / float(np.min(grid.dx)))
        write_columns(self.path("containment.csv"), {"t": grid.times[history.levels], "excess_cells": excess})
        self.check("support beyond the causal future", max(excess), self.limit("containment_cells", 2.0), detail="in cells")


class SolverHygieneDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "solver-hygiene"

    @staticmethod
    def get_description() -> str:
        return "Energy conservation, convergence order and finite propagation of the linear solver"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return SolverHygiene(spec, config, output_dir, tolerances, seed, jobs)
