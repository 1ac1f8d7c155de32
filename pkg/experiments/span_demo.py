from typing import List

import numpy as np

from detector.desirable import desirable_condition
from experiments import experiment
from geometry.covector import Covector, null_covector
from geometry.metric import MetricSpec, Point, Tolerances, metric_at
from scattering.generator import R2, SPAN_FALSE, span_null_covector, witness_quadruple
from scattering.interaction import interaction_curve
from scattering.span import lightcone_span_adjust, span_check
from solver.grid import Grid
from util.errors import InfeasibleError
from util.log import log
from util.resultcsv import write_columns, write_json

SCALES = (1e-3, 1e-4, 1e-5)


class SpanDemo(experiment.Experiment):
    """
    The span condition in 1+3 dimensions: the span adjustment on one tangent space, the
    interaction curve of three light cones through a witness, and (with a grid) the desirable
    condition for eta_0 inside and outside span(eta_1, eta_2, eta_3).
    """

    @property
    def name(self) -> str:
        return "span-demo-1p3"

    @property
    def description(self) -> str:
        return f"Span condition on {self.spec.name}"

    def witness(self) -> Point:
        spec = self.spec
        center = 0.5 * (spec.lower + spec.upper)
        if "grid" in self.config:
            grid = self.grid
            center = np.concatenate([[grid.t_start + 0.55 * (grid.t_end - grid.t_start)], 0.5 * (grid.lower + grid.upper)])
        return Point(self.parameter("meet", center.tolist()))

    def cone_directions(self, y: Point, rng: np.random.Generator) -> List[Covector]:
        directions = self.parameter("directions", None)
        if directions is None:
            directions = np.eye(3, self.spec.d) + 0.1 * rng.normal(size=(3, self.spec.d))
        return [null_covector(self.spec, y, direction, True, self.tolerances) for direction in directions]

    def outside_span(self, y: Point, etas: List[Covector], rng: np.random.Generator) -> Covector:
        for _ in range(100):
            eta0 = null_covector(self.spec, y, rng.normal(size=self.spec.d), True, self.tolerances)
            if span_check([eta0] + etas, self.tolerances).residual > 1e-2:
                return eta0
        raise InfeasibleError("no null covector outside span(eta_1, eta_2, eta_3) found")

    def run(self):
        rng = np.random.default_rng(self.seed)
        y = self.witness()
        etas = self.cone_directions(y, rng)
        eta0 = span_null_covector(self.spec, y, etas, float(self.parameter("mix", 0.7)), self.tolerances)
        self.adjustment(y, eta0, etas, rng)
        if self.spec.d != 3:
            log.experiment(f"interaction curve and span pipeline need 1+3 dimensions, the chart has 1+{self.spec.d}", self)
            return
        travel = list(self.parameter("travel", [0.8, 0.9, 1.0, 1.1]))
        inside = witness_quadruple(self.spec, y, eta0, etas, travel, R2, self.tolerances)
        self.curve_of_interaction(inside.quad, y, inside.sigmas)
        if "grid" in self.config:
            outside = witness_quadruple(self.spec, y, self.outside_span(y, etas, rng), etas, travel, SPAN_FALSE, self.tolerances)
            self.pipeline(inside.quad, outside.quad)

    def adjustment(self, y: Point, eta0: Covector, etas: List[Covector], rng: np.random.Generator):
        g, _, _ = metric_at(self.spec, y)
        limit = self.limit("adjustment", 1e-10)
        exact = lightcone_span_adjust(g, eta0, *etas)
        self.check("span adjustment round trip", exact.xi1, limit * max(1.0, float(np.linalg.norm(etas[0].xi))), expected=etas[0].xi,
                   detail=f"theta={exact.theta:.3e}")

        w = rng.normal(size=self.spec.n)
        w /= np.linalg.norm(w)
        changes = []
        worst_cone, worst_span = 0.0, 0.0
        for scale in SCALES:
            perturbed = eta0.xi + scale * w
            adjusted = lightcone_span_adjust(g, perturbed, *etas)
            changes.append(float(np.linalg.norm(adjusted.xi1 - etas[0].xi)))
            worst_cone = max(worst_cone, adjusted.residual)
            worst_span = max(worst_span, span_check([perturbed, adjusted.xi1, etas[1].xi, etas[2].xi], self.tolerances).residual)
        self.check("adjusted covector lightlike", worst_cone, limit)
        self.check("perturbed covector in the adjusted span", worst_span, limit)
        slopes = np.diff(np.log(changes)) / np.diff(np.log(SCALES))
        self.check("first-order perturbation slope", slopes, self.limit("slope", 0.2), expected=np.ones_like(slopes),
                   detail=f"changes {[f'{c:.3e}' for c in changes]}")

    def curve_of_interaction(self, quad: List[Covector], y: Point, sigmas: List[float]):
        curve = interaction_curve(self.spec, *quad[1:], y.coords, self.tolerances, seeds=sigmas[1:])
        columns = {"t": curve.points[:, 0]}
        for i in range(1, self.spec.n):
            columns[f"x{i}"] = curve.points[:, i]
        columns.update({"spacelike": curve.spacelike, "rank": curve.ranks, "annihilation": curve.annihilation})
        write_columns(self.path("interaction_curve.csv"), columns)
        self.check("interaction curve samples", len(curve.points), 3.0, at_least=True, detail="; ".join(curve.flags))
        self.check("interaction curve spacelike", int(np.sum(~curve.spacelike)), 0.0)
        self.check("cone conormals independent", int(np.sum(curve.ranks != 3)), 0.0)
        self.check("conormals annihilate the tangent", float(np.nanmax(curve.annihilation)), self.limit("annihilation", 1e-6))

    def pipeline(self, inside: List[Covector], outside: List[Covector]):
        settings = self.settings()
        offsets = tuple(self.parameter("offsets", [0.8, 0.4, 0.2]))
        details = {}
        for factor in self.parameter("resolutions", [1]):
            grid: Grid = self.grid.refined(int(factor)) if int(factor) > 1 else self.grid
            for label, quad, expected in (("in-span", inside, True), ("out-of-span", outside, False)):
                results = desirable_condition(self.spec, grid, self.curve, quad, offsets, settings, self.tolerances)
                verdict = any(result.verdict is True for result in results)
                details[f"{label} x{factor}"] = [result.to_dict() for result in results]
                self.check(f"{label} detection at {factor}x resolution", float(verdict == expected), 1.0, at_least=True,
                           detail=f"pipeline {verdict}, expected {expected}")
        write_json(self.path("pipeline.json"), details)


class SpanDemoDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "span-demo-1p3"

    @staticmethod
    def get_description() -> str:
        return "Span adjustment, interaction curve and the in-span / out-of-span pipeline pair"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return SpanDemo(spec, config, output_dir, tolerances, seed, jobs)
