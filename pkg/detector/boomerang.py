from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from detector.pipeline import DetectionRun, DetectionSettings, arrival_angle, curve_parameter, detect_at, linear_trace, persistent, \
    product_trace, sources_summary, tolerance_in_r
from geometry.causal import NOT_CAUSAL, causal_relation
from geometry.covector import Covector
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from geometry.observer import ObserverCurve, earliest_observation
from solver.grid import Grid
from solver.wave import WaveOperator
from sources.source import make_box_bump, make_packet, make_timeline_source
from util.errors import DomainError, PreconditionError
from util.log import log

ON_CURVE = 1
OFF_CURVE = 2


@dataclass
class BoomerangVerdict:
    """
    Whether x_0 = pi(xi_0) lies on the forward flowout of xi_1, decided from traces on mu.

    `verdict` is None when the test is indeterminate (e.g. grazing incidence at the predicted
    observation point); the reason is in `flags`.
    """
    verdict: Optional[bool]
    case: int
    x0: List[float]
    x1: List[float]
    r_expected: Optional[float]
    runs: List[DetectionRun] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    sources: dict = field(default_factory=dict)
    xtilde: List[List[float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "case": self.case, "x0": self.x0, "x1": self.x1, "r_expected": self.r_expected,
                "runs": [run.to_dict() for run in self.runs], "flags": self.flags, "sources": self.sources,
                "xtilde": self.xtilde}


def _on_curve_runs(spec: MetricSpec, grid: Grid, curve: ObserverCurve, xi1: Covector, r0: float, settings: DetectionSettings,
                   tolerances: Tolerances, operator: WaveOperator) -> List[DetectionRun]:
    runs = []
    for freq_factor in sorted({factor for factor, _ in settings.refinements}):
        freq = settings.freq * freq_factor
        packet = make_packet(spec, grid, xi1, settings.h, freq, settings.order)
        trace, peak = linear_trace(spec, grid, curve, packet.samples, operator, label=f"u1 (freq {freq:g})")
        tolerance = tolerance_in_r(curve, r0, settings.match * packet.width + 2 * grid.dt)
        runs.append(detect_at(trace, settings, freq, peak, r0, tolerance, 0.0, tolerances))
    return runs


def nearby_point(spec: MetricSpec, x0: Point, radius: float, rng: np.random.Generator, attempts: int = 32) -> Point:
    """
    A point x~ of the chart at G-distance `radius` from x_0, displaced in space along a random direction.

    Raises:
        DomainError: If no such point lies inside the chart box.
    """
    if radius <= 0:
        return x0
    weights = spec.aux_weights[1:]
    for _ in range(attempts):
        v = rng.normal(size=spec.d)
        v *= radius / np.sqrt(np.sum(weights * v * v))
        X = x0.coords + np.concatenate([[0.0], v])
        if spec.inside(X):
            return Point(X)
    raise DomainError(f"no point at distance {radius:g} from {x0} inside the chart")


def boomerang_test(spec: MetricSpec, grid: Grid, curve: ObserverCurve, xi0: Covector, xi1: Covector,
                   settings: Optional[DetectionSettings] = None, tolerances: Tolerances = DEFAULT_TOLERANCES,
                   seed: int = 0) -> BoomerangVerdict:
    """
    Decides x_0 in pi o FLO^+(xi_1) from measurements on mu.

    When x_0 lies on mu (case 1) a packet launched at xi_1 is traced along mu and must be detected
    at mu^{-1}(x_0). Otherwise (case 2) every refinement draws x~ at distance `settings.offset * a`
    from x_0 (seeded by `seed`), and the three-fold interaction u_156 of that packet with a bump
    chi_a at x~ and the time-line source at x~ must be detected at mu^{-1}(xhat(x~)).
    The verdict is true iff the detection persists under every refinement in `settings`.

    Raises:
        PreconditionError: If x_0 equals x_1 or is not in the causal future of x_1 (the null cone of x_1 is allowed).
    """
    settings = settings or DetectionSettings()
    settings.check()
    x0, x1 = xi0.base, xi1.base
    if spec.distance_G(x0.coords, x1.coords) <= tolerances.distinct:
        raise PreconditionError(f"x_0 = {x0} coincides with x_1")
    if causal_relation(spec, x1, x0, tolerances) == NOT_CAUSAL:
        raise PreconditionError(f"{x0} is not in the causal future of {x1}")

    operator = WaveOperator(spec, grid)
    on_curve = max(tolerances.meet, float(np.max(grid.dx)))
    r0, distance = curve_parameter(spec, curve, x0)
    if distance <= on_curve:
        log.detector_verbose(f"x0 lies on the observer at r={r0:.4f}")
        runs = _on_curve_runs(spec, grid, curve, xi1, r0, settings, tolerances, operator)
        verdict = BoomerangVerdict(None, ON_CURVE, x0.to_list(), x1.to_list(), r0, runs)
        verdict.verdict = persistent(runs, verdict.flags)
        return verdict

    verdict = BoomerangVerdict(None, OFF_CURVE, x0.to_list(), x1.to_list(), None)
    rng = np.random.default_rng(seed)
    for freq_factor, a_factor in settings.refinements:
        freq, a = settings.freq * freq_factor, settings.a * a_factor
        xtilde = nearby_point(spec, x0, settings.offset * a, rng)
        if curve_parameter(spec, curve, xtilde)[1] <= on_curve:
            verdict.flags.append(f"x~ = {xtilde} lies on the observer")
            return verdict
        observation = earliest_observation(spec, curve, xtilde, tolerances)
        if observation.flagged:
            verdict.flags.extend(observation.flags)
        angle = arrival_angle(spec, curve, observation, tolerances)
        if angle < tolerances.min_angle:
            verdict.flags.append(f"grazing incidence at mu(r={observation.r:.4f}): {angle:.2f} deg")
            return verdict
        if verdict.r_expected is None:
            verdict.r_expected = observation.r
        verdict.xtilde.append(xtilde.to_list())

        packet = make_packet(spec, grid, xi1, settings.h, freq, settings.order)
        bump, _ = make_box_bump(spec, grid, xtilde, a, settings.h, operator)
        timeline, _ = make_timeline_source(spec, grid, xtilde, a, freq, settings.order, settings.h, operator)
        terms = {1: packet, 5: bump, 6: timeline}
        verdict.sources = sources_summary(terms)
        trace, amplitude = product_trace(spec, grid, curve, {j: term.samples for j, term in terms.items()}, (1, 5, 6), settings, operator)
        tolerance = tolerance_in_r(curve, observation.r, settings.match * max(a, packet.width) + 2 * grid.dt)
        verdict.runs.append(detect_at(trace, settings, freq, amplitude, observation.r, tolerance, a, tolerances))

    verdict.verdict = persistent(verdict.runs, verdict.flags)
    log.detector(f"boomerang x0={x0} from {x1}: {verdict.verdict}")
    return verdict
