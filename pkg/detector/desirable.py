from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from detector.pipeline import DetectionRun, DetectionSettings, arrival_angle, detect_at, persistent, product_trace, sources_summary, \
    tolerance_in_r
from geometry.covector import Covector
from geometry.flow import FORWARD, distance_to_trajectory, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from geometry.observer import ObserverCurve, earliest_observation
from solver.grid import Grid
from solver.wave import WaveOperator
from sources.source import make_box_bump, make_packet, make_timeline_source
from util.errors import PreconditionError
from util.log import log

SEVEN = (0, 1, 2, 3, 4, 5, 6)


@dataclass
class DesirableVerdict:
    """
    Outcome of the desirable-condition test for a quadruple and one candidate x~ on the forward
    flowout of xi_0. None means the candidate could not be tested (a side condition failed or
    the wavefront grazes the observer).
    """
    verdict: Optional[bool]
    xtilde: List[float]
    xhat: Optional[List[float]] = None
    r_expected: Optional[float] = None
    runs: List[DetectionRun] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)
    sources: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "xtilde": self.xtilde, "xhat": self.xhat, "r_expected": self.r_expected,
                "runs": [run.to_dict() for run in self.runs], "flags": self.flags, "sources": self.sources}


def _flow_span(spec: MetricSpec, xi: Covector, until: float) -> float:
    # with xi_t = -1 the base point moves at dt/ds = 2 / beta
    beta = float(np.max(spec.beta(np.array([xi.x]))))
    return 0.75 * max(beta, 1.0) * max(until - xi.base.t, 0.0) + 1e-3


def candidate_points(spec: MetricSpec, xi0: Covector, offsets: Sequence[float], tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[Point]:
    """
    Points of pi o FLO^+(xi_0) whose chart time exceeds that of x_0 by the given offsets, in
    the order given (typically geometrically decreasing).
    """
    geodesic = flow(spec, xi0, _flow_span(spec, xi0, xi0.base.t + 1.5 * max(offsets)), FORWARD, tolerances)
    points = []
    for offset in offsets:
        target = xi0.base.t + offset
        k = int(np.searchsorted(geodesic.X[:, 0], target))
        if k >= len(geodesic.s):
            raise PreconditionError(f"the flowout of xi_0 leaves the chart before t={target:.4g}")
        low, high = geodesic.s[max(k - 1, 0)], geodesic.s[k]
        for _ in range(60):
            middle = 0.5 * (low + high)
            if geodesic.point(spec, middle)[0] < target:
                low = middle
            else:
                high = middle
        points.append(Point(geodesic.point(spec, 0.5 * (low + high))))
    return points


def side_conditions(spec: MetricSpec, quadruple: Sequence[Covector], xhat: Point, tolerance: float,
                    tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[str]:
    """
    Violations of xhat not in pi o FLO^+(xi_j), j = 0..3, and x_0 not in pi o FLO^+(xi_j), j = 1..3.
    """
    x0 = quadruple[0].base
    violations = []
    for j, xi in enumerate(quadruple):
        until = max(xhat.t, x0.t)
        geodesic = flow(spec, xi, _flow_span(spec, xi, until), FORWARD, tolerances, samples_per_unit=32)
        distance, _ = distance_to_trajectory(spec, geodesic, xhat.coords)
        if distance <= tolerance:
            violations.append(f"xhat lies on the flowout of xi_{j} (distance {distance:.3e})")
        if j > 0:
            distance, _ = distance_to_trajectory(spec, geodesic, x0.coords)
            if distance <= tolerance:
                violations.append(f"x_0 lies on the flowout of xi_{j} (distance {distance:.3e})")
    return violations


def desirable_condition_test(spec: MetricSpec, grid: Grid, curve: ObserverCurve, quadruple: Sequence[Covector], xtilde: Point,
                             settings: Optional[DetectionSettings] = None,
                             tolerances: Tolerances = DEFAULT_TOLERANCES) -> DesirableVerdict:
    """
    The seven-source experiment: packets at xi_1, xi_2, xi_3, bumps chi_a at x_0 (indices 0 and 4)
    and at x~ (index 5) and the time-line source at x~ (index 6). The verdict is true iff the
    seven-fold interaction u_0123456 is detected at mu^{-1}(xhat(x~)) under every refinement.

    Raises:
        PreconditionError: If x~ is not on pi o FLO^+(xi_0) or coincides with x_0.
    """
    settings = settings or DetectionSettings()
    settings.check()
    if len(quadruple) != 4:
        raise PreconditionError(f"a quadruple holds four covectors, got {len(quadruple)}")
    xi0 = quadruple[0]
    x0 = xi0.base
    on_flow = max(tolerances.meet, float(np.max(grid.dx)))
    if spec.distance_G(xtilde.coords, x0.coords) <= max(tolerances.distinct, on_flow):
        raise PreconditionError(f"x~ = {xtilde} coincides with x_0")
    geodesic = flow(spec, xi0, _flow_span(spec, xi0, xtilde.t), FORWARD, tolerances)
    distance, _ = distance_to_trajectory(spec, geodesic, xtilde.coords)
    if distance > on_flow:
        raise PreconditionError(f"x~ = {xtilde} is not on the forward flowout of xi_0 (distance {distance:.3e})")

    observation = earliest_observation(spec, curve, xtilde, tolerances)
    verdict = DesirableVerdict(None, xtilde.to_list(), observation.xhat.to_list(), observation.r)
    verdict.flags.extend(observation.flags)
    violations = side_conditions(spec, quadruple, observation.xhat, on_flow, tolerances)
    if violations:
        verdict.flags.extend(violations)
        log.detector_verbose(f"x~={xtilde}: side conditions fail, skipped")
        return verdict
    angle = arrival_angle(spec, curve, observation, tolerances)
    if angle < tolerances.min_angle:
        verdict.flags.append(f"grazing incidence at mu(r={observation.r:.4f}): {angle:.2f} deg")
        return verdict

    operator = WaveOperator(spec, grid)
    for freq_factor, a_factor in settings.refinements:
        freq, a = settings.freq * freq_factor, settings.a * a_factor
        packets = {j: make_packet(spec, grid, quadruple[j], settings.h, freq, settings.order) for j in (1, 2, 3)}
        bump0, _ = make_box_bump(spec, grid, x0, a, settings.h, operator)
        bump5, _ = make_box_bump(spec, grid, xtilde, a, settings.h, operator)
        timeline, _ = make_timeline_source(spec, grid, xtilde, a, freq, settings.order, settings.h, operator)
        terms = {**packets, 0: bump0, 4: bump0, 5: bump5, 6: timeline}
        verdict.sources = sources_summary(terms)

        trace, amplitude = product_trace(spec, grid, curve, {j: term.samples for j, term in terms.items()}, SEVEN, settings, operator)
        width = max(packet.width for packet in packets.values())
        tolerance = tolerance_in_r(curve, observation.r, settings.match * max(a, width) + 2 * grid.dt)
        verdict.runs.append(detect_at(trace, settings, freq, amplitude, observation.r, tolerance, a, tolerances))

    verdict.verdict = persistent(verdict.runs, verdict.flags)
    log.detector(f"desirable condition at x~={xtilde}: {verdict.verdict}")
    return verdict


def desirable_condition(spec: MetricSpec, grid: Grid, curve: ObserverCurve, quadruple: Sequence[Covector], offsets: Sequence[float],
                        settings: Optional[DetectionSettings] = None,
                        tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[DesirableVerdict]:
    """
    Runs the test at candidate points x~ along the flowout of xi_0 (at the given chart-time
    offsets from x_0) and stops at the first positive verdict.
    """
    results = []
    for xtilde in candidate_points(spec, quadruple[0], offsets, tolerances):
        result = desirable_condition_test(spec, grid, curve, quadruple, xtilde, settings, tolerances)
        results.append(result)
        if result.verdict:
            break
    return results
