from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json
from scipy.optimize import minimize_scalar

from detector.singularity import SingularityReport, detect_trace_singularities
from geometry.flow import FORWARD, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from geometry.observer import ObserverCurve, Observation, incidence_angle
from solver.cascade import CascadePlan, amplitude_eps, epsilon_stencil, key_of, name_of, solve_cascade
from solver.forcing import SampledSource
from solver.grid import Grid
from solver.trace import TraceSeries, trace_along
from solver.wave import Recording, WaveOperator, solve_linear
from util.errors import ConfigurationError
from util.log import log

CASCADE = "cascade"
STENCIL = "stencil"


@dataclass_json
@dataclass
class DetectionSettings:
    """
    Source and detector parameters of the boomerang and desirable-condition tests.

    Attributes:
        h (float): Cone width of the packets.
        a (float): Radius of the bumps at x_0 and x~ (0 < a < h).
        freq (float): Carrier frequency of the packets and the time-line source.
        order (int): N of the smoothing <D>^{-N}.
        band (List[float]): Pass band as multiples of the carrier frequency.
        floor_ratio (float): Absolute detection floor relative to the product of first-order sup norms.
        smoothing (float): Envelope smoothing in carrier periods.
        match (float): Location tolerance in units of max(a, packet envelope width).
        refinements (List[List[float]]): (frequency factor, a factor) pairs a verdict has to persist under.
        method (str): cascade (direct multi-fold linearization) or stencil (eps finite differences).
        eps_scale (float): eps_j * sup |u_j| for the stencil method.
        jobs (int): Worker processes for the stencil corners.
        offset (float): Distance of x~ from x_0 in the boomerang test, as a fraction of a (0 puts the sources at x_0).
    """
    h: float = 0.3
    a: float = 0.2
    freq: float = 4.0
    order: int = 2
    band: List[float] = field(default_factory=lambda: [0.5, 2.0])
    floor_ratio: float = 1e-8
    smoothing: float = 4.0
    match: float = 2.0
    refinements: List[List[float]] = field(default_factory=lambda: [[1.0, 1.0], [2.0, 1.0], [1.0, 0.5]])
    method: str = CASCADE
    eps_scale: float = 2e-2
    jobs: int = 1
    offset: float = 0.5

    def check(self):
        if not 0 < self.a < self.h < 1:
            raise ConfigurationError(f"need 0 < a < h < 1, got a={self.a}, h={self.h}")
        if not 0 < self.band[0] < 1 < self.band[1]:
            raise ConfigurationError(f"band factors {self.band} must bracket the carrier frequency")
        if self.method not in (CASCADE, STENCIL):
            raise ConfigurationError(f"unknown method '{self.method}'")
        if not self.refinements:
            raise ConfigurationError("at least one refinement is needed")
        if not 0 <= self.offset < 1:
            raise ConfigurationError(f"offset must lie in [0, 1), got {self.offset}")

    def band_for(self, freq: float) -> Tuple[float, float]:
        return self.band[0] * freq, self.band[1] * freq


@dataclass
class DetectionRun:
    """One refinement level of a test: its parameters, the expected location and what was found."""
    freq: float
    a: float
    r_expected: float
    tolerance: float
    hit: bool
    report: SingularityReport

    def to_dict(self) -> dict:
        return {"freq": self.freq, "a": self.a, "r_expected": self.r_expected, "tolerance": self.tolerance, "hit": self.hit,
                "report": self.report.to_dict()}


def curve_parameter(spec: MetricSpec, curve: ObserverCurve, x: Point) -> Tuple[float, float]:
    """The parameter r minimizing d_G(mu(r), x), with that distance."""
    r_samples, X = curve.samples(401)
    k = int(np.argmin(spec.distance_G(X, x.coords)))
    low, high = r_samples[max(k - 1, 0)], r_samples[min(k + 1, len(r_samples) - 1)]
    result = minimize_scalar(lambda r: float(spec.distance_G(curve.mu(r), x.coords)), bounds=(low, high), method="bounded",
                             options={"xatol": 1e-12})
    return float(result.x), float(result.fun)


def tolerance_in_r(curve: ObserverCurve, r: float, time_tolerance: float) -> float:
    """Converts a chart-time window at mu(r) into a curve-parameter window."""
    rate = float(curve.velocity(r)[0])
    return time_tolerance / rate


def arrival_angle(spec: MetricSpec, curve: ObserverCurve, observation: Observation, tolerances: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Incidence angle at xhat of the wavefront carried by xi_mu from x."""
    geodesic = flow(spec, observation.xi_mu, observation.s, FORWARD, tolerances, samples_per_unit=16)
    arriving = geodesic.covector_at(spec, geodesic.s_max, tolerances)
    return incidence_angle(spec, curve, observation.r, arriving)


def curve_recording(grid: Grid, curve: ObserverCurve) -> Recording:
    return Recording.around(grid, curve.samples(65)[1])


def linear_trace(spec: MetricSpec, grid: Grid, curve: ObserverCurve, source: SampledSource,
                 operator: Optional[WaveOperator] = None, label: str = "u") -> Tuple[TraceSeries, float]:
    """mu^* u for box_g u = source, with sup |u| over the grid."""
    history = solve_linear(spec, grid, source, curve_recording(grid, curve), operator)
    return trace_along(curve, history, label=label), history.sup_norm()


def product_trace(spec: MetricSpec, grid: Grid, curve: ObserverCurve, sources: Mapping[int, SampledSource], indices: Sequence[int],
                  settings: DetectionSettings, operator: Optional[WaveOperator] = None) -> Tuple[TraceSeries, float]:
    """
    mu^* d_{eps_J} u at eps = 0 for the given sources, together with the product of the
    first-order sup norms (the amplitude the detection floor is relative to).
    """
    key = key_of(list(indices))
    recording = curve_recording(grid, curve)
    if settings.method == CASCADE:
        result = solve_cascade(spec, grid, sources, CascadePlan.build(key), recording, curve=curve, operator=operator)
        scale = float(np.prod([result.histories[(j,)].sup_norm() for j in key]))
        return result.traces[key], scale

    eps = amplitude_eps(spec, grid, sources, key, settings.eps_scale)
    run = epsilon_stencil(spec, grid, sources, key, eps, recording, curve, jobs=settings.jobs)
    scale = float(np.prod([settings.eps_scale / eps[j] for j in key]))
    return run.trace, scale


def detect_at(trace: TraceSeries, settings: DetectionSettings, freq: float, amplitude: float, r_expected: float, tolerance: float,
              a: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> DetectionRun:
    floor = (settings.floor_ratio * amplitude) ** 2
    report = detect_trace_singularities(trace, settings.band_for(freq), tolerances.det, floor, smoothing=settings.smoothing)
    hit = report.near(r_expected, tolerance)
    log.detector_verbose(f"{trace.label}: expected r={r_expected:.4f} +- {tolerance:.4f}, "
                         f"found {[round(x, 4) for x in report.locations]} -> {'hit' if hit else 'miss'}")
    return DetectionRun(freq, a, r_expected, tolerance, hit, report)


def persistent(runs: Sequence[DetectionRun], flags: List[str]) -> bool:
    """True iff every refinement detected at its expected location."""
    hits = [run.hit for run in runs]
    if any(hits) and not all(hits):
        flags.append(f"detection does not persist under refinement ({sum(hits)}/{len(hits)} runs)")
    for run in runs:
        run.report.consistent = all(hits)
    return all(hits)


def describe(indices: Sequence[int]) -> str:
    return name_of(key_of(list(indices)))


def sources_summary(terms: Dict[int, object]) -> Dict[str, dict]:
    return {str(j): term.to_dict() for j, term in sorted(terms.items())}
