from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.distance import directed_hausdorff

from geometry.causal import cut_function
from geometry.covector import Covector, covector, hamilton_field
from geometry.flow import BACKWARD, FORWARD, Bicharacteristic, distance_to_trajectory, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Tolerances
from geometry.observer import ObserverCurve, earliest_observation
from scattering.span import SpanResult, span_check
from util.errors import DomainError, IntegrationError, PreconditionError
from util.log import log

CUT_MARGIN = 0.05


@dataclass
class Meeting:
    """
    Outcome of the R1 search: whether the past ray of xi_0 and the future rays of xi_1, xi_2,
    xi_3 meet, with the flow parameters sigma_j (magnitudes) and the witness y.
    """
    holds: Optional[bool]
    residual: float
    sigmas: List[float]
    witness: Optional[List[float]]
    flags: List[str] = field(default_factory=list)

    def __iter__(self):
        yield self.holds
        yield self.witness


@dataclass
class QuadrupleVerdict:
    """
    Oracle and pipeline verdicts for one quadruple (xi_0, xi_1, xi_2, xi_3). Boolean fields are
    None when indeterminate; `flags` says why.
    """
    id: int
    quad: List[dict]
    chronological: Optional[bool] = None
    r1: Optional[bool] = None
    r1_residual: Optional[float] = None
    witness: Optional[List[float]] = None
    sigmas: Optional[List[float]] = None
    distinct: Optional[bool] = None
    before_cut: Optional[bool] = None
    cut_margins: Optional[List[float]] = None
    span: Optional[SpanResult] = None
    r2: Optional[bool] = None
    non_return: Optional[bool] = None
    non_return_margins: Dict[str, float] = field(default_factory=dict)
    pipeline: Optional[bool] = None
    pipeline_details: List[dict] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.id, "quad": self.quad, "chronological": self.chronological, "r1": self.r1, "r1_residual": self.r1_residual,
            "witness": self.witness, "sigmas": self.sigmas, "distinct": self.distinct, "before_cut": self.before_cut,
            "cut_margins": self.cut_margins, "span": None if self.span is None else self.span.to_dict(), "r2": self.r2,
            "non_return": self.non_return, "non_return_margins": self.non_return_margins, "pipeline": self.pipeline,
            "pipeline_details": self.pipeline_details, "flags": self.flags,
        }

    def row(self) -> dict:
        return {
            "quad": self.id, "chronological": self.chronological, "r1": self.r1, "r2": self.r2, "non_return": self.non_return,
            "pipeline": self.pipeline, "r1_residual": self.r1_residual,
            "span_residual": None if self.span is None else self.span.residual,
            "cut_margin": None if not self.cut_margins else min(self.cut_margins),
            "witness": self.witness, "flags": "; ".join(self.flags),
        }


VERDICT_COLUMNS = ["quad", "chronological", "r1", "r2", "non_return", "pipeline", "r1_residual", "span_residual", "cut_margin",
                   "witness", "flags"]


def _check_quadruple(quad: Sequence[Covector]):
    if len(quad) != 4:
        raise PreconditionError(f"a quadruple holds four covectors, got {len(quad)}")
    for j, xi in enumerate(quad):
        if not (xi.lightlike and xi.future):
            raise PreconditionError(f"xi_{j} = {xi} is not future lightlike")


def chart_flow(spec: MetricSpec, xi: Covector, direction: int, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Bicharacteristic:
    """The bicharacteristic of xi in `direction` until it leaves the chart box."""
    span = float(spec.upper[0] - spec.lower[0])
    beta = float(np.max(spec.beta(np.array([xi.x]))))
    speed = max(abs(float(hamilton_field(spec, xi.x, xi.xi)[0][0])), 1e-12)
    s_max = 4.0 * max(beta, 1.0) * span / speed
    return flow(spec, xi, s_max, direction, tolerances, samples_per_unit=max(16, int(64 * speed)))


def ray_flows(spec: MetricSpec, quad: Sequence[Covector], tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[Bicharacteristic]:
    """The past ray of xi_0 followed by the future rays of xi_1, xi_2, xi_3."""
    return [chart_flow(spec, quad[0], BACKWARD, tolerances)] + [chart_flow(spec, xi, FORWARD, tolerances) for xi in quad[1:]]


def _meeting_starts(spec: MetricSpec, curves: Sequence[Bicharacteristic], count: int, rng: np.random.Generator) -> List[np.ndarray]:
    past = curves[0]
    stride = max(1, len(past.s) // 400)
    candidates = past.X[::stride]
    cost = np.zeros(len(candidates))
    nearest = []
    for curve in curves[1:]:
        distances = spec.distance_G(candidates[:, None, :], curve.X[None, :, :])
        index = np.argmin(distances, axis=1)
        cost += distances[np.arange(len(candidates)), index] ** 2
        nearest.append(curve.s[index])
    order = np.argsort(cost)[:count]
    starts = [np.array([past.s[::stride][k]] + [s[k] for s in nearest]) for k in order]
    starts.append(np.array([rng.uniform(0, c.s_max) for c in curves]))
    return starts


def oracle_r1(spec: MetricSpec, quad: Sequence[Covector], tolerances: Tolerances = DEFAULT_TOLERANCES, starts: int = 4, seed: int = 0,
              curves: Optional[Sequence[Bicharacteristic]] = None) -> Meeting:
    """
    (R1): pi o FLO^-(xi_0) meets pi o FLO^+(xi_1), pi o FLO^+(xi_2) and pi o FLO^+(xi_3) in a common point.

    Minimizes sum_j d_G(gamma_xi_0(-sigma_0), gamma_xi_j(sigma_j))^2 over the flow parameters, started
    from the best sampled near-meetings plus a random start. The verdict is true iff the optimum is
    at most tau_meet^2, and indeterminate when no start converged.
    """
    _check_quadruple(quad)
    curves = list(curves) if curves is not None else ray_flows(spec, quad, tolerances)
    weights = np.sqrt(spec.aux_weights)

    def residual(sigma):
        points = [curve.point(spec, s) for curve, s in zip(curves, sigma)]
        return np.concatenate([weights * spec.difference(points[j], points[0]) for j in (1, 2, 3)])

    lower = np.zeros(4)
    upper = np.array([curve.s_max for curve in curves])
    best, converged = None, False
    for start in _meeting_starts(spec, curves, starts, np.random.default_rng(seed)):
        start = np.clip(start, lower, upper)
        try:
            result = least_squares(residual, start, bounds=(lower, upper + 1e-15), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
        except (IntegrationError, ValueError) as e:
            log.warn_verbose(f"meeting search failed from {start}: {e}")
            continue
        converged = converged or result.status > 0
        if best is None or result.cost < best.cost:
            best = result
        if 2 * best.cost <= tolerances.meet ** 2:
            break

    if best is None:
        return Meeting(None, float("nan"), [], None, ["meeting search failed from every start"])
    value = float(np.sqrt(2 * best.cost))
    sigmas = [float(s) for s in best.x]
    points = np.array([curve.point(spec, s) for curve, s in zip(curves, sigmas)])
    witness = points.mean(axis=0).tolist()
    if value <= tolerances.meet:
        return Meeting(True, value, sigmas, witness)
    if not converged:
        return Meeting(None, value, sigmas, witness, [f"meeting search did not converge (residual {value:.3e})"])
    return Meeting(False, value, sigmas, witness)


def _local_segment(spec: MetricSpec, curve: Bicharacteristic, s: float, half_width: float) -> np.ndarray:
    X, Xi = curve.state(spec, s)
    speed = max(abs(float(hamilton_field(spec, X, Xi)[0][0])), 1e-12)
    half = half_width / speed
    parameters = np.linspace(max(s - half, curve.s[0]), min(s + half, curve.s[-1]), 41)
    return np.array([curve.point(spec, p) for p in parameters]) * np.sqrt(spec.aux_weights)


def distinct_rays(spec: MetricSpec, curves: Sequence[Bicharacteristic], sigmas: Sequence[float], tolerances: Tolerances = DEFAULT_TOLERANCES,
                  half_width: float = 0.25) -> Tuple[bool, float]:
    """
    (R2a): pairwise Hausdorff distance (G-metric) between the rays near the meeting point, over
    chart-time windows of +-half_width; distinct iff every pair is farther apart than tau_distinct.
    """
    segments = [_local_segment(spec, curve, s, half_width) for curve, s in zip(curves, sigmas)]
    smallest = float("inf")
    for i in range(len(segments)):
        for j in range(i + 1, len(segments)):
            distance = max(directed_hausdorff(segments[i], segments[j])[0], directed_hausdorff(segments[j], segments[i])[0])
            smallest = min(smallest, distance)
    return smallest > tolerances.distinct, smallest


def _reversed(spec: MetricSpec, xi: Covector, tolerances: Tolerances) -> Covector:
    return covector(spec, xi.base, -xi.xi, tolerances)


def cut_margins(spec: MetricSpec, quad: Sequence[Covector], curves: Sequence[Bicharacteristic], sigmas: Sequence[float],
                tolerances: Tolerances = DEFAULT_TOLERANCES) -> Tuple[Optional[bool], List[float], List[str]]:
    """
    (R2b): sigma_0 in (0, rho(-xi_0)) and sigma_j in (0, rho(xi_j)), each with a 5% margin inside the
    interval. Returns the verdict, the margins (1 - CUT_MARGIN) rho_j - sigma_j and flags; the
    verdict is None when a cut computation is flagged.
    """
    margins, flags = [], []
    holds = True
    for j, (xi, curve, s) in enumerate(zip(quad, curves, sigmas)):
        eta = _reversed(spec, xi, tolerances) if j == 0 else xi
        try:
            rho = cut_function(spec, eta, tolerances, bisection_steps=24, curve=curve)
        except DomainError as e:
            flags.append(f"rho(xi_{j}): {e}")
            margins.append(float("nan"))
            continue
        if rho.flags:
            flags.extend(f"rho(xi_{j}): {flag}" for flag in rho.flags)
        margin = (1 - CUT_MARGIN) * rho.rho - s if rho.cut_found else rho.rho - s
        margins.append(float(margin))
        holds = holds and s > 0 and margin > 0
    return (holds if not holds or not flags else None), margins, flags


def meeting_covectors(spec: MetricSpec, curves: Sequence[Bicharacteristic], sigmas: Sequence[float],
                      tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[Covector]:
    """eta_j: the covectors of the four rays at the meeting point."""
    return [curve.covector_at(spec, s, tolerances) for curve, s in zip(curves, sigmas)]


def oracle_r2(spec: MetricSpec, quad: Sequence[Covector], tolerances: Tolerances = DEFAULT_TOLERANCES, meeting: Optional[Meeting] = None,
              curves: Optional[Sequence[Bicharacteristic]] = None, seed: int = 0) -> QuadrupleVerdict:
    """
    (R2): the four rays meet at y before their cut points, are pairwise distinct, and eta_0 lies
    in span(eta_1, eta_2, eta_3) at y. r2 is only evaluated when r1 holds, so r2 implies r1.
    """
    _check_quadruple(quad)
    curves = list(curves) if curves is not None else ray_flows(spec, quad, tolerances)
    meeting = meeting or oracle_r1(spec, quad, tolerances, seed=seed, curves=curves)
    verdict = QuadrupleVerdict(0, [xi.to_dict() for xi in quad], r1=meeting.holds, r1_residual=meeting.residual,
                               witness=meeting.witness, sigmas=meeting.sigmas, flags=list(meeting.flags))
    if meeting.holds is not True:
        verdict.r2 = False if meeting.holds is False else None
        return verdict

    verdict.distinct, separation = distinct_rays(spec, curves, meeting.sigmas, tolerances)
    if not verdict.distinct:
        verdict.flags.append(f"rays are not distinct (Hausdorff {separation:.3e})")
    verdict.before_cut, verdict.cut_margins, cut_flags = cut_margins(spec, quad, curves, meeting.sigmas, tolerances)
    verdict.flags.extend(cut_flags)

    etas = meeting_covectors(spec, curves, meeting.sigmas, tolerances)
    verdict.span = span_check(etas, tolerances)
    verdict.flags.extend(verdict.span.flags)

    parts = [verdict.distinct, verdict.before_cut, verdict.span.holds]
    if any(part is False for part in parts):
        verdict.r2 = False
    elif any(part is None for part in parts):
        verdict.r2 = None
    else:
        verdict.r2 = True
    log.scattering_verbose(f"r1={meeting.holds} (residual {meeting.residual:.2e}), distinct={verdict.distinct}, "
                           f"before cut={verdict.before_cut}, span={verdict.span.holds} -> r2={verdict.r2}")
    return verdict


def non_return_check(spec: MetricSpec, curve: ObserverCurve, quad: Sequence[Covector], tolerances: Tolerances = DEFAULT_TOLERANCES,
                     curves: Optional[Sequence[Bicharacteristic]] = None) -> Tuple[bool, Dict[str, float]]:
    """
    xhat(x_0) not in pi o FLO^+(xi_0) and x_0 not in pi o FLO^+(xi_j), j = 1, 2, 3, each decided by
    the distance of the point to the sampled ray against tau_meet.

    Returns:
        The verdict and the distances, keyed "xhat-xi0", "x0-xi1", ...
    """
    _check_quadruple(quad)
    x0 = quad[0].base
    xhat = earliest_observation(spec, curve, x0, tolerances).xhat
    forward = chart_flow(spec, quad[0], FORWARD, tolerances)
    rays = list(curves[1:]) if curves is not None else [chart_flow(spec, xi, FORWARD, tolerances) for xi in quad[1:]]

    margins = {"xhat-xi0": distance_to_trajectory(spec, forward, xhat.coords, s_min=1e-9)[0]}
    for j, ray in enumerate(rays, start=1):
        margins[f"x0-xi{j}"] = distance_to_trajectory(spec, ray, x0.coords)[0]
    holds = all(margin > tolerances.meet for margin in margins.values())
    if not holds:
        log.scattering_verbose(f"non-return fails for x0={x0}: {margins}")
    return holds, margins
