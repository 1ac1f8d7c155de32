from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import least_squares, minimize

from geometry.covector import Covector, angles_from_direction, direction_from_angles, null_covector, sphere_directions
from geometry.flow import FORWARD, Bicharacteristic, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from util.errors import IntegrationError
from util.log import log

CHRONOLOGICAL = "chronological"
CAUSAL_ONLY = "causal-only"
NOT_CAUSAL = "none"

_NODES, _WEIGHTS = leggauss(4)
_NODES = 0.5 * (_NODES + 1.0)
_WEIGHTS = 0.5 * _WEIGHTS


@dataclass
class Separation:
    """
    Estimate of the time separation tau(p, q).

    Attributes:
        value (float): Best proper time found over the broken causal path family (0 if q is not in J+(p)).
        converged (bool): False if the optimizer reported non-convergence for the best start.
        error_bound (float): Spread between the best and the runner-up local optimum.
        path (np.ndarray): Vertices of the best broken path (legs + 1, n), if any.
    """
    value: float
    converged: bool = True
    error_bound: float = 0.0
    path: Optional[np.ndarray] = None

    def __float__(self):
        return float(self.value)


def _images(spec: MetricSpec, q: np.ndarray) -> List[np.ndarray]:
    if not spec.periodic:
        return [q]
    shifts = []
    axes = sorted(spec.periodic)
    for combination in itertools.product((0, -1, 1), repeat=len(axes)):
        shift = np.zeros(spec.n)
        for axis, k in zip(axes, combination):
            shift[axis] = k * spec.periodic[axis]
        shifts.append(q + shift)
    return shifts


def _path_proper_time(spec: MetricSpec, vertices: np.ndarray):
    """
    Per-leg proper time and spacelike excess of a chart-linear broken path (Gauss-Legendre quadrature).
    """
    A = vertices[:-1]
    V = vertices[1:] - vertices[:-1]
    nodes = A[:, None, :] + _NODES[None, :, None] * V[:, None, :]
    b = spec.beta(nodes)
    k = spec.kappa(nodes)
    spatial = np.einsum("li,lnij,lj->ln", V[:, 1:], k, V[:, 1:])
    norm = b * (-V[:, None, 0] ** 2 + spatial)
    proper = np.sqrt(np.maximum(-norm, 0.0)) @ _WEIGHTS
    excess = np.maximum(norm, 0.0) @ _WEIGHTS
    return proper, excess


def _vertices(p: np.ndarray, q: np.ndarray, params: np.ndarray, legs: int, d: int) -> np.ndarray:
    logits = params[:legs]
    fractions = np.exp(logits - np.max(logits))
    fractions = fractions / fractions.sum()
    times = p[0] + (q[0] - p[0]) * np.concatenate([[0.0], np.cumsum(fractions)])
    inner = params[legs:].reshape(legs - 1, d)
    vertices = np.empty((legs + 1, d + 1))
    vertices[:, 0] = times
    vertices[0, 1:] = p[1:]
    vertices[-1, 1:] = q[1:]
    vertices[1:-1, 1:] = inner
    vertices[-1, 0] = q[0]
    return vertices


def time_separation(spec: MetricSpec, p: Point, q: Point, legs: int = 8, starts: int = 4, seed: int = 0,
                    stop_above: Optional[float] = None, penalty: float = 10.0) -> Separation:
    """
    tau(p, q): supremum of the proper time of future causal paths from p to q, 0 if none exists.

    The supremum is taken over broken paths with `legs` chart-linear legs (interior vertices and
    the time split between legs are optimized, multi-start, for every periodic image of q).
    Broken paths are causal competitors, so the estimate is a lower bound converging to tau as
    the legs refine.

    Args:
        stop_above (float): Return as soon as some path exceeds this value (predicate mode).
    """
    spec.require_inside(p)
    spec.require_inside(q)
    P, Q0 = p.coords, q.coords
    d = spec.d
    rng = np.random.default_rng(seed)

    best = Separation(0.0, True, 0.0, None)
    values = []
    for Q in _images(spec, Q0):
        dt = Q[0] - P[0]
        if dt <= 0:
            continue

        chord = P[None, 1:] + np.linspace(0, 1, legs + 1)[1:-1, None] * (Q[1:] - P[1:])[None, :]
        initial = [np.concatenate([np.zeros(legs), chord.reshape(-1)])]
        for _ in range(starts - 1):
            jitter = rng.normal(scale=0.25 * dt, size=chord.shape)
            initial.append(np.concatenate([rng.normal(scale=0.3, size=legs), (chord + jitter).reshape(-1)]))

        def objective(params):
            vertices = _vertices(P, Q, params, legs, d)
            if not np.all(spec.inside(vertices)):
                return 1e3 * dt
            proper, excess = _path_proper_time(spec, vertices)
            return -float(np.sum(proper)) + penalty * float(np.sum(excess))

        for x0 in initial:
            value0 = -objective(x0)
            if stop_above is not None and value0 > stop_above:
                return Separation(value0, True, 0.0, _vertices(P, Q, x0, legs, d))
            result = minimize(objective, x0, method="L-BFGS-B", options={"maxiter": 400})
            vertices = _vertices(P, Q, result.x, legs, d)
            proper, excess = _path_proper_time(spec, vertices)
            value = float(np.sum(proper)) if np.sum(excess) <= 1e-12 * dt * dt else 0.0
            values.append(value)
            if value > best.value:
                best = Separation(value, bool(result.success), 0.0, vertices)
            if stop_above is not None and value > stop_above:
                return best

    if len(values) > 1:
        ordered = sorted(values, reverse=True)
        best.error_bound = float(ordered[0] - ordered[1])
    if not best.converged:
        log.geometry_verbose(f"time separation {p} -> {q} did not converge, estimate {best.value:.6g} +- {best.error_bound:.2e}")
    return best


@dataclass
class CutValue:
    """
    Cut function value rho(eta) with the maximal flow parameter s(eta) of the chart.
    """
    rho: float
    s_limit: float
    cut_found: bool
    flags: List[str] = field(default_factory=list)

    def __float__(self):
        return float(self.rho)


def cut_function(spec: MetricSpec, eta: Covector, tolerances: Tolerances = DEFAULT_TOLERANCES, s_max: float = 50.0,
                 s_start: float = 0.125, bisection_steps: int = 40, curve: Optional[Bicharacteristic] = None) -> CutValue:
    """
    rho(eta) = sup { s in [0, s(eta)) : tau(x, gamma_eta(s)) = 0 }.

    Brackets by doubling s until tau exceeds `tolerances.cut` or the geodesic leaves the chart,
    then bisects. Past pointing covectors flow into the past and are handled with the opposite
    time orientation (tau(gamma_eta(s), x)). Without a cut point in the chart, s(eta) is returned.
    """
    if curve is None:
        curve = flow(spec, eta, s_max, FORWARD, tolerances)
    s_limit = curve.s_max
    flags = list(curve.flags)
    x = eta.base

    def chronological(s: float) -> bool:
        y = Point(spec.clamp(curve.point(spec, s)))
        if eta.future:
            return time_separation(spec, x, y, starts=3, stop_above=tolerances.cut).value > tolerances.cut
        return time_separation(spec, y, x, starts=3, stop_above=tolerances.cut).value > tolerances.cut

    low, high = 0.0, min(s_start, s_limit)
    while True:
        if chronological(high):
            break
        if high >= s_limit:
            log.geometry_very_verbose(f"no cut point along {eta} before s(eta)={s_limit:.6g}")
            return CutValue(s_limit, s_limit, False, flags)
        low, high = high, min(2 * high, s_limit)

    for _ in range(bisection_steps):
        middle = 0.5 * (low + high)
        if chronological(middle):
            high = middle
        else:
            low = middle
    return CutValue(0.5 * (low + high), s_limit, True, flags)


@dataclass
class NullConnection:
    """A null geodesic from `start` whose base curve passes within `distance` of a target."""
    covector: Optional[Covector]
    s: float
    distance: float


def _shoot_residual(spec, base: Point, future: bool, target: np.ndarray, tolerances: Tolerances):
    def residual(params):
        angles, s = params[:-1], params[-1]
        if s <= 0:
            return np.full(spec.n, 1e3)
        xi = null_covector(spec, base, direction_from_angles(angles), future, tolerances)
        try:
            curve = flow(spec, xi, s, FORWARD if future else -FORWARD, tolerances, samples_per_unit=8)
        except IntegrationError:
            return np.full(spec.n, 1e3)
        return spec.difference(target, curve.end) + (s - curve.s_max)
    return residual


def null_connection(spec: MetricSpec, p: Point, q: Point, tolerances: Tolerances = DEFAULT_TOLERANCES,
                    directions: int = 48, future: bool = True) -> NullConnection:
    """
    Searches a null geodesic from p through q (future directed if `future`): shooting over the
    sphere of null directions at p, refined by least squares on (angles, s).
    """
    spec.require_inside(p)
    spec.require_inside(q)
    target = q.coords
    fan = sphere_directions(spec.d, directions)
    s_guess = max(abs(q.t - p.t), 1e-6)

    candidates = []
    for direction in fan:
        xi = null_covector(spec, p, direction, future, tolerances)
        curve = flow(spec, xi, 4 * s_guess, FORWARD if future else -FORWARD, tolerances, samples_per_unit=32)
        distances = spec.distance_G(curve.X, target)
        k = int(np.argmin(distances))
        candidates.append((float(distances[k]), direction, float(curve.s[k])))
    candidates.sort(key=lambda c: c[0])

    best = NullConnection(None, float("nan"), float("inf"))
    residual = _shoot_residual(spec, p, future, target, tolerances)
    for distance, direction, s in candidates[:3]:
        x0 = np.concatenate([angles_from_direction(direction), [max(s, 1e-6)]])
        result = least_squares(residual, x0, xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=200)
        miss = float(np.linalg.norm(result.fun))
        if miss < best.distance and result.x[-1] > 0:
            xi = null_covector(spec, p, direction_from_angles(result.x[:-1]), future, tolerances)
            best = NullConnection(xi, float(result.x[-1]), miss)
        if best.distance <= tolerances.meet:
            break
    return best


def causal_relation(spec: MetricSpec, p: Point, q: Point, tolerances: Tolerances = DEFAULT_TOLERANCES) -> str:
    """
    Classifies q relative to p: "chronological" (p << q), "causal-only" (q on the boundary of
    J+(p), reached by a null geodesic) or "none".
    """
    spec.require_inside(p)
    spec.require_inside(q)
    if np.all(spec.distance_G(p.coords, q.coords) <= tolerances.meet):
        return CAUSAL_ONLY
    if q.t <= p.t:
        return NOT_CAUSAL
    if time_separation(spec, p, q, stop_above=tolerances.cut).value > tolerances.cut:
        return CHRONOLOGICAL
    connection = null_connection(spec, p, q, tolerances)
    return CAUSAL_ONLY if connection.distance <= max(tolerances.meet, 1e-6) else NOT_CAUSAL
