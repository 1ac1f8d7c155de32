from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from geometry.causal import time_separation
from geometry.covector import Covector, angles_from_direction, covector, direction_from_angles, null_covector, sphere_directions
from geometry.flow import FORWARD, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from util.errors import InfeasibleError, IntegrationError, InternalError, PreconditionError
from util.log import log


class ObserverCurve(ABC):
    """
    A timelike curve mu: [-1, 1] -> M carrying the measurements.
    """

    SAMPLES = 65

    @abstractmethod
    def mu(self, r) -> np.ndarray:
        """Points of the curve, shape (..., n) for parameters of shape (...)."""
        pass

    @abstractmethod
    def velocity(self, r) -> np.ndarray:
        pass

    def samples(self, count: int = 401) -> Tuple[np.ndarray, np.ndarray]:
        r = np.linspace(-1.0, 1.0, count)
        return r, self.mu(r)

    def validate(self, spec: MetricSpec):
        """
        Checks that the curve lies in the chart and is timelike and future pointing at every sample.

        Raises:
            DomainError: If a sample leaves the chart box.
            PreconditionError: If a sample velocity is not future timelike.
        """
        r = np.linspace(-1.0, 1.0, self.SAMPLES)
        X = self.mu(r)
        V = self.velocity(r)
        spec.require_inside(X, "observer curve sample")
        g = spec.covariant(X)
        norms = np.einsum("ki,kij,kj->k", V, g, V)
        if np.any(norms >= 0):
            k = int(np.argmax(norms))
            raise PreconditionError(f"observer curve is not timelike at r={r[k]:.3f} (g(mu', mu') = {norms[k]:.3e})")
        if np.any(V[:, 0] <= 0):
            raise PreconditionError("observer curve is not future pointing")

    def to_dict(self) -> dict:
        return {"type": type(self).__name__}


class AffineCurve(ObserverCurve):
    """mu(r) = origin + r * velocity in the chart, e.g. the time axis of a static observer."""

    def __init__(self, origin: Sequence[float], velocity: Sequence[float]):
        self.origin = np.asarray(origin, dtype=float)
        self._velocity = np.asarray(velocity, dtype=float)

    def mu(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.origin + r[..., None] * self._velocity

    def velocity(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(self._velocity, r.shape + self._velocity.shape).copy()

    def to_dict(self) -> dict:
        return {"type": "affine", "origin": self.origin.tolist(), "velocity": self._velocity.tolist()}


class SplineCurve(ObserverCurve):
    """Cubic spline through control points given at equally spaced parameters in [-1, 1]."""

    def __init__(self, points: Sequence[Sequence[float]]):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 2:
            raise PreconditionError("a spline observer needs at least two control points")
        self._spline = CubicSpline(np.linspace(-1.0, 1.0, self.points.shape[0]), self.points, axis=0)
        self._derivative = self._spline.derivative()

    def mu(self, r) -> np.ndarray:
        return self._spline(np.asarray(r, dtype=float))

    def velocity(self, r) -> np.ndarray:
        return self._derivative(np.asarray(r, dtype=float))

    def to_dict(self) -> dict:
        return {"type": "spline", "points": self.points.tolist()}


def observer_from_config(config: dict) -> ObserverCurve:
    kind = config.get("type", "affine")
    if kind == "affine":
        return AffineCurve(config["origin"], config["velocity"])
    if kind == "spline":
        return SplineCurve(config["points"])
    raise PreconditionError(f"unknown observer curve type '{kind}'")


@dataclass
class Observation:
    """
    The earliest observation point xhat = mu(r) of x and the normalized future lightlike covector
    xi_mu at x whose geodesic reaches it at flow parameter s.
    """
    xhat: Point
    xi_mu: Covector
    r: float
    s: float
    miss: float
    flagged: bool = False
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"xhat": self.xhat.to_list(), "xi_mu": self.xi_mu.to_dict(), "r": self.r, "s": self.s, "miss": self.miss,
                "flagged": self.flagged, "flags": self.flags}


def _flow_length(spec: MetricSpec, curve: ObserverCurve, x: Point) -> float:
    # with xi_t = -1 the base point moves at dt/ds = 2 / beta
    _, X = curve.samples(33)
    beta = np.max(spec.beta(np.concatenate([X, x.coords[None, :]])))
    return 0.75 * max(beta, 1.0) * (curve.mu(1.0)[0] - x.t) + 1e-3


def _hit_residual(spec: MetricSpec, curve: ObserverCurve, x: Point, tolerances: Tolerances):
    d = spec.d

    def residual(params):
        angles, s, r = params[:d - 1], params[d - 1], params[d]
        if s <= 0:
            return np.full(spec.n, 1e3)
        xi = null_covector(spec, x, direction_from_angles(angles), True, tolerances)
        try:
            geodesic = flow(spec, xi, s, FORWARD, tolerances, samples_per_unit=8)
        except (IntegrationError, PreconditionError):
            return np.full(spec.n, 1e3)
        return spec.difference(curve.mu(r), geodesic.end) + (s - geodesic.s_max)

    return residual


def fan_minima(fan: np.ndarray, misses: np.ndarray) -> np.ndarray:
    """Indices of the fan directions whose miss is not above that of their nearest neighbours, best first."""
    neighbours = 2 if fan.shape[1] == 2 else 6
    _, index = cKDTree(fan).query(fan, k=neighbours + 1)
    minima = np.flatnonzero(np.all(misses[:, None] <= misses[index[:, 1:]], axis=1))
    return minima[np.argsort(misses[minima], kind="stable")]


def observation_candidates(spec: MetricSpec, curve: ObserverCurve, x: Point, tolerances: Tolerances = DEFAULT_TOLERANCES,
                           directions: Optional[int] = None) -> List[Observation]:
    """
    All intersections of future null geodesics from x with mu found by a direction fan followed by
    least-squares refinement of gamma_omega(s) - mu(r) over (direction angles, s, r), started from
    every local minimum of the miss distance over the fan.
    """
    if directions is None:
        directions = 72 if spec.d == 2 else 200
    fan = sphere_directions(spec.d, directions)
    s_max = _flow_length(spec, curve, x)
    r_samples, mu_samples = curve.samples(401)

    scored = []
    for direction in fan:
        xi = null_covector(spec, x, direction, True, tolerances)
        geodesic = flow(spec, xi, s_max, FORWARD, tolerances, samples_per_unit=32)
        distances = spec.distance_G(geodesic.X[:, None, :], mu_samples[None, :, :])
        k, j = np.unravel_index(np.argmin(distances), distances.shape)
        scored.append((float(distances[k, j]), direction, float(geodesic.s[k]), float(r_samples[j])))
    starts = fan_minima(fan, np.array([c[0] for c in scored]))

    residual = _hit_residual(spec, curve, x, tolerances)
    d = spec.d
    lower = np.concatenate([np.full(d - 1, -np.inf), [0.0, -1.0]])
    upper = np.concatenate([np.full(d - 1, np.inf), [np.inf, 1.0]])

    found: List[Observation] = []
    for _, direction, s, r in (scored[i] for i in starts):
        x0 = np.concatenate([angles_from_direction(direction), [max(s, 1e-6), r]])
        x0 = np.clip(x0, lower + 1e-12, upper - 1e-12)
        result = least_squares(residual, x0, bounds=(lower, upper), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=300)
        miss = float(np.linalg.norm(result.fun))
        if miss > max(tolerances.meet, 1e-6):
            continue
        xi = null_covector(spec, x, direction_from_angles(result.x[:d - 1]), True, tolerances)
        r_hit = float(result.x[d])
        if any(abs(o.r - r_hit) <= 1e-6 for o in found):
            continue
        found.append(Observation(Point(curve.mu(r_hit)), xi, r_hit, float(result.x[d - 1]), miss))
    found.sort(key=lambda o: o.r)
    return found


def earliest_observation(spec: MetricSpec, curve: ObserverCurve, x: Point, tolerances: Tolerances = DEFAULT_TOLERANCES,
                         directions: Optional[int] = None) -> Observation:
    """
    xhat(x): the first point of mu met by a future null geodesic from x, with the direction that meets it.

    Raises:
        PreconditionError: If x lies on mu, after mu(1) or in the causal past of mu(-1).
        InfeasibleError: If no future null geodesic from x reaches mu inside the chart.
    """
    spec.require_inside(x)
    _, mu_samples = curve.samples(401)
    if np.min(spec.distance_G(mu_samples, x.coords)) <= tolerances.meet:
        raise PreconditionError(f"{x} lies on the observer curve")
    if x.t >= curve.mu(1.0)[0]:
        raise PreconditionError(f"{x} is not in the causal past of mu(1)")

    candidates = observation_candidates(spec, curve, x, tolerances, directions)
    if not candidates:
        raise InfeasibleError(f"no future null geodesic from {x} reaches the observer curve", point=x.to_list())
    best = candidates[0]
    if best.r <= -1.0 + 1e-9:
        raise PreconditionError(f"{x} lies in the causal past of mu(-1)")

    tau = time_separation(spec, x, best.xhat, stop_above=tolerances.cut).value
    if tau > tolerances.cut:
        best.flagged = True
        best.flags.append(f"intersection beyond the cut point (tau = {tau:.3e})")
        log.geometry_verbose(f"earliest observation of {x} lies beyond the cut value")
    return best


def decompose_nu(spec: MetricSpec, xi: Covector, xi_mu: Covector, tolerance: float = 1e-12) -> Tuple[float, Covector]:
    """
    Splits xi_mu = c * xi + xi' with xi' annihilating dt (zero time component in the product chart).

    Returns:
        (c, xi'), with xi' the zero covector when c * xi = xi_mu.

    Raises:
        PreconditionError: If the covectors live over different points.
        InternalError: If xi has a vanishing time component (not lightlike).
    """
    if np.max(np.abs(xi.x - xi_mu.x)) > 1e-12:
        raise PreconditionError(f"covectors over different points {xi.base} and {xi_mu.base}")
    if xi.xi[0] == 0.0:
        raise InternalError(f"cannot split along {xi}: vanishing dt component", covector=xi.to_dict())
    c = float(xi_mu.xi[0] / xi.xi[0])
    rest = xi_mu.xi - c * xi.xi
    rest[0] = 0.0
    if np.linalg.norm(rest) <= tolerance * max(1.0, np.linalg.norm(xi_mu.xi)):
        rest = np.zeros_like(rest)
    return c, covector(spec, xi.base, rest)


def nu(spec: MetricSpec, curve: ObserverCurve, xi: Covector, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Covector:
    """The map nu(xi) = xi', using xi_mu(x) of the base point of xi."""
    observation = earliest_observation(spec, curve, xi.base, tolerances)
    return decompose_nu(spec, xi, observation.xi_mu)[1]


def incidence_angle(spec: MetricSpec, curve: ObserverCurve, r: float, xi: Covector) -> float:
    """
    Angle (degrees, auxiliary metric G) between the velocity of mu at r and the wavefront with
    conormal xi, i.e. the hypersurface {v : xi(v) = 0}.
    """
    V = np.asarray(curve.velocity(r), dtype=float)
    w = np.sqrt(spec.aux_weights)
    # conormal and vector in G-orthonormal coordinates
    pairing = abs(float(xi.xi @ V))
    size = np.linalg.norm(xi.xi / w) * np.linalg.norm(V * w)
    if size == 0.0:
        return 0.0
    return float(np.degrees(np.arcsin(min(1.0, pairing / size))))
