from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import least_squares

from geometry.covector import Covector, angles_from_direction, direction_from_angles, null_covector, spatial_direction
from geometry.flow import FORWARD, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from util.errors import IntegrationError, PreconditionError
from util.log import log


@dataclass(eq=False)
class InteractionCurve:
    """
    Samples of K = K_1 n K_2 n K_3, the intersection of the future light cones of x_1, x_2, x_3,
    ordered along the curve, with unit (G) tangents and the cone conormals eta_1, eta_2, eta_3 at
    every sample (normalized to eta_t = -1).
    """
    points: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    spacelike: np.ndarray
    ranks: np.ndarray
    annihilation: np.ndarray
    truncated: bool = False
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"points": self.points.tolist(), "tangents": self.tangents.tolist(), "spacelike": self.spacelike.tolist(),
                "ranks": self.ranks.tolist(), "annihilation": self.annihilation.tolist(), "truncated": self.truncated,
                "flags": self.flags}


class ConeArrival:
    """
    The future light cone of x as a graph t = T(z') near a reference ray: T and its gradient
    (from the conormal of the cone) by shooting null geodesics at spatial targets z'.
    """

    def __init__(self, spec: MetricSpec, xi: Covector, tolerances: Tolerances = DEFAULT_TOLERANCES):
        self.spec = spec
        self.base = xi.base
        self.tolerances = tolerances
        self.angles = angles_from_direction(spatial_direction(xi))
        self.s = 1.0

    def _ray(self, angles: np.ndarray, s: float):
        xi = null_covector(self.spec, self.base, direction_from_angles(angles), True, self.tolerances)
        return flow(self.spec, xi, s, FORWARD, self.tolerances, samples_per_unit=16)

    def __call__(self, z: np.ndarray) -> Tuple[float, np.ndarray, Covector]:
        d = self.spec.d

        def residual(params):
            if params[-1] <= 0:
                return np.full(d, 1e3)
            try:
                ray = self._ray(params[:-1], params[-1])
            except IntegrationError:
                return np.full(d, 1e3)
            return (ray.end[1:] - z) + (params[-1] - ray.s_max)

        result = least_squares(residual, np.concatenate([self.angles, [self.s]]), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
        if np.linalg.norm(result.fun) > 1e-9:
            raise IntegrationError(f"no ray of the cone of {self.base} reaches {np.round(z, 6).tolist()}", miss=float(np.linalg.norm(result.fun)))
        self.angles, self.s = result.x[:-1], float(result.x[-1])
        ray = self._ray(self.angles, self.s)
        eta = ray.covector_at(self.spec, ray.s_max, self.tolerances)
        eta_t = float(eta.xi[0])
        gradient = -eta.xi[1:] / eta_t
        return float(ray.end[0]), gradient, eta

    def seed(self, s: float):
        self.s = s


def _normalized(eta: Covector) -> np.ndarray:
    return eta.xi / -eta.xi[0]


def interaction_curve(spec: MetricSpec, xi1: Covector, xi2: Covector, xi3: Covector, meet: Sequence[float],
                      tolerances: Tolerances = DEFAULT_TOLERANCES, step: float = 0.05, count: int = 10,
                      seeds: Optional[Sequence[float]] = None) -> InteractionCurve:
    """
    Newton continuation of K through the witness y: on spatial points z', the conditions
    T_1(z') = T_2(z') = T_3(z') define a curve whose chart tangent spans the null space of
    (grad T_1 - grad T_2, grad T_1 - grad T_3). Each side is followed for `count` predictor steps
    of length `step`; a corrector that fails to converge truncates that side with a flag.

    Args:
        seeds: Flow parameters s_j with gamma_xi_j(s_j) = y, as warm starts.

    Raises:
        PreconditionError: If the chart is not 1+3 dimensional or y is not on the three cones.
    """
    if spec.d != 3:
        raise PreconditionError(f"three light cones meet in a curve only in 1+3 dimensions, the chart has 1+{spec.d}")
    y = np.asarray(meet, dtype=float)
    cones = [ConeArrival(spec, xi, tolerances) for xi in (xi1, xi2, xi3)]
    for cone, s in zip(cones, seeds or [0.5 * (y[0] - xi.base.t) * float(spec.beta(xi.x)) for xi in (xi1, xi2, xi3)]):
        cone.seed(max(s, 1e-3))

    def evaluate(z):
        values = [cone(z) for cone in cones]
        times = np.array([v[0] for v in values])
        gradients = np.array([v[1] for v in values])
        return times, gradients, [v[2] for v in values]

    times, gradients, etas = evaluate(y[1:])
    if np.max(np.abs(times - y[0])) > max(1e3 * tolerances.meet, 1e-6):
        raise PreconditionError(f"{Point(y)} is not on the three light cones (arrival times {times.tolist()})")

    flags: List[str] = []
    truncated = False

    def sample(z, times, gradients, etas, previous: Optional[np.ndarray]):
        jacobian = np.stack([gradients[0] - gradients[1], gradients[0] - gradients[2]])
        kernel = null_space(jacobian, rcond=1e-10)
        if kernel.shape[1] != 1:
            return None
        direction = kernel[:, 0]
        if previous is not None and direction @ previous[1:] < 0:
            direction = -direction
        tangent = np.concatenate([[gradients[0] @ direction], direction])
        tangent /= np.sqrt(np.sum(spec.aux_weights * tangent ** 2))
        normals = np.array([_normalized(eta) for eta in etas])
        return np.concatenate([[times.mean()], z]), tangent, normals

    first = sample(y[1:], times, gradients, etas, None)
    if first is None:
        flags.append("degenerate cones: the intersection is not a curve at y")
        log.scattering(f"interaction curve through {Point(y)} is degenerate")
        normals = np.array([_normalized(eta) for eta in etas])
        return InteractionCurve(y[None, :], np.zeros((1, spec.n)), normals[None], np.array([False]),
                                np.array([np.linalg.matrix_rank(normals)]), np.array([np.nan]), True, flags)

    branches = {1: [first], -1: []}
    warm = [(cone.angles.copy(), cone.s) for cone in cones]
    for sign in (1, -1):
        for cone, (angles, s) in zip(cones, warm):
            cone.angles, cone.s = angles.copy(), s
        point, tangent, _ = first
        previous = sign * tangent
        for _ in range(count):
            z = point[1:] + step * previous[1:] / max(np.linalg.norm(previous[1:]), 1e-300)
            converged = False
            for _ in range(12):
                try:
                    times, gradients, etas = evaluate(z)
                except IntegrationError as e:
                    flags.append(f"continuation lost the cones: {e}")
                    break
                mismatch = np.array([times[0] - times[1], times[0] - times[2]])
                if np.max(np.abs(mismatch)) <= 1e-11:
                    converged = True
                    break
                jacobian = np.stack([gradients[0] - gradients[1], gradients[0] - gradients[2]])
                z = z - np.linalg.pinv(jacobian) @ mismatch
            if not converged:
                truncated = True
                flags.append(f"continuation diverged after {len(branches[1]) + len(branches[-1])} samples")
                break
            result = sample(z, times, gradients, etas, previous)
            if result is None:
                truncated = True
                flags.append("continuation reached a degenerate intersection")
                break
            point, tangent, normals = result
            branches[sign].append((point, tangent if sign == 1 else -tangent, normals))
            previous = tangent

    ordered = list(reversed(branches[-1])) + branches[1]
    points = np.array([p for p, _, _ in ordered])
    tangents = np.array([t for _, t, _ in ordered])
    normals = np.array([n for _, _, n in ordered])
    g = spec.covariant(points)
    spacelike = np.einsum("ki,kij,kj->k", tangents, g, tangents) > 0
    ranks = np.array([np.linalg.matrix_rank(n, tol=1e-8 * np.max(np.abs(n))) for n in normals])
    annihilation = np.array([np.max(np.abs(n @ t)) / np.max(np.abs(n)) for n, t in zip(normals, tangents)])
    if not np.all(spacelike):
        flags.append("non-spacelike tangent on the interaction curve")
    log.scattering_verbose(f"interaction curve through {Point(y)}: {len(points)} samples, ranks {sorted(set(ranks.tolist()))}")
    return InteractionCurve(points, tangents, normals, spacelike, ranks, annihilation, truncated, flags)
