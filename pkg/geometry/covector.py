from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from util.errors import PreconditionError

TIMELIKE = "timelike"
LIGHTLIKE = "lightlike"
SPACELIKE = "spacelike"

FUTURE = "future"
PAST = "past"
NONE = "none"


@dataclass(frozen=True, eq=False)
class Covector:
    """
    A cotangent vector xi at `base`, components (xi_t, xi_1, ..., xi_d) in the chart.

    `causal_type` and `time_orientation` are derived from p = g^{ij} xi_i xi_j when the covector
    is built with `covector(...)`. Future pointing means the raised vector has positive dt
    component, i.e. xi_t < 0 (the -dt + eta' convention).
    """
    base: Point
    xi: np.ndarray
    causal_type: str
    time_orientation: str
    residual: float = 0.0

    @property
    def x(self) -> np.ndarray:
        return self.base.coords

    @property
    def lightlike(self) -> bool:
        return self.causal_type == LIGHTLIKE

    @property
    def future(self) -> bool:
        return self.time_orientation == FUTURE

    def to_dict(self) -> dict:
        return {"base": self.base.to_list(), "xi": [float(v) for v in self.xi], "causal_type": self.causal_type,
                "time_orientation": self.time_orientation}

    def __repr__(self):
        return f"Covector({self.base!r}, xi=[" + ", ".join(f"{v:.6g}" for v in self.xi) + f"], {self.causal_type}, {self.time_orientation})"


def hamiltonian(spec: MetricSpec, X: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """p(x, xi) = g^{ij} xi_i xi_j, vectorized over leading axes."""
    X = np.asarray(X, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    b = spec.beta(X)
    kinv = np.linalg.inv(spec.kappa(X))
    spatial = np.einsum("...i,...ij,...j->...", Xi[..., 1:], kinv, Xi[..., 1:])
    return (-Xi[..., 0] ** 2 + spatial) / b


def hamilton_field(spec: MetricSpec, X: np.ndarray, Xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    The Hamilton vector field of p: (dx/ds, dxi/ds) = (2 g^{ij} xi_j, -d_x p).
    """
    X = np.asarray(X, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    b = spec.beta(X)
    kinv = np.linalg.inv(spec.kappa(X))
    xs = Xi[..., 1:]
    kinv_xs = np.einsum("...ij,...j->...i", kinv, xs)
    p = (-Xi[..., 0] ** 2 + np.einsum("...i,...i->...", xs, kinv_xs)) / b

    dX = np.empty_like(X)
    dX[..., 0] = -2.0 * Xi[..., 0] / b
    dX[..., 1:] = 2.0 * kinv_xs / b[..., None]

    # d_i (xi' kappa^-1 xi') = -(kappa^-1 xi')^T (d_i kappa) (kappa^-1 xi')
    dk = spec.dkappa(X)
    db = spec.dbeta(X)
    quad = np.einsum("...a,...iab,...b->...i", kinv_xs, dk, kinv_xs)
    dXi = -(-(db / b[..., None]) * p[..., None] - quad / b[..., None])
    return dX, dXi


def classify(spec: MetricSpec, base: Point, xi: np.ndarray, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Tuple[str, str, float]:
    """
    Causal type, time orientation and the relative cone residual |p| / |xi|_G^2 of a covector.
    """
    xi = np.asarray(xi, dtype=float)
    norm2 = float(np.sum(spec.aux_weights * xi * xi))
    if norm2 == 0.0:
        return SPACELIKE, NONE, 0.0
    p = float(hamiltonian(spec, base.coords, xi))
    residual = abs(p) / norm2
    if residual <= tolerances.null:
        causal_type = LIGHTLIKE
    elif p < 0:
        causal_type = TIMELIKE
    else:
        causal_type = SPACELIKE

    if causal_type == SPACELIKE:
        orientation = NONE
    else:
        orientation = FUTURE if xi[0] < 0 else PAST
    return causal_type, orientation, residual


def covector(spec: MetricSpec, base, xi, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Covector:
    """
    Builds a classified covector at `base` (a Point or coordinate array).
    """
    if not isinstance(base, Point):
        base = Point(base)
    spec.require_inside(base)
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.shape != (spec.n,):
        raise PreconditionError(f"covector has {xi.shape[0]} components, expected {spec.n}")
    causal_type, orientation, residual = classify(spec, base, xi, tolerances)
    return Covector(base, xi, causal_type, orientation, residual)


def hamiltonian_value(spec: MetricSpec, xi: Covector) -> float:
    spec.require_inside(xi.base)
    return float(hamiltonian(spec, xi.x, xi.xi))


def project_to_cone(spec: MetricSpec, X: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """
    Rescales the dt component so that p(x, xi) = 0 exactly, keeping its sign.
    """
    Xi = np.array(Xi, dtype=float)
    kinv = np.linalg.inv(spec.kappa(X))
    spatial = np.einsum("...i,...ij,...j->...", Xi[..., 1:], kinv, Xi[..., 1:])
    sign = np.where(Xi[..., 0] < 0, -1.0, 1.0)
    Xi[..., 0] = sign * np.sqrt(spatial)
    return Xi


def null_covector(spec: MetricSpec, base, direction, future: bool = True, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Covector:
    """
    The normalized lightlike covector at `base` whose spatial part points along `direction`.

    The spatial part is scaled to unit kappa-dual length and the dt component is -1 (future) or
    +1 (past), the projective representative used for every comparison modulo R+.
    """
    if not isinstance(base, Point):
        base = Point(base)
    direction = np.asarray(direction, dtype=float).reshape(-1)
    if direction.shape != (spec.d,) or not np.any(direction):
        raise PreconditionError(f"invalid spatial direction {direction}")
    kinv = np.linalg.inv(spec.kappa(base.coords))
    length = np.sqrt(direction @ kinv @ direction)
    xi = np.concatenate([[-1.0 if future else 1.0], direction / length])
    return covector(spec, base, xi, tolerances)


def normalize(spec: MetricSpec, xi: Covector, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Covector:
    """
    Projective representative of a lightlike covector: |xi'|_kappa = 1 and xi_t = -1 (future) or +1 (past).
    """
    if not xi.lightlike:
        raise PreconditionError(f"only lightlike covectors are normalized, got {xi}")
    return covector(spec, xi.base, xi.xi / abs(xi.xi[0]), tolerances)


def spatial_direction(xi: Covector) -> np.ndarray:
    v = np.asarray(xi.xi[1:], dtype=float)
    return v / np.linalg.norm(v)


def sphere_directions(d: int, count: int) -> np.ndarray:
    """
    Quasi-uniform unit vectors in R^d: equally spaced angles for d = 2, a Fibonacci lattice for d = 3.
    """
    if d == 2:
        angles = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(np.maximum(0.0, 1 - z * z))
    phi = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def direction_from_angles(angles: np.ndarray) -> np.ndarray:
    """Unit vector from polar angles: one angle in R^2, (polar, azimuth) in R^3."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    if angles.shape[0] == 1:
        return np.array([np.cos(angles[0]), np.sin(angles[0])])
    theta, phi = angles[0], angles[1]
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def angles_from_direction(direction: np.ndarray) -> np.ndarray:
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    if direction.shape[0] == 2:
        return np.array([np.arctan2(direction[1], direction[0])])
    return np.array([np.arccos(np.clip(direction[2], -1, 1)), np.arctan2(direction[1], direction[0])])


def cone_seeds(spec: MetricSpec, xi: Covector, h: float, count: int, tolerances: Tolerances = DEFAULT_TOLERANCES) -> list:
    """
    Samples B_h(xi) on the light cone at the base of xi: normalized lightlike covectors whose
    spatial directions lie within angle h of the direction of xi (always including xi itself).
    """
    center = spatial_direction(xi)
    seeds = [normalize(spec, xi, tolerances)]
    if spec.d == 2:
        base_angle = np.arctan2(center[1], center[0])
        for offset in np.linspace(-h, h, count)[1:-1] if count > 2 else []:
            if offset == 0:
                continue
            seeds.append(null_covector(spec, xi.base, [np.cos(base_angle + offset), np.sin(base_angle + offset)], xi.future, tolerances))
    else:
        helper = np.array([1.0, 0.0, 0.0]) if abs(center[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(center, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(center, e1)
        for k in range(max(count - 1, 0)):
            phi = 2 * np.pi * k / max(count - 1, 1)
            direction = np.cos(h) * center + np.sin(h) * (np.cos(phi) * e1 + np.sin(phi) * e2)
            seeds.append(null_covector(spec, xi.base, direction, xi.future, tolerances))
    return seeds
