from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

import numpy as np
from scipy.integrate import DOP853
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, minimize_scalar

from geometry.covector import Covector, covector, hamilton_field, hamiltonian, project_to_cone
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from util.errors import IntegrationError, PreconditionError
from util.log import log
from util.resultcsv import write_columns

FORWARD = 1
BACKWARD = -1


@dataclass(eq=False)
class Bicharacteristic:
    """
    A sampled integral curve of the Hamilton field through a lightlike covector.

    `s` is the (non-negative, strictly increasing) flow parameter magnitude; the state at sample k
    is Phi_{direction * s[k]}(xi). `exited` is set when the curve left the chart box at `s_max`,
    which then realizes the maximal parameter s(eta).
    """
    start: Covector
    direction: int
    s: np.ndarray
    X: np.ndarray
    Xi: np.ndarray
    s_max: float
    exited: bool
    null_residual: float
    steps: int = 0
    flags: List[str] = field(default_factory=list)
    _spline: Optional[CubicHermiteSpline] = field(default=None, repr=False)

    def _state_spline(self, spec: MetricSpec) -> CubicHermiteSpline:
        if self._spline is None:
            dX, dXi = hamilton_field(spec, self.X, self.Xi)
            Y = np.concatenate([self.X, self.Xi], axis=-1)
            dY = self.direction * np.concatenate([dX, dXi], axis=-1)
            self._spline = CubicHermiteSpline(self.s, Y, dY, axis=0)
        return self._spline

    def state(self, spec: MetricSpec, s: float) -> Tuple[np.ndarray, np.ndarray]:
        """Base point and covector at flow parameter magnitude s (Hermite interpolation)."""
        if len(self.s) == 1:
            return self.X[0].copy(), self.Xi[0].copy()
        Y = self._state_spline(spec)(np.clip(s, self.s[0], self.s[-1]))
        return Y[..., :spec.n], Y[..., spec.n:]

    def point(self, spec: MetricSpec, s: float) -> np.ndarray:
        return self.state(spec, s)[0]

    def covector_at(self, spec: MetricSpec, s: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Covector:
        X, Xi = self.state(spec, s)
        return covector(spec, Point(X), project_to_cone(spec, X, Xi), tolerances)

    @property
    def end(self) -> np.ndarray:
        return self.X[-1]

    def write(self, spec: MetricSpec, filename: str):
        write_trajectory(spec, self, filename)


def _check_lightlike(xi: Covector, tolerances: Tolerances):
    if xi.lightlike:
        return
    if xi.residual <= tolerances.degenerate:
        raise PreconditionError(f"covector is within the degenerate band of the cone (|p|/|xi|^2 = {xi.residual:.3e}) and is rejected", covector=xi.to_dict())
    raise PreconditionError(f"flow requires a lightlike covector, got {xi}", covector=xi.to_dict())


def flow(spec: MetricSpec, xi: Covector, s_max: float, direction: int = FORWARD, tolerances: Tolerances = DEFAULT_TOLERANCES,
         samples_per_unit: int = 64, rtol: float = 1e-11, atol: float = 1e-12, max_steps: int = 200000) -> Bicharacteristic:
    """
    Integrates Hamilton's equations of p = g^{ij} xi_i xi_j from a lightlike covector.

    Adaptive DOP853 steps; after every accepted step the covector is projected back to the cone
    (dt component rescaled) and the stepper continues from the projected state. `null_residual`
    is the largest drift |p| / |xi|^2 of a single step before its projection. The curve terminates
    where it leaves the chart box: the exit is located on the dense output of the last step and
    clamped onto the box.

    Args:
        spec (MetricSpec): The metric.
        xi (Covector): A lightlike starting covector.
        s_max (float): Maximal flow parameter magnitude.
        direction (int): FORWARD (+1) or BACKWARD (-1).
        samples_per_unit (int): Dense samples per unit of s, on top of the step ends.

    Raises:
        PreconditionError: If xi is not lightlike or s_max <= 0.
        IntegrationError: If the stepper fails or needs more than `max_steps` steps.
    """
    _check_lightlike(xi, tolerances)
    if not s_max > 0:
        raise PreconditionError(f"s_max must be positive, got {s_max}")
    if direction not in (FORWARD, BACKWARD):
        raise PreconditionError(f"direction must be +1 or -1, got {direction}")

    n = spec.n

    def rhs(_, y):
        dX, dXi = hamilton_field(spec, y[:n], y[n:])
        return direction * np.concatenate([dX, dXi])

    def drift(y) -> float:
        return float(abs(hamiltonian(spec, y[:n], y[n:])) / np.sum(spec.aux_weights * y[n:] * y[n:]))

    def on_cone(y) -> np.ndarray:
        y = np.array(y, dtype=float)
        y[n:] = project_to_cone(spec, y[:n], y[n:])
        return y

    stepper = DOP853(rhs, 0.0, np.concatenate([xi.x, xi.xi]).astype(float), s_max, rtol=rtol, atol=atol)
    s_values = [0.0]
    states = [stepper.y.copy()]
    spacing = 1.0 / samples_per_unit
    next_sample = spacing
    residual = 0.0
    exited = False
    steps = 0
    while stepper.status == "running":
        message = stepper.step()
        steps += 1
        if stepper.status == "failed":
            raise IntegrationError(f"bicharacteristic integration failed at s={stepper.t:.6g}: {message}", start=xi.to_dict())
        if steps > max_steps:
            raise IntegrationError(f"bicharacteristic needs more than {max_steps} steps (s={stepper.t:.6g})", start=xi.to_dict())

        dense = stepper.dense_output()
        s_end = stepper.t
        if spec.boundary_distance(stepper.y[:n]) < 0:
            s_end = brentq(lambda s: float(spec.boundary_distance(dense(s)[:n])), stepper.t_old, stepper.t, xtol=1e-14)
            exited = True

        while next_sample < s_end:
            s_values.append(next_sample)
            states.append(on_cone(dense(next_sample)))
            next_sample += spacing

        end = dense(s_end) if exited else stepper.y
        residual = max(residual, drift(end))
        end = on_cone(end)
        if exited:
            end[:n] = spec.clamp(end[:n])
            s_values.append(s_end)
            states.append(end)
            break
        s_values.append(s_end)
        states.append(end)
        stepper.y = end
        stepper.f = stepper.fun(stepper.t, end)

    s_values = np.asarray(s_values)
    states = np.asarray(states)
    keep = np.concatenate([[True], np.diff(s_values) > 0])
    s_values, states = s_values[keep], states[keep]

    X, Xi = states[:, :n], states[:, n:]
    flags = []
    if residual > tolerances.flow:
        flags.append(f"null residual {residual:.3e} exceeds {tolerances.flow:.1e}")
        log.warn_verbose(f"bicharacteristic from {xi.base} drifts off the cone: {residual:.3e}")

    return Bicharacteristic(xi, direction, s_values, X, Xi, float(s_values[-1]), exited, residual, steps, flags)


def oriented_direction(xi: Covector, direction: int) -> int:
    """
    The integration sign that moves the base point to the future (direction +1) or past (-1)
    of xi's base: past pointing covectors are flowed with the opposite sign.
    """
    return direction if xi.future else -direction


def flowout(spec: MetricSpec, seeds: Iterable[Covector], direction: int, s_max: float,
            tolerances: Tolerances = DEFAULT_TOLERANCES, **kwargs) -> List[Bicharacteristic]:
    """
    FLO^+ (direction +1) or FLO^- (direction -1) of a set of lightlike covectors: one
    bicharacteristic per seed, oriented so that base points move to the causal future
    (respectively past) of the seed's base.
    """
    seeds = list(seeds)
    for seed in seeds:
        _check_lightlike(seed, tolerances)
    return [flow(spec, seed, s_max, oriented_direction(seed, direction), tolerances, **kwargs) for seed in seeds]


def distance_to_trajectory(spec: MetricSpec, curve: Bicharacteristic, target: np.ndarray, s_min: float = 0.0) -> Tuple[float, float]:
    """
    Minimal d_G distance between a point and the projection of a bicharacteristic, with the
    minimizing flow parameter. Samples before `s_min` are ignored.
    """
    target = np.asarray(target, dtype=float)
    mask = curve.s >= s_min
    if not np.any(mask):
        return float("inf"), float("nan")
    distances = spec.distance_G(curve.X[mask], target)
    k = int(np.argmin(distances))
    s_samples = curve.s[mask]
    if len(s_samples) < 2:
        return float(distances[k]), float(s_samples[k])

    low = s_samples[max(k - 1, 0)]
    high = s_samples[min(k + 1, len(s_samples) - 1)]
    if high <= low:
        return float(distances[k]), float(s_samples[k])
    result = minimize_scalar(lambda s: float(spec.distance_G(curve.point(spec, s), target)), bounds=(low, high), method="bounded",
                             options={"xatol": 1e-13})
    if result.fun < distances[k]:
        return float(result.fun), float(result.x)
    return float(distances[k]), float(s_samples[k])


def hausdorff_distance(spec: MetricSpec, a: Bicharacteristic, b: Bicharacteristic) -> float:
    """Symmetric Hausdorff distance between the sampled base curves of two bicharacteristics."""
    pairwise = spec.distance_G(a.X[:, None, :], b.X[None, :, :])
    return float(max(np.max(np.min(pairwise, axis=1)), np.max(np.min(pairwise, axis=0))))


def write_trajectory(spec: MetricSpec, curve: Bicharacteristic, filename: str):
    """
    Exports a bicharacteristic as CSV: s, t, x1..xd, xi_t, xi_1..xi_d, p_residual.
    """
    columns = {"s": curve.direction * curve.s, "t": curve.X[:, 0]}
    for i in range(1, spec.n):
        columns[f"x{i}"] = curve.X[:, i]
    columns["xi_t"] = curve.Xi[:, 0]
    for i in range(1, spec.n):
        columns[f"xi_{i}"] = curve.Xi[:, i]
    columns["p_residual"] = hamiltonian(spec, curve.X, curve.Xi)
    write_columns(filename, columns)
