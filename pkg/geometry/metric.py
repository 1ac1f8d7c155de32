from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from util.errors import DomainError, InternalError


@dataclass_json
@dataclass(frozen=True)
class Tolerances:
    """
    Numerical thresholds shared by the geometry, scattering and detector modules.

    Attributes:
        null (float): cone membership |p| <= null * |xi|^2.
        flow (float): admissible drift of p along a bicharacteristic, relative to |xi|^2.
        cut (float): time separations above this value count as chronological.
        degenerate (float): covectors with null < |p|/|xi|^2 <= degenerate are rejected, not projected.
        meet (float): distance below which two points of M coincide (chart units).
        distinct (float): Hausdorff distance above which two bicharacteristics are distinct.
        span (float): relative residual of the span test.
        det (float): detection threshold as a multiple of the median band energy.
        min_angle (float): minimal incidence angle (degrees) between a wavefront and the observer.
    """
    null: float = 1e-10
    flow: float = 1e-8
    cut: float = 1e-6
    degenerate: float = 1e-6
    meet: float = 1e-6
    distinct: float = 1e-5
    span: float = 1e-8
    det: float = 6.0
    min_angle: float = 5.0

    # documented safe ranges, checked when overrides are applied
    RANGES = {
        "null": (1e-14, 1e-8),
        "flow": (1e-12, 1e-5),
        "cut": (1e-10, 1e-3),
        "degenerate": (1e-10, 1e-3),
        "meet": (1e-12, 0.5),
        "distinct": (1e-10, 5.0),
        "span": (1e-14, 1e-4),
        "det": (2.0, 100.0),
        "min_angle": (0.0, 45.0),
    }

    def with_overrides(self, overrides: Dict[str, float]) -> "Tolerances":
        from util.errors import ConfigurationError

        values = self.to_dict()
        for key, value in (overrides or {}).items():
            if key not in self.RANGES:
                raise ConfigurationError(f"unknown tolerance '{key}'")
            low, high = self.RANGES[key]
            if not (low <= float(value) <= high):
                raise ConfigurationError(f"tolerance '{key}'={value} outside the safe range [{low}, {high}]")
            values[key] = float(value)
        return Tolerances(**values)


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True, eq=False)
class Point:
    """
    A point (t, x') of M = R x M0 in the coordinates of the chart box.
    """
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1)
        if not np.all(np.isfinite(coords)):
            raise DomainError(f"point has non-finite coordinates {coords}")
        object.__setattr__(self, "coords", coords)

    @staticmethod
    def of(t: float, *spatial: float) -> "Point":
        return Point(np.array([t, *spatial], dtype=float))

    @property
    def t(self) -> float:
        return float(self.coords[0])

    @property
    def spatial(self) -> np.ndarray:
        return self.coords[1:]

    @property
    def dimension(self) -> int:
        return self.coords.shape[0]

    def to_list(self) -> list:
        return [float(c) for c in self.coords]

    def __repr__(self):
        return "Point(" + ", ".join(f"{c:.6g}" for c in self.coords) + ")"


class MetricSpec(ABC):
    """
    A Lorentzian metric g = beta(t, x') (-dt^2 + kappa(t, x')) on a chart box of R x M0.

    All evaluators are vectorized over leading axes: `X` has shape (..., n) with n = 1 + d,
    `beta` returns (...), `kappa` returns (..., d, d), `dbeta` returns (..., n) and `dkappa`
    returns (..., n, d, d) (derivative index first). Subclasses implement `beta` and `kappa`;
    derivatives fall back to central finite differences unless overridden.

    Periodic chart axes (e.g. a longitude) are listed in `periodic` as {axis: period}; they have
    no chart bounds and distances use the minimal image.
    """

    FD_STEP = 1e-6

    def __init__(self, spatial_dimension: int, lower: Sequence[float], upper: Sequence[float],
                 periodic: Optional[Dict[int, float]] = None, aux_weights: Optional[Sequence[float]] = None,
                 params: Optional[dict] = None):
        if spatial_dimension not in (2, 3):
            raise DomainError(f"spatial dimension must be 2 or 3, got {spatial_dimension}")
        self.d = spatial_dimension
        self.n = spatial_dimension + 1
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != (self.n,) or self.upper.shape != (self.n,) or np.any(self.lower >= self.upper):
            raise DomainError(f"invalid chart box {lower} .. {upper} for dimension 1+{self.d}")
        self.periodic = dict(periodic or {})
        self.aux_weights = np.ones(self.n) if aux_weights is None else np.asarray(aux_weights, dtype=float)
        self.params = dict(params or {})

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    @property
    def static(self) -> bool:
        """True if beta and kappa do not depend on t."""
        return False

    @property
    def diagonal(self) -> bool:
        """True if kappa is diagonal in the chart."""
        return False

    @abstractmethod
    def beta(self, X: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def kappa(self, X: np.ndarray) -> np.ndarray:
        pass

    def dbeta(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[:-1] + (self.n,))
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = self.FD_STEP
            out[..., i] = (self.beta(X + e) - self.beta(X - e)) / (2 * self.FD_STEP)
        return out

    def dkappa(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[:-1] + (self.n, self.d, self.d))
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = self.FD_STEP
            out[..., i, :, :] = (self.kappa(X + e) - self.kappa(X - e)) / (2 * self.FD_STEP)
        return out

    def scaled(self, factor: float) -> "MetricSpec":
        """The conformally rescaled metric factor * g (same chart)."""
        return ScaledMetric(self, factor)

    # chart handling

    def bounded_axes(self) -> np.ndarray:
        return np.array([i not in self.periodic for i in range(self.n)])

    def inside(self, X: np.ndarray, margin: float = 0.0) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        bounded = self.bounded_axes()
        ok = (X[..., bounded] >= self.lower[bounded] + margin) & (X[..., bounded] <= self.upper[bounded] - margin)
        return np.all(ok, axis=-1) & np.all(np.isfinite(X), axis=-1)

    def boundary_distance(self, X: np.ndarray) -> np.ndarray:
        """Signed distance to the bounded faces of the chart box (negative outside)."""
        X = np.asarray(X, dtype=float)
        bounded = self.bounded_axes()
        return np.min(np.minimum(X[..., bounded] - self.lower[bounded], self.upper[bounded] - X[..., bounded]), axis=-1)

    def clamp(self, X: np.ndarray) -> np.ndarray:
        """X with the bounded coordinates clipped onto the chart box."""
        X = np.array(X, dtype=float)
        bounded = self.bounded_axes()
        X[..., bounded] = np.clip(X[..., bounded], self.lower[bounded], self.upper[bounded])
        return X

    def require_inside(self, X, what: str = "point"):
        coords = X.coords if isinstance(X, Point) else np.asarray(X, dtype=float)
        if not np.all(self.inside(coords)):
            raise DomainError(f"{what} {np.round(coords, 6).tolist()} outside chart box of '{self.name}'", lower=self.lower, upper=self.upper)

    def difference(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Y - X, with periodic axes reduced to the minimal image."""
        delta = np.asarray(Y, dtype=float) - np.asarray(X, dtype=float)
        for axis, period in self.periodic.items():
            delta[..., axis] = (delta[..., axis] + period / 2) % period - period / 2
        return delta

    def distance_G(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Distance of the auxiliary Riemannian metric G (weighted Euclidean in the chart)."""
        delta = self.difference(X, Y)
        return np.sqrt(np.sum(self.aux_weights * delta * delta, axis=-1))

    # metric tensors

    def covariant(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        b = self.beta(X)
        g = np.zeros(X.shape[:-1] + (self.n, self.n))
        g[..., 0, 0] = -b
        g[..., 1:, 1:] = b[..., None, None] * self.kappa(X)
        return g

    def contravariant(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        b = self.beta(X)
        ginv = np.zeros(X.shape[:-1] + (self.n, self.n))
        ginv[..., 0, 0] = -1.0 / b
        ginv[..., 1:, 1:] = np.linalg.inv(self.kappa(X)) / b[..., None, None]
        return ginv

    def volume(self, X: np.ndarray) -> np.ndarray:
        """sqrt|det g| = beta^(n/2) sqrt(det kappa)."""
        X = np.asarray(X, dtype=float)
        return self.beta(X) ** (self.n / 2) * np.sqrt(np.linalg.det(self.kappa(X)))

    def to_dict(self) -> dict:
        return {
            "preset": self.name,
            "dimension": self.d,
            "chart": {"lower": self.lower.tolist(), "upper": self.upper.tolist()},
            "periodic": {str(k): v for k, v in self.periodic.items()},
            "parameter": self.params,
        }


class ScaledMetric(MetricSpec):
    """Conformal rescaling factor * g of another metric."""

    def __init__(self, base: MetricSpec, factor: float):
        if factor <= 0:
            raise DomainError(f"conformal factor must be positive, got {factor}")
        super().__init__(base.d, base.lower, base.upper, base.periodic, base.aux_weights, dict(base.params, conformal_factor=factor))
        self._base = base
        self._factor = float(factor)

    @property
    def name(self) -> str:
        return self._base.name

    @property
    def static(self) -> bool:
        return self._base.static

    @property
    def diagonal(self) -> bool:
        return self._base.diagonal

    def beta(self, X):
        return self._factor * self._base.beta(X)

    def kappa(self, X):
        return self._base.kappa(X)

    def dbeta(self, X):
        return self._factor * self._base.dbeta(X)

    def dkappa(self, X):
        return self._base.dkappa(X)


def metric_at(spec: MetricSpec, x: Point, check_tolerance: float = 1e-12) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    Evaluates the metric at a point.

    Returns:
        (g, g^-1, sqrt|det g|) with g of signature (-, +, ..., +).

    Raises:
        DomainError: If x lies outside the chart box.
        InternalError: If the sampled metric is not Lorentzian or beta <= 0.
    """
    spec.require_inside(x)
    X = x.coords
    b = float(spec.beta(X))
    if not b > 0:
        raise InternalError(f"beta={b} is not positive at {x}")

    g = spec.covariant(X)
    ginv = spec.contravariant(X)
    if np.max(np.abs(g @ ginv - np.eye(spec.n))) > check_tolerance * max(1.0, np.max(np.abs(g)) * np.max(np.abs(ginv))):
        raise InternalError(f"g g^-1 != 1 at {x}")

    eigenvalues = np.linalg.eigvalsh(g)
    if not (eigenvalues[0] < 0 and np.all(eigenvalues[1:] > 0)):
        raise InternalError(f"metric at {x} has eigenvalues {eigenvalues}, expected signature (-,+,...,+)")

    return g, ginv, float(spec.volume(X))
