from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from geometry.observer import ObserverCurve
from solver.wave import FieldHistory
from util.errors import DomainError
from util.resultcsv import write_columns


@dataclass(eq=False)
class TraceSeries:
    """
    mu^* u: samples of a field along the observer curve at uniformly spaced parameters r in [-1, 1].
    """
    r: np.ndarray
    values: np.ndarray
    times: np.ndarray
    order: int = 3
    label: str = ""

    @property
    def spacing(self) -> float:
        return float(self.r[1] - self.r[0])

    @property
    def rate(self) -> float:
        """Samples per unit curve parameter."""
        return 1.0 / self.spacing

    def combine(self, other: "TraceSeries", weight: float = 1.0, label: Optional[str] = None) -> "TraceSeries":
        """self + weight * other on the same samples."""
        if self.r.shape != other.r.shape or np.max(np.abs(self.r - other.r)) > 1e-12:
            raise DomainError("traces are sampled at different parameters")
        return TraceSeries(self.r, self.values + weight * other.values, self.times, self.order, label or self.label)

    def scaled(self, factor: float, label: Optional[str] = None) -> "TraceSeries":
        return TraceSeries(self.r, factor * self.values, self.times, self.order, label or self.label)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0

    def write(self, filename: str):
        write_columns(filename, {"r": self.r, "t": self.times, "value": self.values})


def trace_samples(curve: ObserverCurve, history: FieldHistory, oversample: int = 4) -> np.ndarray:
    """Uniform curve parameters at `oversample` times the Nyquist density of the solver's time levels."""
    span = float(curve.mu(1.0)[0] - curve.mu(-1.0)[0])
    count = int(np.ceil(oversample * span / (2 * history.grid.dt))) + 1
    return np.linspace(-1.0, 1.0, max(count, 8))


def trace_along(curve: ObserverCurve, history: FieldHistory, r: Optional[np.ndarray] = None, oversample: int = 4,
                label: str = "") -> TraceSeries:
    """
    Cubic space-time interpolation of a recorded field history onto mu(r).

    Raises:
        DomainError: If the curve leaves the grid interior or the recorded window.
    """
    grid = history.grid
    r = trace_samples(curve, history, oversample) if r is None else np.asarray(r, dtype=float)
    points = curve.mu(r)
    grid.require_interior(points, "observer curve")
    if len(history.levels) < 4:
        raise DomainError("the field history holds fewer than four recorded levels")

    times = history.times
    axes = history.axes()
    low = np.array([times[0]] + [a[0] for a in axes])
    high = np.array([times[-1]] + [a[-1] for a in axes])
    if np.any(points < low) or np.any(points > high):
        raise DomainError("observer curve leaves the recorded window", low=low.tolist(), high=high.tolist())

    interpolator = RegularGridInterpolator((times, *axes), history.data, method="cubic")
    return TraceSeries(r, interpolator(points), points[:, 0], 3, label)
