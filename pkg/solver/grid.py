from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from geometry.metric import MetricSpec
from util.errors import ConfigurationError, DomainError


class Grid:
    """
    A uniform space-time grid over a spatial box of the chart, with nodes x_i = lower + i * dx
    (i = 0..cells) and time levels t^n = t_start + n * dt (n = 0..steps).

    The outermost `sponge` nodes of every spatial axis form the damping layer; the remaining nodes
    are the interior. Boundary nodes carry homogeneous Dirichlet values.

    Attributes:
        dt (float): Time step, chosen as cfl * min(dx) / c_max and then shortened so the steps end at t_end.
        c_max (float): Maximal characteristic coordinate speed sqrt(|kappa^-1|) sampled on the grid.
    """

    MAX_CFL = 0.5
    MIN_SPONGE = 16

    def __init__(self, spec: MetricSpec, lower: Sequence[float], upper: Sequence[float], cells, t_start: float, t_end: float,
                 cfl: float = 0.4, sponge: int = 16, reflecting: bool = False):
        self.spec = spec
        self.d = spec.d
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.cells = np.broadcast_to(np.asarray(cells, dtype=int), (self.d,)).copy()
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.cfl = float(cfl)
        self.sponge = 0 if reflecting else int(sponge)
        self.reflecting = reflecting

        if spec.periodic:
            raise ConfigurationError(f"wave solves need a bounded chart, '{spec.name}' has periodic axes")
        if self.lower.shape != (self.d,) or self.upper.shape != (self.d,) or np.any(self.lower >= self.upper):
            raise ConfigurationError(f"invalid spatial grid box {lower} .. {upper}")
        if not self.t_end > self.t_start:
            raise ConfigurationError(f"empty time interval [{t_start}, {t_end}]")
        if not reflecting and self.sponge < self.MIN_SPONGE:
            raise ConfigurationError(f"absorbing layer must be at least {self.MIN_SPONGE} cells, got {sponge}")
        if not 0 < self.cfl <= self.MAX_CFL:
            raise ConfigurationError(f"CFL number {cfl} outside (0, {self.MAX_CFL}]")
        if np.any(self.cells <= 2 * self.sponge + 4):
            raise ConfigurationError(f"{self.cells.tolist()} cells leave no interior next to a {self.sponge} cell layer")

        corners_low = np.concatenate([[self.t_start], self.lower])
        corners_high = np.concatenate([[self.t_end], self.upper])
        spec.require_inside(corners_low, "grid corner")
        spec.require_inside(corners_high, "grid corner")

        self.dx = (self.upper - self.lower) / self.cells
        self.axes: List[np.ndarray] = [self.lower[i] + self.dx[i] * np.arange(self.cells[i] + 1) for i in range(self.d)]
        self.shape = tuple(int(c) + 1 for c in self.cells)

        self.c_max = self._max_speed()
        dt = self.cfl * float(np.min(self.dx)) / self.c_max
        self.steps = int(np.ceil((self.t_end - self.t_start) / dt))
        self.dt = (self.t_end - self.t_start) / self.steps
        self.times = self.t_start + self.dt * np.arange(self.steps + 1)

    def _max_speed(self) -> float:
        speeds = []
        for t in np.linspace(self.t_start, self.t_end, 5):
            kappa = self.spec.kappa(self.points(t))
            speeds.append(np.max(1.0 / np.linalg.eigvalsh(kappa)[..., 0]))
        return float(np.sqrt(max(speeds)))

    @staticmethod
    def from_config(spec: MetricSpec, config: dict, reflecting: bool = False) -> "Grid":
        t_start, t_end = config["time"]
        return Grid(spec, config["lower"], config["upper"], config["cells"], t_start, t_end, config.get("cfl", 0.4),
                    config.get("sponge", Grid.MIN_SPONGE), reflecting or config.get("reflecting", False))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.spec, self.lower, self.upper, self.cells * factor, self.t_start, self.t_end, self.cfl,
                    self.sponge * factor if not self.reflecting else 0, self.reflecting)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def spacing(self) -> np.ndarray:
        """Space-time spacing (dt, dx_1, ..., dx_d)."""
        return np.concatenate([[self.dt], self.dx])

    def points(self, t: float, box: Optional[Tuple[slice, ...]] = None) -> np.ndarray:
        """Space-time coordinates of the nodes at time t, shape (*shape, n)."""
        axes = self.axes if box is None else [a[s] for a, s in zip(self.axes, box)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([np.full(mesh[0].shape, t), *mesh], axis=-1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def level(self, t: float) -> int:
        """Index of the nearest time level."""
        return int(np.clip(np.rint((t - self.t_start) / self.dt), 0, self.steps))

    def index_box(self, center: Sequence[float], radius: Sequence[float]) -> Tuple[slice, ...]:
        """Node slices covering [center - radius, center + radius] on every spatial axis, clipped to the grid."""
        radius = np.broadcast_to(np.asarray(radius, dtype=float), (self.d,))
        box = []
        for i in range(self.d):
            low = int(np.floor((center[i] - radius[i] - self.lower[i]) / self.dx[i]))
            high = int(np.ceil((center[i] + radius[i] - self.lower[i]) / self.dx[i])) + 1
            box.append(slice(max(low, 0), min(high, self.shape[i])))
        return tuple(box)

    def interior_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        margin = (self.sponge + 1) * self.dx
        return self.lower + margin, self.upper - margin

    def require_interior(self, X: np.ndarray, what: str = "point"):
        """
        Raises:
            DomainError: If a space-time point lies outside the time range or in the damping layer.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        low, high = self.interior_bounds()
        inside = np.all((X[:, 1:] >= low) & (X[:, 1:] <= high), axis=-1) & (X[:, 0] >= self.t_start) & (X[:, 0] <= self.t_end)
        if not np.all(inside):
            k = int(np.argmin(inside))
            raise DomainError(f"{what} {np.round(X[k], 6).tolist()} outside the grid interior", lower=low, upper=high)

    def resolution(self) -> float:
        """Largest space-time spacing."""
        return float(max(self.dt, np.max(self.dx)))

    def to_dict(self) -> dict:
        return {
            "lower": self.lower.tolist(), "upper": self.upper.tolist(), "cells": self.cells.tolist(),
            "time": [self.t_start, self.t_end], "dt": self.dt, "steps": self.steps, "cfl": self.cfl,
            "sponge": self.sponge, "reflecting": self.reflecting, "c_max": self.c_max,
        }
