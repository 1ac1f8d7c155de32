from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

from solver.grid import Grid
from util.errors import ConfigurationError, DomainError


@dataclass(eq=False)
class SampledSource:
    """
    Right-hand side samples on a local space-time box of a grid: time levels first_level ..
    first_level + len(values) - 1 and the spatial node slices `box`.
    """
    first_level: int
    box: Tuple[slice, ...]
    values: np.ndarray

    @property
    def last_level(self) -> int:
        return self.first_level + self.values.shape[0] - 1

    def covers(self, n: int) -> bool:
        return self.first_level <= n <= self.last_level

    def add_to(self, out: np.ndarray, n: int, weight: float = 1.0):
        if self.covers(n):
            out[self.box] += weight * self.values[n - self.first_level]

    def full(self, grid: Grid) -> np.ndarray:
        """The samples embedded in a (steps + 1, *shape) array."""
        out = np.zeros((grid.steps + 1,) + grid.shape)
        out[(slice(self.first_level, self.last_level + 1),) + self.box] = self.values
        return out

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


def local_box(grid: Grid, center: np.ndarray, radius: np.ndarray, pad: int = 2) -> Tuple[int, int, Tuple[slice, ...]]:
    """
    Time levels and spatial slices covering a space-time box of half widths `radius` around `center`,
    padded by `pad` nodes. The box must lie in the grid interior and after the first two levels.

    Raises:
        DomainError: If the box reaches the damping layer or leaves the time range.
    """
    first = int(np.floor((center[0] - radius[0] - grid.t_start) / grid.dt)) - pad
    last = int(np.ceil((center[0] + radius[0] - grid.t_start) / grid.dt)) + pad
    if first < 2 or last > grid.steps:
        raise DomainError(f"source around t={center[0]:.4g} does not fit between the onset and the end of the grid",
                          first_level=first, last_level=last)
    box = grid.index_box(center[1:], radius[1:] + pad * grid.dx)
    for axis, s in enumerate(box):
        if s.start <= grid.sponge or s.stop >= grid.shape[axis] - grid.sponge:
            raise DomainError(f"source around {np.round(center, 4).tolist()} reaches the damping layer")
    return first, last, box


class Forcing:
    """A right-hand side r^n of the discrete wave equation, evaluated level by level."""

    def at(self, n: int) -> Optional[np.ndarray]:
        return None


class SourceForcing(Forcing):
    """Weighted sum of sampled sources."""

    def __init__(self, grid: Grid, terms: Iterable[Tuple[float, SampledSource]]):
        self.grid = grid
        self.terms: List[Tuple[float, SampledSource]] = [(float(w), s) for w, s in terms if w != 0.0]

    def at(self, n: int) -> Optional[np.ndarray]:
        active = [(w, s) for w, s in self.terms if s.covers(n)]
        if not active:
            return None
        out = np.zeros(self.grid.shape)
        for weight, source in active:
            source.add_to(out, n, weight)
        return out


class ArrayForcing(Forcing):
    def __init__(self, grid: Grid, values: np.ndarray):
        if values.shape != (grid.steps + 1,) + grid.shape:
            raise ConfigurationError(f"right-hand side of shape {values.shape} does not match the grid {(grid.steps + 1,) + grid.shape}")
        self.values = values

    def at(self, n: int) -> Optional[np.ndarray]:
        return self.values[n]


def as_forcing(grid: Grid, rhs) -> Forcing:
    if rhs is None:
        return Forcing()
    if isinstance(rhs, Forcing):
        return rhs
    if isinstance(rhs, SampledSource):
        return SourceForcing(grid, [(1.0, rhs)])
    if isinstance(rhs, np.ndarray):
        return ArrayForcing(grid, rhs)
    return SourceForcing(grid, [(1.0, s) if isinstance(s, SampledSource) else s for s in rhs])
