from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geometry.metric import MetricSpec
from solver.forcing import Forcing, as_forcing
from solver.grid import Grid
from util.errors import DomainError, IntegrationError
from util.log import log

SPONGE_REFLECTION = 1e-4
BLOWUP = 1e6


def _interior(ndim: int) -> Tuple[slice, ...]:
    return tuple(slice(1, -1) for _ in range(ndim))


def _box_key(box) -> Optional[tuple]:
    return None if box is None else tuple((s.start, s.stop) for s in box)


@dataclass
class Coefficients:
    """
    Metric weights of the divergence form J * box_g u = -d_t(A d_t u) + sum_i d_i(B_i d_i u)
    with J = sqrt|det g|, A = J / beta and B_i = J kappa^ii / beta (B_i averaged onto the faces).
    """
    A: np.ndarray
    faces: List[np.ndarray]
    J: np.ndarray


class WaveOperator:
    """
    Second-order centered discretization of box_g on a grid, and the conservative leapfrog step

        (A^{n+1/2} (u^{n+1} - u^n) - A^{n-1/2} (u^n - u^{n-1})) / dt^2 + sigma A^n (u^{n+1} - u^{n-1}) / (2 dt)
            = D^n u^n - J^n r^n

    for box_g u = r, where D is the spatial divergence part and sigma the damping of the sponge layer.
    The spatial metric must be diagonal in the chart.
    """

    def __init__(self, spec: MetricSpec, grid: Grid):
        if not spec.diagonal:
            raise DomainError(f"the wave solver needs a chart in which kappa is diagonal, '{spec.name}' is not")
        self.spec = spec
        self.grid = grid
        self.sigma = self._sponge_profile()
        self._cache: Dict[tuple, Coefficients] = {}

    def _sponge_profile(self) -> np.ndarray:
        grid = self.grid
        sigma = np.zeros(grid.shape)
        if grid.sponge == 0:
            return sigma
        width = grid.sponge * float(np.min(grid.dx))
        strength = 3.0 * grid.c_max * np.log(1.0 / SPONGE_REFLECTION) / (2.0 * width)
        for axis in range(grid.d):
            index = np.arange(grid.shape[axis])
            depth = np.maximum(grid.sponge - np.minimum(index, grid.shape[axis] - 1 - index), 0) / grid.sponge
            shape = [1] * grid.d
            shape[axis] = -1
            sigma = sigma + strength * (depth ** 2).reshape(shape)
        return sigma

    def coefficients(self, t: float, box: Optional[Tuple[slice, ...]] = None) -> Coefficients:
        key = (None if self.spec.static else float(t), _box_key(box))
        cached = self._cache.get(key)
        if cached is not None:
            return cached

        X = self.grid.points(t, box)
        b = self.spec.beta(X)
        J = self.spec.volume(X)
        kappa_diagonal = np.diagonal(self.spec.kappa(X), axis1=-2, axis2=-1)
        A = J / b
        faces = []
        for i in range(self.grid.d):
            B = J / (b * kappa_diagonal[..., i])
            upper = [slice(None)] * self.grid.d
            lower = [slice(None)] * self.grid.d
            upper[i] = slice(1, None)
            lower[i] = slice(None, -1)
            faces.append(0.5 * (B[tuple(upper)] + B[tuple(lower)]))

        if len(self._cache) > 16:
            self._cache.clear()
        coefficients = Coefficients(A, faces, J)
        self._cache[key] = coefficients
        return coefficients

    def divergence(self, u: np.ndarray, faces: Sequence[np.ndarray]) -> np.ndarray:
        """sum_i d_i(B_i d_i u) at the nodes not on the box boundary (zero on the boundary)."""
        d = self.grid.d
        out = np.zeros_like(u)
        inner = _interior(d)
        for i, face in enumerate(faces):
            flux = face * np.diff(u, axis=i) / self.grid.dx[i] ** 2
            upper = list(inner)
            lower = list(inner)
            upper[i] = slice(1, None)
            lower[i] = slice(None, -1)
            out[inner] += flux[tuple(upper)] - flux[tuple(lower)]
        return out

    def apply(self, u: np.ndarray, first_level: int = 0, box: Optional[Tuple[slice, ...]] = None) -> np.ndarray:
        """
        box_g applied to a space-time array u[k] = u^{first_level + k} (on the spatial `box`).
        Values at the first and last level and on the spatial box boundary are zero.
        """
        grid = self.grid
        dt = grid.dt
        out = np.zeros_like(u)
        for k in range(1, u.shape[0] - 1):
            t = grid.t_start + (first_level + k) * dt
            now = self.coefficients(t, box)
            before = self.coefficients(t - 0.5 * dt, box)
            after = self.coefficients(t + 0.5 * dt, box)
            temporal = (after.A * (u[k + 1] - u[k]) - before.A * (u[k] - u[k - 1])) / dt ** 2
            value = (self.divergence(u[k], now.faces) - temporal) / now.J
            out[k] = _zero_boundary(value)
        return out

    def step(self, field: "Field", r: Optional[np.ndarray], blowup: float = BLOWUP):
        """Advances a field from level n to n + 1 with right-hand side r^n (None for zero)."""
        grid = self.grid
        dt = grid.dt
        t = grid.times[field.level]
        now = self.coefficients(t)
        before = self.coefficients(t - 0.5 * dt)
        after = self.coefficients(t + 0.5 * dt)

        u, u_prev = field.u, field.u_prev
        rhs = self.divergence(u, now.faces)
        if r is not None:
            rhs -= now.J * r
        damping = 0.5 * dt * self.sigma * now.A
        u_next = (dt ** 2 * rhs + after.A * u + before.A * (u - u_prev) + damping * u_prev) / (after.A + damping)
        u_next = _zero_boundary(u_next)

        peak = float(np.max(np.abs(u_next)))
        if not np.isfinite(peak) or peak > blowup:
            raise IntegrationError(f"wave solve blew up at t={t + dt:.6g} (|u| = {peak:.3e})", level=field.level + 1,
                                   time=t + dt, peak=peak, blowup=blowup)

        field.energy_value = self._energy(u_next, u, after.A, now.faces)
        field.u_prev, field.u = u, u_next
        field.level += 1
        field.peak = peak

    def _energy(self, u_next, u, A_half, faces) -> float:
        velocity = (u_next - u) / self.grid.dt
        return float(0.5 * self.grid.cell_volume * (np.sum(A_half * velocity ** 2) - np.sum(u_next * self.divergence(u, faces))))


def _zero_boundary(u: np.ndarray) -> np.ndarray:
    for axis in range(u.ndim):
        index = [slice(None)] * u.ndim
        index[axis] = 0
        u[tuple(index)] = 0.0
        index[axis] = -1
        u[tuple(index)] = 0.0
    return u


def box_g_apply(spec: MetricSpec, grid: Grid, field: np.ndarray, first_level: int = 0, box=None,
                operator: Optional[WaveOperator] = None) -> np.ndarray:
    """
    The discrete wave operator box_g = |det g|^{-1/2} d_j(|det g|^{1/2} g^{jk} d_k) on a space-time array.
    It is the operator the leapfrog solver inverts: solving box_g u = box_g_apply(v) with zero past
    data reproduces v wherever the damping layer vanishes.
    """
    operator = operator or WaveOperator(spec, grid)
    return operator.apply(np.asarray(field, dtype=float), first_level, box)


@dataclass(eq=False)
class Field:
    """Leapfrog state: the values at time levels `level` and `level - 1`."""
    grid: Grid
    u: np.ndarray
    u_prev: np.ndarray
    level: int = 0
    peak: float = 0.0
    energy_value: float = 0.0

    @staticmethod
    def zero(grid: Grid) -> "Field":
        return Field(grid, grid.zeros(), grid.zeros())

    @property
    def time(self) -> float:
        return float(self.grid.times[self.level])


@dataclass
class Recording:
    """
    What a solve keeps besides its final state: snapshots every `stride` levels (0 = none) on a
    spatial `window` (None = full grid), and optionally the discrete energy per step.
    """
    stride: int = 0
    window: Optional[Tuple[slice, ...]] = None
    energy: bool = False

    @staticmethod
    def around(grid: Grid, points: np.ndarray, margin: int = 4) -> "Recording":
        """Stride-1 recording on the smallest window holding the spatial projections of `points` plus `margin` nodes."""
        points = np.atleast_2d(points)
        low = points[:, 1:].min(axis=0)
        high = points[:, 1:].max(axis=0)
        center = 0.5 * (low + high)
        radius = 0.5 * (high - low) + margin * grid.dx
        return Recording(1, grid.index_box(center, radius))

    def to_dict(self) -> dict:
        return {"stride": self.stride, "window": None if self.window is None else [[s.start, s.stop] for s in self.window],
                "energy": self.energy}


@dataclass(eq=False)
class FieldHistory:
    """
    Result of a solve: the final leapfrog state, the recorded snapshots (levels[k] -> data[k] on
    `window`), the per-level sup norm and, if requested, the discrete energy E^{n+1/2}.
    """
    grid: Grid
    final: Field
    levels: np.ndarray
    data: np.ndarray
    window: Optional[Tuple[slice, ...]]
    peaks: np.ndarray
    energy: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times[self.levels]

    def axes(self) -> List[np.ndarray]:
        if self.window is None:
            return self.grid.axes
        return [a[s] for a, s in zip(self.grid.axes, self.window)]

    def snapshot(self, level: int) -> np.ndarray:
        k = int(np.searchsorted(self.levels, level))
        if k >= len(self.levels) or self.levels[k] != level:
            raise DomainError(f"level {level} was not recorded")
        return self.data[k]

    def sup_norm(self) -> float:
        return float(np.max(self.peaks)) if len(self.peaks) else 0.0


class HistoryRecorder:
    def __init__(self, grid: Grid, recording: Optional[Recording]):
        self.grid = grid
        self.recording = recording or Recording()
        self.levels: List[int] = []
        self.data: List[np.ndarray] = []
        self.peaks: List[float] = [0.0]
        self.energy: List[float] = []

    def observe(self, field: Field):
        if field.level > 0:
            self.peaks.append(field.peak)
            if self.recording.energy:
                self.energy.append(field.energy_value)
        stride = self.recording.stride
        if stride and field.level % stride == 0:
            window = self.recording.window
            self.levels.append(field.level)
            self.data.append((field.u if window is None else field.u[window]).copy())

    def finish(self, field: Field, **metadata) -> FieldHistory:
        shape = self.grid.shape if self.recording.window is None else tuple(s.stop - s.start for s in self.recording.window)
        data = np.asarray(self.data) if self.data else np.zeros((0,) + shape)
        energy = np.asarray(self.energy) if self.recording.energy else None
        return FieldHistory(self.grid, field, np.asarray(self.levels, dtype=int), data, self.recording.window,
                            np.asarray(self.peaks), energy, dict(metadata))


def _march(spec: MetricSpec, grid: Grid, forcing: Forcing, recording: Optional[Recording], operator: Optional[WaveOperator],
           cubic: bool, blowup: float, description: str) -> FieldHistory:
    operator = operator or WaveOperator(spec, grid)
    field = Field.zero(grid)
    recorder = HistoryRecorder(grid, recording)
    recorder.observe(field)

    with log.progress(description, total=grid.steps) as progress:
        for n in range(grid.steps):
            r = forcing.at(n)
            if cubic:
                cube = field.u ** 3
                r = -cube if r is None else r - cube
            operator.step(field, r, blowup)
            recorder.observe(field)
            progress.advance(status=f"t={grid.times[n + 1]:.3f}")

    log.solver_verbose(f"{description}: {grid.steps} steps, sup |u| = {max(recorder.peaks):.3e}")
    return recorder.finish(field)


def solve_linear(spec: MetricSpec, grid: Grid, rhs, recording: Optional[Recording] = None, operator: Optional[WaveOperator] = None,
                 blowup: float = BLOWUP) -> FieldHistory:
    """
    Solves box_g u = rhs with zero data before the first level.

    Args:
        rhs: A Forcing, a SampledSource, a list of (weight, SampledSource), a (steps + 1, *shape) array, or None.

    Raises:
        IntegrationError: If |u| exceeds `blowup` or becomes non-finite.
    """
    return _march(spec, grid, as_forcing(grid, rhs), recording, operator, False, blowup, "linear solve")


def solve_nonlinear(spec: MetricSpec, grid: Grid, f, recording: Optional[Recording] = None, operator: Optional[WaveOperator] = None,
                    blowup: float = BLOWUP) -> FieldHistory:
    """
    Solves box_g u + u^3 = f with zero data before the first level; the cubic term is explicit
    (evaluated at the current level).
    """
    return _march(spec, grid, as_forcing(grid, f), recording, operator, True, blowup, "nonlinear solve")


def energy_drift(history: FieldHistory, from_level: int = 0) -> float:
    """
    Relative variation max |E - E_ref| / |E_ref| of the recorded energy E^{n+1/2}, n >= from_level,
    with E_ref the energy at from_level (take a level after the last forcing level).
    """
    if history.energy is None or len(history.energy) == 0:
        raise DomainError("the solve did not record the energy")
    values = history.energy[max(from_level, 0):]
    reference = values[0]
    if reference == 0.0:
        return float(np.max(np.abs(values)))
    return float(np.max(np.abs(values - reference)) / abs(reference))
