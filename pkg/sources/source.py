from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal.windows import tukey

from geometry.covector import Covector
from geometry.metric import MetricSpec, Point
from solver.forcing import SampledSource, local_box
from solver.grid import Grid
from solver.wave import WaveOperator
from sources.spectral import bessel_potential, cone_filter
from util.errors import ConfigurationError, PreconditionError
from util.log import log

PACKET = "packet"
BOX_BUMP = "box_bump"
TIMELINE = "timeline"

POINTS_PER_WAVELENGTH = 8
BUMP_CELLS = 6


@dataclass(eq=False)
class SourceTerm:
    """
    A source realized on a grid.

    Attributes:
        kind (str): packet, box_bump or timeline.
        center (Point): x_j for packets, x_0 or x~ for bumps and the time-line source.
        direction (Covector): The lightlike covector of a packet.
        h (float): Width of the microlocal cone.
        a (float): Radius of the bump window.
        freq (float): Carrier frequency (cycles per chart unit, k0 = 2 pi freq).
        order (int): N of the smoothing <D>^{-N}.
        samples (SampledSource): The right-hand side on its local space-time box.
        solution (SampledSource): The closed-form solution of box_g u = f (chi_a or u_6), if known.
        width (float): Envelope width of a packet, transverse width of the time-line profile.
    """
    kind: str
    center: Point
    direction: Optional[Covector]
    h: float
    a: float
    freq: float
    order: int
    samples: SampledSource
    solution: Optional[SampledSource] = None
    width: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "center": self.center.to_list(),
            "direction": None if self.direction is None else self.direction.to_dict(),
            "h": self.h,
            "a": self.a,
            "freq": self.freq,
            "order": self.order,
            "width": self.width,
            "levels": [self.samples.first_level, self.samples.last_level],
            "sup": self.samples.sup_norm(),
        }


def box_points(grid: Grid, first: int, last: int, box: Tuple[slice, ...]) -> np.ndarray:
    times = grid.times[first:last + 1]
    axes = [times] + [a[s] for a, s in zip(grid.axes, box)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def _taper(shape) -> np.ndarray:
    window = np.ones(shape)
    for axis, n in enumerate(shape):
        profile = tukey(n, alpha=0.25)
        view = [1] * len(shape)
        view[axis] = n
        window = window * profile.reshape(view)
    return window


def check_resolvable(grid: Grid, wave_vector: np.ndarray, what: str):
    """
    Raises:
        ConfigurationError: If a carrier with this space-time wave vector has fewer than 8 nodes per wavelength on some axis.
    """
    phase_per_node = np.abs(wave_vector) * grid.spacing
    if np.any(phase_per_node > 2 * np.pi / POINTS_PER_WAVELENGTH):
        raise ConfigurationError(f"{what}: carrier not resolvable on the grid (needs {POINTS_PER_WAVELENGTH} nodes per wavelength, "
                                 f"has {2 * np.pi / np.max(phase_per_node):.2f})", spacing=grid.spacing.tolist())


def make_packet(spec: MetricSpec, grid: Grid, xi: Covector, h: float, freq: float, order: int = 2) -> SourceTerm:
    """
    The microlocalized point source omega_j(x, D; h) <D>^{-N} delta_{x_j}: a Gaussian-windowed
    carrier cos(k0 xi . (X - x_j)) with envelope width max(3 cells, 2.5 / (h k0)), restricted in
    frequency to B_h(xi) u B_h(-xi) by a smooth angular cutoff and smoothed by <D>^{-N}.

    Raises:
        PreconditionError: If xi is not lightlike or h is not in (0, 1).
        ConfigurationError: If the carrier is not resolvable on the grid.
    """
    if not xi.lightlike:
        raise PreconditionError(f"packets are built on lightlike covectors, got {xi}")
    if not 0 < h < 1:
        raise PreconditionError(f"cone width h={h} must lie in (0, 1)")
    k0 = 2 * np.pi * freq
    wave_vector = k0 * xi.xi
    check_resolvable(grid, wave_vector, f"packet at {xi.base}")

    sigma = max(3 * float(np.max(grid.dx)), 2.5 / (h * k0))
    center = xi.x
    first, last, box = local_box(grid, center, np.full(spec.n, 4 * sigma))
    X = box_points(grid, first, last, box)
    delta = X - center
    envelope = np.exp(-np.sum(delta * delta, axis=-1) / (2 * sigma ** 2))
    carrier = np.cos(delta @ wave_vector)

    values = cone_filter(envelope * carrier, grid.spacing, xi.xi, h)
    values = bessel_potential(values, grid.spacing, order) * _taper(values.shape)
    log.solver_verbose(f"packet at {xi.base}: sigma={sigma:.4g}, {values.shape[0]} levels")
    return SourceTerm(PACKET, xi.base, xi, h, 0.0, freq, order, SampledSource(first, box, values), None, sigma)


def bump_profile(spec: MetricSpec, X: np.ndarray, center: np.ndarray, a: float) -> np.ndarray:
    """chi_a = exp(1 - 1 / (1 - r^2)) with r = d_G(X, center) / a; chi_a(center) = 1, supported in B_G(center; a)."""
    r2 = np.sum(spec.aux_weights * (X - center) ** 2, axis=-1) / a ** 2
    inside = r2 < 1.0
    out = np.zeros(r2.shape)
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out


def _check_radius(spec: MetricSpec, grid: Grid, center: Point, a: float, h: Optional[float]):
    if h is not None and not 0 < a < h:
        raise ConfigurationError(f"bump radius a={a} must satisfy 0 < a < h={h}")
    if a < BUMP_CELLS * float(np.max(grid.dx)):
        raise ConfigurationError(f"bump radius a={a} is under-resolved (needs {BUMP_CELLS} cells of {np.max(grid.dx):.4g})")
    radius = a / np.sqrt(spec.aux_weights)
    spec.require_inside(center.coords - radius, "bump ball")
    spec.require_inside(center.coords + radius, "bump ball")


def make_box_bump(spec: MetricSpec, grid: Grid, center: Point, a: float, h: Optional[float] = None,
                  operator: Optional[WaveOperator] = None) -> Tuple[SourceTerm, SampledSource]:
    """
    f = box_g chi_a (discrete operator applied to the analytic bump) together with chi_a itself.
    Solving box_g u = f with zero past data reproduces chi_a.

    Raises:
        ConfigurationError: If a < 6 cells or a >= h.
    """
    _check_radius(spec, grid, center, a, h)
    operator = operator or WaveOperator(spec, grid)
    first, last, box = local_box(grid, center.coords, a / np.sqrt(spec.aux_weights))
    chi = bump_profile(spec, box_points(grid, first, last, box), center.coords, a)
    f = operator.apply(chi, first, box)
    solution = SampledSource(first, box, chi)
    return SourceTerm(BOX_BUMP, center, None, h or 0.0, a, 0.0, 0, SampledSource(first, box, f), solution, a), solution


def make_timeline_source(spec: MetricSpec, grid: Grid, xtilde: Point, a: float, freq: float, order: int = 2,
                         h: Optional[float] = None, operator: Optional[WaveOperator] = None) -> Tuple[SourceTerm, SampledSource]:
    """
    u_6 = chi_a <D>^{-N} delta_T around the time line T = {(t, x~')}: the line delta is a narrow
    Gaussian of width 3 cells in x' carrying the transverse oscillation cos(k0 |x' - x~'|), so the
    wavefront is spacelike and conormal to T. f_6 = box_g u_6 (discrete).
    """
    _check_radius(spec, grid, xtilde, a, h)
    k0 = 2 * np.pi * freq
    check_resolvable(grid, np.concatenate([[0.0], np.full(spec.d, k0)]), f"time-line source at {xtilde}")
    operator = operator or WaveOperator(spec, grid)

    first, last, box = local_box(grid, xtilde.coords, a / np.sqrt(spec.aux_weights))
    X = box_points(grid, first, last, box)
    width = 3 * float(np.max(grid.dx))
    transverse = np.sqrt(np.sum((X[..., 1:] - xtilde.spatial) ** 2, axis=-1))
    line = np.exp(-transverse ** 2 / (2 * width ** 2)) * np.cos(k0 * transverse)
    line = bessel_potential(line, grid.spacing, order, axes=range(1, spec.n))
    u6 = bump_profile(spec, X, xtilde.coords, a) * line

    f6 = operator.apply(u6, first, box)
    solution = SampledSource(first, box, u6)
    return SourceTerm(TIMELINE, xtilde, None, h or 0.0, a, freq, order, SampledSource(first, box, f6), solution, width), solution
