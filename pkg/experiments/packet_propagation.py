from typing import List, Optional

import numpy as np

from detector.pipeline import linear_trace, tolerance_in_r
from detector.singularity import detect_trace_singularities, precision_recall
from experiments import experiment
from geometry.covector import Covector, covector, null_covector
from geometry.flow import FORWARD, Bicharacteristic, distance_to_trajectory, flow, write_trajectory
from geometry.metric import MetricSpec, Point, Tolerances
from solver.forcing import SampledSource
from solver.grid import Grid
from solver.snapshot import write_snapshot
from solver.wave import Recording, WaveOperator, solve_linear
from sources.source import bump_profile, make_box_bump, make_packet, make_timeline_source
from sources.spectral import cone_fraction, spacelike_fraction
from util.errors import ConfigurationError, DomainError
from util.log import log


def _reproduction_error(history, solution: SampledSource, grid: Grid) -> float:
    expected = solution.full(grid)[(slice(None),) + solution.box]
    return float(np.max(np.abs(history.data - expected)) / max(solution.sup_norm(), 1e-300))


def _ray_point(spec: MetricSpec, ray: Bicharacteristic, t: float) -> Optional[np.ndarray]:
    if not ray.X[0, 0] <= t <= ray.X[-1, 0]:
        return None
    return ray.point(spec, float(np.interp(t, ray.X[:, 0], ray.s)))


class PacketPropagation(experiment.Experiment):
    """
    A single microlocalized packet: its wavefront set, how its energy follows the null geodesic,
    and where the observer sees it. The bump and time-line sources are checked against their
    closed-form solutions on the same grid.
    """

    @property
    def name(self) -> str:
        return "packet-propagation"

    @property
    def description(self) -> str:
        return f"Packet propagation on {self.spec.name}"

    def _default_point(self, fraction: float) -> List[float]:
        grid = self.grid
        return [grid.t_start + fraction * (grid.t_end - grid.t_start)] + (0.5 * (grid.lower + grid.upper)).tolist()

    def packet_covector(self) -> Covector:
        base = Point(self.parameter("source", self._default_point(0.25)))
        direction = self.parameter("direction", [1.0] + [0.0] * (self.spec.d - 1))
        return null_covector(self.spec, base, direction, True, self.tolerances)

    def run(self):
        settings = self.settings()
        operator = WaveOperator(self.spec, self.grid)
        freq = float(self.parameter("freq", settings.freq))
        h = float(self.parameter("h", settings.h))
        order = int(self.parameter("order", settings.order))

        xi = self.packet_covector()
        self.packet(xi, h, freq, order, operator)
        self.observed(xi, h, freq, order, operator)
        self.closed_form(h, freq, order, operator)

    def packet(self, xi: Covector, h: float, freq: float, order: int, operator: WaveOperator):
        spec, grid = self.spec, self.grid
        source = make_packet(spec, grid, xi, h, freq, order)
        values = source.samples.values
        self.check("packet cone fraction", cone_fraction(values, grid.spacing, xi.xi, h), self.limit("cone_fraction", 0.99), at_least=True,
                   detail=f"h={h}, freq={freq}")

        opposite = make_packet(spec, grid, covector(spec, xi.base, -xi.xi, self.tolerances), h, freq, order)
        self.check("packet of -xi", float(np.max(np.abs(opposite.samples.values - values))), 1e-12 * max(source.samples.sup_norm(), 1.0))

        stride = int(self.parameter("stride", max(1, grid.steps // 40)))
        history = solve_linear(spec, grid, source.samples, Recording(stride), operator)
        ray = flow(spec, xi, 0.5 * (grid.t_end - xi.base.t) * float(np.max(spec.beta(grid.points(xi.base.t)))) + 1.0, FORWARD,
                   self.tolerances)
        write_trajectory(spec, ray, self.path("trajectories", "packet.csv"))

        low, high = grid.interior_bounds()
        end_time = float(grid.times[source.samples.last_level])
        mesh = np.stack(np.meshgrid(*grid.axes, indexing="ij"), axis=-1)
        worst, tracked = 0.0, 0
        for level, u in zip(history.levels, history.data):
            t = float(grid.times[level])
            point = _ray_point(spec, ray, t)
            if t <= end_time or point is None or np.any(point[1:] - low < 4 * source.width) or np.any(high - point[1:] < 4 * source.width):
                continue
            energy = u ** 2
            total = float(np.sum(energy))
            if total == 0.0:
                continue
            centroid = np.tensordot(energy, mesh, axes=(tuple(range(spec.d)), tuple(range(spec.d)))) / total
            worst = max(worst, float(np.max(np.abs(centroid - point[1:]))))
            tracked += 1
        if tracked:
            self.check("energy follows the null geodesic", worst, self.limit("centroid_cells", 2.0) * float(np.max(grid.dx)),
                       detail=f"{tracked} snapshots")
        else:
            log.warn(f"{self.name}: no snapshot after the source with the ray inside the grid, centroid not checked")

        if self.parameter("snapshot", False):
            write_snapshot(self.path("snapshot.wech"), history.final.u, history.final.time, history.final.level)
        log.experiment_verbose(f"packet sup |u| = {history.sup_norm():.3e}", self)

    def expected_hits(self, xi: Covector) -> List[float]:
        """Curve parameters where the null geodesic of xi crosses the observer (within two cells)."""
        spec, grid, curve = self.spec, self.grid, self.curve
        ray = flow(spec, xi, 0.5 * (grid.t_end - xi.base.t) * float(np.max(spec.beta(curve.samples(33)[1]))) + 1.0, FORWARD, self.tolerances)
        r_samples, points = curve.samples(201)
        distances = np.array([distance_to_trajectory(spec, ray, point)[0] for point in points])
        k = int(np.argmin(distances))
        if distances[k] > 2 * float(np.max(grid.dx)):
            return []
        return [float(r_samples[k])]

    def observed(self, xi: Covector, h: float, freq: float, order: int, operator: WaveOperator):
        spec, grid, curve = self.spec, self.grid, self.curve
        settings = self.settings()
        source = make_packet(spec, grid, xi, h, freq, order)
        try:
            trace, _ = linear_trace(spec, grid, curve, source.samples, operator, label="packet")
        except DomainError as e:
            log.warn(f"{self.name}: the observer cannot be traced on this grid ({e})")
            return
        band = settings.band_for(freq)
        report = detect_trace_singularities(trace, band, self.tolerances.det, smoothing=settings.smoothing)
        self.write_trace(trace, band, settings.smoothing, report)

        expected = self.expected_hits(xi)
        r_mid = expected[0] if expected else 0.0
        tolerance = tolerance_in_r(curve, r_mid, settings.match * max(source.width, settings.a))
        _, false_positives, false_negatives = precision_recall(report.locations, expected, tolerance)
        self.check("trace detections", false_positives + false_negatives, 0.0,
                   detail=f"expected {[round(r, 4) for r in expected]}, found {[round(r, 4) for r in report.locations]}")

        if not expected:
            return
        try:
            doubled = make_packet(spec, grid, xi, h, 2 * freq, order)
        except ConfigurationError as e:
            self.check("frequency scaling", None, None, detail=f"not resolvable at {2 * freq}: {e}")
            return
        trace2, _ = linear_trace(spec, grid, curve, doubled.samples, operator, label="packet_2f")
        self.write_trace(trace2, settings.band_for(2 * freq), settings.smoothing)
        ratio = trace2.sup_norm() / max(trace.sup_norm(), 1e-300)
        self.check("frequency scaling", ratio, self.limit("frequency_scaling", 0.75), detail=f"order {order}")

    def closed_form(self, h: float, freq: float, order: int, operator: WaveOperator):
        spec, grid = self.spec, self.grid
        settings = self.settings()
        a = float(self.parameter("a", settings.a))
        limit = self.limit("reproduction", 1e-8)

        center = Point(self.parameter("bump_center", self._default_point(0.5)))
        self.check("bump value at the center", float(bump_profile(spec, center.coords[None, :], center.coords, a)[0]), 1e-15, expected=1.0)
        bump, chi = make_box_bump(spec, grid, center, a, h, operator)
        history = solve_linear(spec, grid, bump.samples, Recording(1, chi.box), operator)
        self.check("bump reproduced", _reproduction_error(history, chi, grid), limit, detail=f"a={a}")

        xtilde = Point(self.parameter("timeline_center", self._default_point(0.5)))
        term, u6 = make_timeline_source(spec, grid, xtilde, a, freq, order, h, operator)
        history = solve_linear(spec, grid, term.samples, Recording(1, u6.box), operator)
        self.check("time-line source reproduced", _reproduction_error(history, u6, grid), limit)
        kappa_inverse = np.linalg.inv(spec.kappa(xtilde.coords))
        self.check("time-line wavefront spacelike", spacelike_fraction(u6.values, grid.spacing, kappa_inverse),
                   self.limit("spacelike_fraction", 0.95), at_least=True)


class PacketPropagationDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "packet-propagation"

    @staticmethod
    def get_description() -> str:
        return "Wavefront, transport and observation of a single packet; closed-form bump and time-line solves"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return PacketPropagation(spec, config, output_dir, tolerances, seed, jobs)
