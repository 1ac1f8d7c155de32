from typing import Dict, List, Sequence

import numpy as np
from scipy import fft

from detector.desirable import SEVEN, candidate_points
from detector.pipeline import curve_recording, tolerance_in_r
from detector.singularity import band_energy
from experiments import experiment
from geometry.covector import Covector, null_covector
from geometry.metric import MetricSpec, Point, Tolerances
from geometry.observer import earliest_observation
from scattering.generator import generate_quadruples, quadruple_from_dict, witness_quadruple
from solver.cascade import U_SINGULAR, V_SINGULAR, CascadePlan, amplitude_eps, epsilon_stencil, solve_cascade
from solver.forcing import SampledSource
from solver.wave import Recording, WaveOperator
from sources.source import make_box_bump, make_packet, make_timeline_source
from sources.spectral import frequencies
from util.log import log

THREE = (1, 2, 3)
DISJOINT = (0, 4, 5)


def _relative_l2(value: np.ndarray, reference: np.ndarray) -> float:
    size = float(np.linalg.norm(reference))
    return float(np.linalg.norm(value - reference)) / size if size > 0 else float(np.linalg.norm(value))


def band_power(values: np.ndarray, spacing: Sequence[float], band) -> float:
    """Spectral energy of a space-time array on frequencies |k| / 2 pi within the band."""
    k = frequencies(values.shape, spacing)
    norm = np.sqrt(sum(component ** 2 for component in k)) / (2 * np.pi)
    power = np.abs(fft.fftn(values)) ** 2
    return float(np.sum(power[(norm >= band[0]) & (norm <= band[1])]))


class LinearizationCrosscheck(experiment.Experiment):
    """
    u_123 from the eps-stencil against the direct cascade, vanishing of u_jk and of u_045 for
    disjoint supports, and the regular/singular splits of u_0123456 and u_01234.
    """

    @property
    def name(self) -> str:
        return "linearization-crosscheck"

    @property
    def description(self) -> str:
        return f"Multi-fold linearization on {self.spec.name}"

    def plans(self) -> List[CascadePlan]:
        plans = [CascadePlan.build(THREE), CascadePlan.build(DISJOINT), CascadePlan.build(SEVEN, label="u"),
                 CascadePlan.build(SEVEN[:5], label="v")]
        plans.extend(CascadePlan.build(SEVEN, label="u").split(U_SINGULAR))
        plans.extend(CascadePlan.build(SEVEN[:5], label="v").split(V_SINGULAR))
        return plans

    def run(self):
        settings = self.settings()
        self.operator = WaveOperator(self.spec, self.grid)
        self.three_packets(settings)
        if self.parameter("splits", True):
            self.splits(settings)

    def meeting_point(self) -> Point:
        grid = self.grid
        default = [grid.t_start + 0.55 * (grid.t_end - grid.t_start)] + (0.5 * (grid.lower + grid.upper)).tolist()
        return Point(self.parameter("meet", default))

    def converging(self, y: Point) -> List[Covector]:
        """Three packets whose forward rays meet at y, arriving from directions 120 degrees apart."""
        spec = self.spec
        angles = 2 * np.pi * np.arange(3) / 3 + float(self.parameter("rotation", 0.3))
        directions = [np.concatenate([[np.cos(a), np.sin(a)], np.zeros(spec.d - 2)]) for a in angles]
        etas = [null_covector(spec, y, direction, True, self.tolerances) for direction in directions]
        travel = float(self.parameter("travel", 1.0))
        witness = witness_quadruple(spec, y, etas[0], etas, [travel] * 4, tolerances=self.tolerances)
        return witness.quad[1:]

    def three_packets(self, settings):
        spec, grid = self.spec, self.grid
        y = self.meeting_point()
        packets = {j: make_packet(spec, grid, xi, settings.h, settings.freq, settings.order) for j, xi in zip(THREE, self.converging(y))}
        sources: Dict[int, SampledSource] = {j: term.samples for j, term in packets.items()}

        cascade = solve_cascade(spec, grid, sources, CascadePlan.build(THREE), operator=self.operator)
        eps = amplitude_eps(spec, grid, sources, THREE, settings.eps_scale)
        richardson = bool(self.parameter("richardson", True))
        stencil = epsilon_stencil(spec, grid, sources, THREE, eps, jobs=settings.jobs, halving=richardson, richardson=richardson)
        top = cascade.top
        self.check("stencil against cascade", _relative_l2(stencil.final, top), self.limit("stencil_cascade", 0.05),
                   detail=f"eps {stencil.eps}, halving noise {stencil.noise}")

        size = float(np.linalg.norm(top))
        worst = 0.0
        for pair in ((1, 2), (1, 3), (2, 3)):
            run = epsilon_stencil(spec, grid, sources, pair, eps, jobs=settings.jobs)
            worst = max(worst, float(np.linalg.norm(run.final)))
        self.check("two-fold interactions vanish", worst, self.limit("even_order", 1e-3) * size, detail=f"|u_123| = {size:.3e}")

        a = float(self.parameter("a", settings.a))
        centers = self.parameter("disjoint_centers", None)
        if centers is None:
            later = y.coords.copy()
            later[0] += 0.5 * float(self.parameter("travel", 1.0))
            shift = np.zeros(spec.n)
            shift[1] = 3 * a
            centers = [later - shift, later + shift]
        bump0, _ = make_box_bump(spec, grid, Point(centers[0]), a, settings.h, self.operator)
        bump5, _ = make_box_bump(spec, grid, Point(centers[1]), a, settings.h, self.operator)
        disjoint = solve_cascade(spec, grid, {0: bump0.samples, 4: bump0.samples, 5: bump5.samples}, CascadePlan.build(DISJOINT),
                                 operator=self.operator)
        self.check("disjoint supports", disjoint.histories[DISJOINT].sup_norm(), 0.0, detail=f"{disjoint.skipped_terms} terms skipped")

    def quadruple(self, settings) -> List[Covector]:
        spec = self.spec
        entries = self.parameter("quadruple", None)
        if entries is not None:
            return quadruple_from_dict(spec, entries, self.tolerances)
        region, inside = self.quadruple_region(2 * settings.h)
        generated = generate_quadruples(spec, 1, region, self.seed, travel=(0.5, 1.0), inside=inside, tolerances=self.tolerances)
        return generated[0].quad

    def splits(self, settings):
        spec, grid, curve = self.spec, self.grid, self.curve
        quad = self.quadruple(settings)
        offset = float(self.parameter("offset", 0.6))
        xtilde = candidate_points(spec, quad[0], [offset], self.tolerances)[0]
        observation = earliest_observation(spec, curve, xtilde, self.tolerances)
        a = float(self.parameter("a", settings.a))

        packets = {j: make_packet(spec, grid, quad[j], settings.h, settings.freq, settings.order) for j in THREE}
        bump0, _ = make_box_bump(spec, grid, quad[0].base, a, settings.h, self.operator)
        bump5, _ = make_box_bump(spec, grid, xtilde, a, settings.h, self.operator)
        timeline, _ = make_timeline_source(spec, grid, xtilde, a, settings.freq, settings.order, settings.h, self.operator)
        sources = {**{j: term.samples for j, term in packets.items()}, 0: bump0.samples, 4: bump0.samples, 5: bump5.samples,
                   6: timeline.samples}

        band = settings.band_for(settings.freq)
        width = max(packet.width for packet in packets.values())
        tolerance = tolerance_in_r(curve, observation.r, settings.match * max(a, width) + 2 * grid.dt)
        energies = {}
        for plan in CascadePlan.build(SEVEN, label="u").split(U_SINGULAR):
            result = solve_cascade(spec, grid, sources, plan, curve_recording(grid, curve), curve=curve, operator=self.operator)
            trace = result.traces[plan.indices]
            trace.label = plan.label
            energy = band_energy(trace, band, settings.smoothing)
            window = np.abs(trace.r - observation.r) <= tolerance
            energies[plan.label] = float(np.max(energy[window])) if np.any(window) else 0.0
            self.write_trace(trace, band, settings.smoothing)
        self.check("u_reg against u_sing at the observation", self._ratio(energies["u_reg"], energies["u_sing"]),
                   self.limit("regular_ratio", 0.05), detail=f"r = {observation.r:.4f}")

        window = Recording.around(grid, np.array([xtilde.coords - a, xtilde.coords + a]), margin=2)
        first, last = grid.level(xtilde.t - a), grid.level(xtilde.t + a)
        powers = {}
        for plan in CascadePlan.build(SEVEN[:5], label="v").split(V_SINGULAR):
            result = solve_cascade(spec, grid, sources, plan, window, operator=self.operator)
            history = result.histories[plan.indices]
            powers[plan.label] = band_power(history.data[first:last + 1], grid.spacing, band)
        self.check("v_reg against v_sing near x~", self._ratio(powers["v_reg"], powers["v_sing"]), self.limit("regular_ratio", 0.05))

    def _ratio(self, regular: float, singular: float) -> float:
        if singular <= 0.0:
            log.warn(f"{self.name}: the singular part carries no band energy")
            return float("inf")
        return regular / singular


class LinearizationCrosscheckDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "linearization-crosscheck"

    @staticmethod
    def get_description() -> str:
        return "eps-stencil against the direct cascade and the regular/singular energy splits"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return LinearizationCrosscheck(spec, config, output_dir, tolerances, seed, jobs)
