import numpy as np
from scipy.optimize import brentq

from experiments import experiment
from geometry.causal import CAUSAL_ONLY, CHRONOLOGICAL, NOT_CAUSAL, causal_relation, cut_function, time_separation
from geometry.covector import classify, cone_seeds, covector, hamiltonian_value, null_covector
from geometry.flow import BACKWARD, FORWARD, flow, flowout, write_trajectory
from geometry.metric import MetricSpec, Point, Tolerances, metric_at
from geometry.observer import decompose_nu, earliest_observation, observation_candidates
from metrics.minkowski import Minkowski
from util.log import log


def _unit(spec: MetricSpec, axis: int) -> np.ndarray:
    e = np.zeros(spec.d)
    e[axis] = 1.0
    return e


def _offset(base: Point, *delta: float) -> Point:
    shift = np.zeros(base.dimension)
    shift[:len(delta)] = delta
    return Point(base.coords + shift)


class GeometrySelftest(experiment.Experiment):
    """
    Closed-form and brute-force checks of the geometry engine: generic invariants on every preset,
    analytic formulas on Minkowski and its conformal rescaling, the antipodal cut on the sphere.
    """

    @property
    def name(self) -> str:
        return "geometry-selftest"

    @property
    def description(self) -> str:
        return f"Geometry self test on {self.spec.name}"

    def base_point(self) -> Point:
        center = 0.5 * (self.spec.lower + self.spec.upper)
        return Point(np.concatenate([[self.spec.lower[0] + 1.0], center[1:]]))

    def run(self):
        base = self.base_point()
        self.generic(base)
        checks = {
            "minkowski": self.minkowski,
            "conformal-minkowski": self.conformal,
            "ultrastatic-sphere": self.sphere,
            "bump-perturbed": self.perturbed,
        }
        if self.spec.name in checks:
            checks[self.spec.name](base)

    def generic(self, base: Point):
        spec, tol = self.spec, self.tolerances
        g, ginv, _ = metric_at(spec, base)
        self.check("metric inverse", float(np.max(np.abs(g @ ginv - np.eye(spec.n)))), 1e-12)

        xi = null_covector(spec, base, _unit(spec, spec.d - 1), True, tol)
        long = flow(spec, xi, 10.0, FORWARD, tol)
        write_trajectory(spec, long, self.path("trajectories", "forward.csv"))
        self.check("null residual", long.null_residual, tol.flow, detail=f"s up to {long.s_max:.4g}")

        s = min(2.0, 0.5 * long.s_max)
        out = flow(spec, xi, s, FORWARD, tol)
        back = flow(spec, out.covector_at(spec, out.s_max, tol), out.s_max, BACKWARD, tol)
        write_trajectory(spec, back, self.path("trajectories", "backward.csv"))
        error = float(spec.distance_G(back.end, base.coords)) + float(np.max(np.abs(back.Xi[-1] - xi.xi)))
        self.check("flow reversibility", error, self.limit("reversibility", 1e-9), detail=f"s={s:.4g}")

        q = _offset(base, 2.0, 0.5)
        forward_tau = time_separation(spec, base, q, seed=self.seed).value
        backward_tau = time_separation(spec, q, base, seed=self.seed).value
        self.check("time separation positive", forward_tau, tol.cut, at_least=True)
        self.check("time separation asymmetry", backward_tau, 0.0)

        rho = cut_function(spec, xi, tol).rho
        nearby = []
        for eps in (1e-2, 1e-3):
            eta = null_covector(spec, base, _unit(spec, spec.d - 1) + eps * _unit(spec, 0), True, tol)
            nearby.append(cut_function(spec, eta, tol).rho)
        self.check("cut function lower semicontinuity", rho - min(nearby), self.limit("semicontinuity", 1e-3) * max(1.0, rho),
                   detail=f"rho={rho:.6g}, nearby {[round(r, 6) for r in nearby]}")

        x = _offset(base, 0.0, *(0.5 * _unit(spec, spec.d - 1)))
        candidates = observation_candidates(spec, self.curve, x, tol)
        before_cut = [c for c in candidates if time_separation(spec, x, c.xhat, stop_above=tol.cut).value <= tol.cut]
        self.check("earliest observation uniqueness", len(before_cut), 0.0, expected=1,
                   detail=f"{len(candidates)} intersection(s), {len(before_cut)} before the cut")

    def minkowski(self, base: Point):
        spec, tol = self.spec, self.tolerances
        closed = self.limit("closed_form", 1e-6)
        b = base.coords
        d = spec.d

        g, ginv, volume = metric_at(spec, base)
        self.check("metric_at", g, 1e-15, expected=np.diag([-1.0] + [1.0] * d))
        self.check("hamiltonian null", hamiltonian_value(spec, covector(spec, base, [-1.0, 1.0] + [0.0] * (d - 1))), 1e-15, expected=0.0)
        self.check("hamiltonian timelike", hamiltonian_value(spec, covector(spec, base, [-1.0] + [0.0] * d)), 1e-15, expected=-1.0)

        xi = covector(spec, base, [-1.0, 1.0] + [0.0] * (d - 1), tol)
        line = flow(spec, xi, 1.0, FORWARD, tol)
        write_trajectory(spec, line, self.path("trajectories", "minkowski_line.csv"))
        self.check("flow end point", line.end, closed, expected=b + np.array([2.0, 2.0] + [0.0] * (d - 1)))
        self.check("flow covector", line.Xi[-1], closed, expected=xi.xi)

        seeds = cone_seeds(spec, xi, 0.5, 9, tol)
        cone = flowout(spec, seeds, FORWARD, 1.0, tol)
        mismatch = max(float(np.max(np.abs((c.X[:, 0] - b[0]) - np.linalg.norm(c.X[:, 1:] - b[1:], axis=-1)))) for c in cone)
        self.check("forward light cone", mismatch, closed, detail=f"{len(cone)} seeds")

        self.check("time separation timelike", time_separation(spec, base, _offset(base, 2.0, 1.0), seed=self.seed).value, closed,
                   expected=np.sqrt(3.0))
        self.check("time separation spacelike", time_separation(spec, base, _offset(base, 1.0, 2.0), seed=self.seed).value, closed,
                   expected=0.0)

        cut = cut_function(spec, xi, tol)
        self.check("cut function at chart exit", cut.rho, closed, expected=cut.s_limit, detail=f"cut found: {cut.cut_found}")
        if cut.cut_found:
            self.check("no null cut point", 1.0, 0.0, detail="a cut point was reported on Minkowski space")

        curve = self.curve
        x = _offset(base, 1.0, *(1.0 * _unit(spec, 0)))
        mu = lambda r: curve.mu(r)
        arrival = lambda r: mu(r)[0] - x.t - float(np.linalg.norm(mu(r)[1:] - x.spatial))
        if arrival(-1.0) < 0 < arrival(1.0):
            r_star = brentq(arrival, -1.0, 1.0, xtol=1e-14)
            expected = mu(r_star)
            observation = earliest_observation(spec, curve, x, tol)
            self.check("earliest observation point", observation.xhat.coords, closed, expected=expected)
            direction = (expected[1:] - x.spatial) / np.linalg.norm(expected[1:] - x.spatial)
            self.check("earliest observation covector", observation.xi_mu.xi, closed, expected=np.concatenate([[-1.0], direction]))
        else:
            log.warn(f"{self.name}: the observer does not see {x}, earliest observation not checked")

        expected = {(1.0, 0.0): CHRONOLOGICAL, (1.0, 1.0): CAUSAL_ONLY, (1.0, 2.0): NOT_CAUSAL}
        found = {key: causal_relation(spec, base, _offset(base, *key), tol) for key in expected}
        wrong = [f"{key}: {found[key]}" for key in expected if found[key] != expected[key]]
        self.check("causal relations", len(wrong), 0.0, detail="; ".join(wrong))

        c, rest = decompose_nu(spec, covector(spec, base, [-1.0, 1.0] + [0.0] * (d - 1)),
                               covector(spec, base, [-1.0, -1.0] + [0.0] * (d - 1)))
        self.check("decompose_nu", np.concatenate([[c], rest.xi]), 1e-12, expected=np.array([1.0, 0.0, -2.0] + [0.0] * (d - 1)))

        rng = np.random.default_rng(self.seed)
        worst = 0.0
        for _ in range(8):
            xi_r = null_covector(spec, base, rng.normal(size=d), True, tol)
            xi_mu = null_covector(spec, base, rng.normal(size=d), True, tol)
            c, rest = decompose_nu(spec, xi_r, xi_mu)
            worst = max(worst, float(np.linalg.norm(xi_mu.xi - c * xi_r.xi - rest.xi)))
        self.check("decompose_nu residual", worst, 1e-12)

    def conformal(self, base: Point):
        spec, tol = self.spec, self.tolerances
        closed = self.limit("closed_form", 1e-6)
        factor = float(spec.factor)
        d = spec.d

        g, ginv, _ = metric_at(spec, base)
        self.check("metric_at", g, 1e-12, expected=factor * np.diag([-1.0] + [1.0] * d))
        self.check("metric_at inverse", ginv, 1e-12, expected=np.diag([-1.0] + [1.0] * d) / factor)
        self.check("hamiltonian null", hamiltonian_value(spec, covector(spec, base, [-1.0, 1.0] + [0.0] * (d - 1))), 1e-15, expected=0.0)

        rng = np.random.default_rng(self.seed)
        mismatches = 0
        for _ in range(64):
            xi = np.concatenate([[rng.normal()], rng.normal(size=d)])
            if rng.uniform() < 0.3:
                xi[0] = -np.linalg.norm(xi[1:])
            reference = classify(spec, base, xi, tol)[:2]
            for scale in (0.5, 2.0, 10.0):
                mismatches += classify(spec.scaled(scale), base, xi, tol)[:2] != reference
        self.check("conformal cone invariance", mismatches, 0.0)

        flat = Minkowski(d, spec.lower, spec.upper)
        xi_c = null_covector(spec, base, _unit(spec, 0), True, tol)
        xi_f = null_covector(flat, base, _unit(spec, 0), True, tol)
        scaled_end = flow(spec, xi_c, factor * 1.0, FORWARD, tol).end
        flat_end = flow(flat, xi_f, 1.0, FORWARD, tol).end
        self.check("conformal reparametrization", scaled_end, closed, expected=flat_end)

        rho_c = cut_function(spec, xi_c, tol).rho
        rho_f = cut_function(flat, xi_f, tol).rho
        self.check("cut function reparametrization", rho_c, closed * max(1.0, factor), expected=factor * rho_f)

    def sphere(self, base: Point):
        spec, tol = self.spec, self.tolerances
        radius = float(spec.radius)
        limit = self.limit("cut", 1e-3)
        p = Point([base.t, 0.5 * np.pi, 0.0])

        g, _, _ = metric_at(spec, p)
        self.check("metric_at", g[1:, 1:], 1e-12, expected=radius ** 2 * np.diag([1.0, 1.0]))

        xi = null_covector(spec, p, [0.0, 1.0], True, tol)
        # unit kappa-dual spatial part: arc length grows at rate 2
        half = flow(spec, xi, 0.5 * np.pi * radius, FORWARD, tol)
        write_trajectory(spec, half, self.path("trajectories", "equator.csv"))
        antipode = np.array([p.t + np.pi * radius, 0.5 * np.pi, np.pi])
        self.check("great circle antipode", float(spec.distance_G(half.end, antipode)), self.limit("closed_form", 1e-6))

        cut = cut_function(spec, xi, tol)
        geodesic = flow(spec, xi, min(cut.s_limit, 2.0 * np.pi * radius), FORWARD, tol)
        arrival = float(geodesic.point(spec, cut.rho)[0] - p.t)
        self.check("cut at the antipode", arrival, limit, expected=np.pi * radius, detail=f"rho={cut.rho:.6g}")

        samples = int(self.parameter("brute_force_samples", 96))
        grid = np.linspace(0.0, 0.75 * np.pi * radius, samples + 1)[1:]
        first = None
        for s in grid:
            y = Point(geodesic.point(spec, s))
            if time_separation(spec, p, y, starts=3, stop_above=tol.cut).value > tol.cut:
                first = float(s)
                break
        if first is None:
            self.check("cut against brute force", 1.0, 0.0, detail="the dense scan found no cut point")
        else:
            step = float(grid[1] - grid[0])
            self.check("cut against brute force", cut.rho, step, expected=first, detail=f"scan step {step:.3g}")

        stay = time_separation(spec, p, Point([p.t + 2 * np.pi * radius, 0.5 * np.pi, 0.0]), seed=self.seed).value
        self.check("time separation at rest", stay, self.limit("closed_form", 1e-6), expected=2 * np.pi * radius)

    def perturbed(self, base: Point):
        spec, tol = self.spec, self.tolerances
        flat = Minkowski(spec.d, spec.lower, spec.upper)
        x = _offset(base, 1.0, *(1.0 * _unit(spec, 0)))
        bumped = earliest_observation(spec, self.curve, x, tol)
        reference = earliest_observation(flat, self.curve, x, tol)
        # kappa is flat, so null geodesics are those of Minkowski space up to parametrization
        self.check("earliest observation under the bump", bumped.xhat.coords, self.limit("perturbation", 1e-6),
                   expected=reference.xhat.coords)


class GeometrySelftestDescription(experiment.ExperimentDescription):
    @staticmethod
    def get_name() -> str:
        return "geometry-selftest"

    @staticmethod
    def get_description() -> str:
        return "Closed-form and brute-force checks of flows, time separation, cut function and earliest observation"

    @staticmethod
    def instantiate(spec: MetricSpec, config: dict, output_dir: str, tolerances: Tolerances, seed: int = 0, jobs=1) -> experiment.Experiment:
        return GeometrySelftest(spec, config, output_dir, tolerances, seed, jobs)
