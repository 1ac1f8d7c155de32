from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from geometry.covector import Covector, covector, normalize, null_covector, spatial_direction
from geometry.flow import BACKWARD, FORWARD, flow
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Point, Tolerances
from scattering.span import span_check
from util.errors import DomainError, InfeasibleError, IntegrationError, PreconditionError
from util.log import log

R2 = "r2"
R1_FALSE = "r1-false"
SPAN_FALSE = "span-false"
KINDS = (R2, R1_FALSE, SPAN_FALSE)


@dataclass
class GeneratedQuadruple:
    """A quadruple built around a known meeting point y, with the travel parameters used."""
    quad: List[Covector]
    kind: str
    witness: List[float]
    sigmas: List[float]
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"quad": [xi.to_dict() for xi in self.quad], "kind": self.kind, "witness": self.witness, "sigmas": self.sigmas,
                "flags": self.flags}


def quadruple_from_dict(spec: MetricSpec, entries: Sequence[dict], tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[Covector]:
    """Covectors from their JSON form ({"base": [...], "xi": [...]})."""
    return [covector(spec, Point(entry["base"]), entry["xi"], tolerances) for entry in entries]


def _pairing(spec: MetricSpec, y: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ spec.contravariant(y) @ b)


def span_null_covector(spec: MetricSpec, y: Point, etas: Sequence[Covector], mix: float, tolerances: Tolerances = DEFAULT_TOLERANCES) -> Covector:
    """
    A future lightlike covector eta_1 + b eta_2 + c eta_3 at y with c = mix: the cone equation is
    linear in b because each eta_j is lightlike.
    """
    e1, e2, e3 = (eta.xi for eta in etas)
    denominator = _pairing(spec, y.coords, e1, e2) + mix * _pairing(spec, y.coords, e2, e3)
    if abs(denominator) < 1e-12:
        raise InfeasibleError("no lightlike covector with this mix in span(eta_1, eta_2, eta_3)")
    b = -mix * _pairing(spec, y.coords, e1, e3) / denominator
    xi = e1 + b * e2 + mix * e3
    if xi[0] > 0:
        xi = -xi
    return normalize(spec, covector(spec, y, xi, tolerances), tolerances)


def _travel(spec: MetricSpec, eta: Covector, dt: float, direction: int, tolerances: Tolerances) -> Tuple[Covector, float]:
    """Flows eta from y until the chart time changed by dt; returns the normalized covector there and the parameter."""
    beta = float(spec.beta(eta.x))
    s = 0.5 * dt * beta
    curve = flow(spec, eta, s, direction, tolerances, samples_per_unit=64)
    if curve.exited:
        raise DomainError(f"the ray of {eta} leaves the chart within dt={dt}")
    return normalize(spec, curve.covector_at(spec, curve.s_max, tolerances), tolerances), curve.s_max


def witness_quadruple(spec: MetricSpec, y: Point, eta0: Covector, etas: Sequence[Covector], travel: Sequence[float],
                      kind: str = R2, tolerances: Tolerances = DEFAULT_TOLERANCES) -> GeneratedQuadruple:
    """
    Flows eta_1, eta_2, eta_3 backwards and eta_0 forwards from y by the chart-time offsets in
    `travel` (order 0, 1, 2, 3). The resulting xi_1, xi_2, xi_3 have forward rays through y and
    xi_0 has its past ray through y.
    """
    xi0, s0 = _travel(spec, eta0, travel[0], FORWARD, tolerances)
    rest = [_travel(spec, eta, dt, BACKWARD, tolerances) for eta, dt in zip(etas, travel[1:])]
    return GeneratedQuadruple([xi0] + [xi for xi, _ in rest], kind, y.to_list(), [s0] + [s for _, s in rest])


def shifted(spec: MetricSpec, quad: Sequence[Covector], index: int, offset: Sequence[float],
            tolerances: Tolerances = DEFAULT_TOLERANCES) -> List[Covector]:
    """The quadruple with xi_index moved by a spatial offset, keeping its spatial direction."""
    xi = quad[index]
    base = Point(xi.x + np.concatenate([[0.0], np.asarray(offset, dtype=float)]))
    spec.require_inside(base, "shifted base point")
    moved = null_covector(spec, base, spatial_direction(xi), xi.future, tolerances)
    return [moved if j == index else q for j, q in enumerate(quad)]


def _random_direction(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def _spread(directions: Sequence[np.ndarray], minimum: float) -> bool:
    for i in range(len(directions)):
        for j in range(i + 1, len(directions)):
            if np.arccos(np.clip(directions[i] @ directions[j], -1, 1)) < minimum:
                return False
    return True


def generate_quadruples(spec: MetricSpec, count: int, region: Tuple[Sequence[float], Sequence[float]], seed: int = 0, kind: str = R2,
                        travel: Tuple[float, float] = (0.5, 1.0), offset: float = 1.0, min_angle: float = 0.5,
                        inside: Optional[Callable[[Point], bool]] = None, tolerances: Tolerances = DEFAULT_TOLERANCES, attempts: int = 50) -> List[GeneratedQuadruple]:
    """
    Quadruples from witnesses: y uniform in `region` (space-time box), three well separated null
    directions eta_1, eta_2, eta_3 at y and eta_0, then rays flowed away from y by chart times in
    `travel`.

    kind:
        r2: eta_0 is a lightlike combination of eta_1, eta_2, eta_3 (always true in 1+2).
        r1-false: as r2, then x_0 is moved spatially by `offset` so the past ray of xi_0 misses y.
        span-false: (1+3) eta_0 is a lightlike covector outside span(eta_1, eta_2, eta_3).

    Args:
        inside: Optional predicate on base points (e.g. grid interior); rejected draws are retried.

    Raises:
        InfeasibleError: If `attempts` draws in a row fail.
    """
    if kind not in KINDS:
        raise PreconditionError(f"unknown quadruple kind '{kind}'")
    if kind == SPAN_FALSE and spec.d != 3:
        raise PreconditionError("span-false quadruples need 1+3 dimensions")
    rng = np.random.default_rng(seed)
    low, high = np.asarray(region[0], dtype=float), np.asarray(region[1], dtype=float)

    generated: List[GeneratedQuadruple] = []
    failures = 0
    while len(generated) < count:
        if failures >= attempts:
            raise InfeasibleError(f"could not place quadruple {len(generated)} after {attempts} draws", kind=kind)
        y = Point(rng.uniform(low, high))
        directions = [_random_direction(rng, spec.d) for _ in range(3)]
        if not _spread(directions, min_angle):
            failures += 1
            continue
        try:
            etas = [null_covector(spec, y, direction, True, tolerances) for direction in directions]
            if kind == SPAN_FALSE:
                eta0 = null_covector(spec, y, _random_direction(rng, spec.d), True, tolerances)
                if span_check([eta0] + etas, tolerances).residual < 1e-3:
                    failures += 1
                    continue
            elif spec.d == 2:
                eta0 = null_covector(spec, y, _random_direction(rng, spec.d), True, tolerances)
            else:
                eta0 = span_null_covector(spec, y, etas, float(rng.uniform(0.3, 1.5)), tolerances)
            if not _spread([spatial_direction(eta0)] + directions, min_angle):
                failures += 1
                continue

            result = witness_quadruple(spec, y, eta0, etas, rng.uniform(*travel, size=4), kind, tolerances)
            if kind == R1_FALSE:
                shift = _random_direction(rng, spec.d) * offset
                result.quad = shifted(spec, result.quad, 0, shift, tolerances)
                result.flags.append(f"x_0 moved by {np.round(shift, 6).tolist()}")
            if inside is not None and not all(inside(xi.base) for xi in result.quad):
                failures += 1
                continue
        except (DomainError, InfeasibleError, IntegrationError) as e:
            log.scattering_verbose(f"quadruple draw rejected: {e}")
            failures += 1
            continue
        failures = 0
        generated.append(result)
    log.scattering_verbose(f"generated {len(generated)} {kind} quadruple(s)")
    return generated
