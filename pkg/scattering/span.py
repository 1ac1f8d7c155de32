from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from geometry.covector import Covector
from geometry.metric import DEFAULT_TOLERANCES, MetricSpec, Tolerances
from util.errors import InternalError, PreconditionError
from util.log import log

DEGENERATE = 1e-12


@dataclass
class SpanResult:
    """
    eta_0 in span(eta_1, eta_2, eta_3): the least-squares coefficients, the residual relative to
    |eta_0| and the condition number of the basis. `holds` is None for a degenerate basis.
    """
    holds: Optional[bool]
    coefficients: np.ndarray
    residual: float
    condition: float
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"holds": self.holds, "coefficients": [float(c) for c in self.coefficients], "residual": self.residual,
                "condition": self.condition, "flags": self.flags}


def _components(eta) -> np.ndarray:
    return np.asarray(eta.xi if isinstance(eta, Covector) else eta, dtype=float)


def span_check(etas: Sequence, tolerances: Tolerances = DEFAULT_TOLERANCES, spec: Optional[MetricSpec] = None) -> SpanResult:
    """
    Tests eta_0 in span(eta_1, eta_2, eta_3) for four covectors at one point (Covectors or component arrays).

    The residual threshold is tau_span for a well conditioned basis and grows with its condition
    number. In 1+2 dimensions three independent covectors span the cotangent space, so the test
    always holds there.

    Raises:
        PreconditionError: If fewer than four covectors are given, or Covectors sit over points
            farther apart than tau_meet (checked when `spec` is given).
    """
    if len(etas) != 4:
        raise PreconditionError(f"span_check takes four covectors, got {len(etas)}")
    if spec is not None and all(isinstance(eta, Covector) for eta in etas):
        bases = np.array([eta.x for eta in etas])
        spread = float(np.max(spec.distance_G(bases[:, None, :], bases[None, :, :])))
        if spread > tolerances.meet:
            raise PreconditionError(f"covectors are not over a common point (spread {spread:.3e})")

    target = _components(etas[0])
    basis = np.stack([_components(eta) for eta in etas[1:]], axis=1)
    coefficients, *_ = np.linalg.lstsq(basis, target, rcond=None)
    residual = float(np.linalg.norm(basis @ coefficients - target) / max(np.linalg.norm(target), 1e-300))
    singular = np.linalg.svd(basis, compute_uv=False)
    if singular[-1] <= DEGENERATE * singular[0]:
        log.warn_verbose("span check on a rank-deficient basis")
        return SpanResult(None, coefficients, residual, float("inf"), ["degenerate basis: eta_1, eta_2, eta_3 are dependent"])
    condition = float(singular[0] / singular[-1])
    return SpanResult(residual <= tolerances.span * max(1.0, condition), coefficients, residual, condition)


@dataclass
class SpanAdjustment:
    """A lightlike xi~_1 near xi_1 with xi~_0 in span(xi~_1, xi_2, xi_3), found along xi_1 + theta * xi_axis."""
    xi1: np.ndarray
    theta: float
    axis: int
    residual: float
    iterations: int


def _lightlike_residual(g_inverse: np.ndarray, xi: np.ndarray) -> float:
    return float(xi @ g_inverse @ xi / (xi @ xi))


def lightcone_span_adjust(g: np.ndarray, xi0_tilde, xi1, xi2, xi3, tolerance: float = 1e-10, max_iterations: int = 20) -> SpanAdjustment:
    """
    Given lightlike xi_1, xi_2, xi_3 and a perturbation xi~_0 of some xi_0 in their span, with
    a_1 xi_1 + a_2 xi_2 + a_3 xi_3 the least-squares projection of xi~_0 (a_1 != 0), moves xi_1 within
    span(xi~_0, xi_2, xi_3) back onto the light cone of `g` (covariant matrix at the base point):

        xi~_1(theta) = (xi~_0 - a_2 xi_2 - a_3 xi_3) / a_1 + theta * xi_e,  e in {2, 3},

    with theta solving g^{-1}(xi~_1, xi~_1) = 0 by Newton iteration. The axis e is the one whose
    pairing with xi_1 is larger; both vanish only for proportional covectors.

    Raises:
        PreconditionError: If xi~_0 lies in span(xi_2, xi_3) or some xi_j is not lightlike.
        InternalError: If neither axis completes the basis.
    """
    g_inverse = np.linalg.inv(np.asarray(g, dtype=float))
    xi0_tilde, xi1, xi2, xi3 = (_components(x) for x in (xi0_tilde, xi1, xi2, xi3))
    for j, xi in ((1, xi1), (2, xi2), (3, xi3)):
        if abs(_lightlike_residual(g_inverse, xi)) > tolerance:
            raise PreconditionError(f"xi_{j} is not lightlike (residual {_lightlike_residual(g_inverse, xi):.3e})")

    basis = np.stack([xi1, xi2, xi3], axis=1)
    a, *_ = np.linalg.lstsq(basis, xi0_tilde, rcond=None)
    planar, *_ = np.linalg.lstsq(basis[:, 1:], xi0_tilde, rcond=None)
    if np.linalg.norm(basis[:, 1:] @ planar - xi0_tilde) <= tolerance * np.linalg.norm(xi0_tilde):
        raise PreconditionError("xi_0 lies in span(xi_2, xi_3)")
    if abs(a[0]) <= tolerance:
        raise PreconditionError("xi_0 has no xi_1 component")

    start = (xi0_tilde - a[1] * xi2 - a[2] * xi3) / a[0]
    pairings = [abs(float(xi1 @ g_inverse @ xi_e)) for xi_e in (xi2, xi3)]
    if max(pairings) <= DEGENERATE * np.linalg.norm(xi1) * max(np.linalg.norm(xi2), np.linalg.norm(xi3)):
        raise InternalError("both candidate axes are null-orthogonal to xi_1", xi1=xi1.tolist(), xi2=xi2.tolist(), xi3=xi3.tolist())
    axis = 2 if pairings[0] >= pairings[1] else 3
    direction = xi2 if axis == 2 else xi3

    theta = 0.0
    for iteration in range(1, max_iterations + 1):
        candidate = start + theta * direction
        value = float(candidate @ g_inverse @ candidate)
        slope = 2.0 * float(candidate @ g_inverse @ direction)
        if abs(value) <= 1e-15 * float(candidate @ candidate):
            break
        if slope == 0.0:
            raise InternalError("Newton iteration stalled on a flat cone direction", theta=theta)
        # the cone equation is linear in theta for a lightlike axis
        theta -= value / slope
    xi1_tilde = start + theta * direction
    return SpanAdjustment(xi1_tilde, float(theta), axis, abs(_lightlike_residual(g_inverse, xi1_tilde)), iteration)
