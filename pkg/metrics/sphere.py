import numpy as np

from geometry.metric import MetricSpec
from metrics import preset
from util.errors import ConfigurationError


class UltrastaticSphere(MetricSpec):
    """
    R x S^2 with beta = 1 and the round metric of radius R in polar coordinates (t, theta, phi):
    kappa = R^2 diag(1, sin^2 theta). The longitude phi is periodic; theta stays away from the poles.
    """

    def __init__(self, lower, upper, radius: float = 1.0, aux_weights=None, params=None):
        super().__init__(2, lower, upper, periodic={2: 2 * np.pi}, aux_weights=aux_weights, params=params)
        self.radius = float(radius)

    @property
    def name(self) -> str:
        return "ultrastatic-sphere"

    @property
    def static(self) -> bool:
        return True

    @property
    def diagonal(self) -> bool:
        return True

    def beta(self, X):
        return np.ones(np.shape(X)[:-1])

    def kappa(self, X):
        X = np.asarray(X, dtype=float)
        k = np.zeros(X.shape[:-1] + (2, 2))
        k[..., 0, 0] = self.radius ** 2
        k[..., 1, 1] = (self.radius * np.sin(X[..., 1])) ** 2
        return k

    def dbeta(self, X):
        return np.zeros(np.shape(X))

    def dkappa(self, X):
        X = np.asarray(X, dtype=float)
        dk = np.zeros(X.shape[:-1] + (3, 2, 2))
        dk[..., 1, 1, 1] = self.radius ** 2 * np.sin(2 * X[..., 1])
        return dk


class UltrastaticSphereDescription(preset.PresetDescription):
    @staticmethod
    def get_name() -> str:
        return "ultrastatic-sphere"

    @staticmethod
    def get_description() -> str:
        return "Product of time with the round two-sphere"

    @staticmethod
    def default_chart(dimension: int) -> dict:
        return {"lower": [-1.0, 0.1, -np.pi], "upper": [12.0, np.pi - 0.1, np.pi]}

    @staticmethod
    def instantiate(dimension: int, lower, upper, parameter: dict, aux_weights=None) -> MetricSpec:
        if dimension != 2:
            raise ConfigurationError("the ultrastatic sphere preset is two-dimensional in space")
        radius = float(parameter.get("radius", 1.0))
        if radius <= 0:
            raise ConfigurationError(f"sphere radius must be positive, got {radius}")
        if lower[1] <= 0 or upper[1] >= np.pi:
            raise ConfigurationError("the polar chart must exclude the poles (0 < theta < pi)")
        return UltrastaticSphere(lower, upper, radius, aux_weights=aux_weights, params=dict(parameter, radius=radius))
