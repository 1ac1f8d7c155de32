import numpy as np

from geometry.metric import MetricSpec
from metrics import preset
from util.errors import ConfigurationError


class BumpPerturbed(MetricSpec):
    """
    beta = 1 + A exp(-|X - c|^2 / (2 w^2)), kappa = identity. The bump is centered in space-time,
    or in space only for the static variant.
    """

    def __init__(self, dimension, lower, upper, amplitude: float, width: float, center, static: bool = False,
                 aux_weights=None, params=None):
        super().__init__(dimension, lower, upper, aux_weights=aux_weights, params=params)
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.center = np.asarray(center, dtype=float)
        self._static = static
        self._axes = slice(1, None) if static else slice(0, None)

    @property
    def name(self) -> str:
        return "bump-perturbed"

    @property
    def static(self) -> bool:
        return self._static

    @property
    def diagonal(self) -> bool:
        return True

    def _bump(self, X):
        delta = np.asarray(X, dtype=float)[..., self._axes] - self.center
        return self.amplitude * np.exp(-np.sum(delta * delta, axis=-1) / (2 * self.width ** 2)), delta

    def beta(self, X):
        return 1.0 + self._bump(X)[0]

    def kappa(self, X):
        return np.broadcast_to(np.eye(self.d), np.shape(X)[:-1] + (self.d, self.d)).copy()

    def dbeta(self, X):
        bump, delta = self._bump(X)
        out = np.zeros(np.shape(X))
        out[..., self._axes] = -bump[..., None] * delta / self.width ** 2
        return out

    def dkappa(self, X):
        return np.zeros(np.shape(X)[:-1] + (self.n, self.d, self.d))


class BumpPerturbedDescription(preset.PresetDescription):
    @staticmethod
    def get_name() -> str:
        return "bump-perturbed"

    @staticmethod
    def get_description() -> str:
        return "Minkowski space with a smooth Gaussian bump in the conformal factor"

    @staticmethod
    def instantiate(dimension: int, lower, upper, parameter: dict, aux_weights=None) -> MetricSpec:
        static = bool(parameter.get("static", False))
        amplitude = float(parameter.get("amplitude", 0.1))
        width = float(parameter.get("width", 0.5))
        center = parameter.get("center", [0.0] * (dimension if static else dimension + 1))
        if len(center) != (dimension if static else dimension + 1):
            raise ConfigurationError(f"bump center needs {dimension if static else dimension + 1} coordinates")
        if amplitude <= -1 or width <= 0:
            raise ConfigurationError(f"invalid bump (amplitude {amplitude}, width {width}): beta must stay positive")
        return BumpPerturbed(dimension, lower, upper, amplitude, width, center, static, aux_weights=aux_weights,
                             params=dict(parameter, amplitude=amplitude, width=width, center=list(center), static=static))
