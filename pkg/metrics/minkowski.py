import numpy as np

from geometry.metric import MetricSpec
from metrics import preset


class Minkowski(MetricSpec):
    """beta = 1, kappa = identity."""

    @property
    def name(self) -> str:
        return "minkowski"

    @property
    def static(self) -> bool:
        return True

    @property
    def diagonal(self) -> bool:
        return True

    def beta(self, X):
        return np.ones(np.shape(X)[:-1])

    def kappa(self, X):
        return np.broadcast_to(np.eye(self.d), np.shape(X)[:-1] + (self.d, self.d)).copy()

    def dbeta(self, X):
        return np.zeros(np.shape(X))

    def dkappa(self, X):
        return np.zeros(np.shape(X)[:-1] + (self.n, self.d, self.d))


class MinkowskiDescription(preset.PresetDescription):
    @staticmethod
    def get_name() -> str:
        return "minkowski"

    @staticmethod
    def get_description() -> str:
        return "Flat Minkowski space"

    @staticmethod
    def instantiate(dimension: int, lower, upper, parameter: dict, aux_weights=None) -> MetricSpec:
        return Minkowski(dimension, lower, upper, aux_weights=aux_weights, params=parameter)
