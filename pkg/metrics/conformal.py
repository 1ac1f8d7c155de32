import numpy as np

from geometry.metric import MetricSpec
from metrics import preset
from metrics.minkowski import Minkowski
from util.errors import ConfigurationError


class ConformalMinkowski(Minkowski):
    """beta = lambda (a positive constant), kappa = identity."""

    def __init__(self, *args, factor: float = 2.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.factor = float(factor)

    @property
    def name(self) -> str:
        return "conformal-minkowski"

    def beta(self, X):
        return np.full(np.shape(X)[:-1], self.factor)


class ConformalMinkowskiDescription(preset.PresetDescription):
    @staticmethod
    def get_name() -> str:
        return "conformal-minkowski"

    @staticmethod
    def get_description() -> str:
        return "Minkowski space scaled by a constant conformal factor"

    @staticmethod
    def instantiate(dimension: int, lower, upper, parameter: dict, aux_weights=None) -> MetricSpec:
        factor = float(parameter.get("factor", 2.0))
        if factor <= 0:
            raise ConfigurationError(f"conformal factor must be positive, got {factor}")
        return ConformalMinkowski(dimension, lower, upper, aux_weights=aux_weights, params=dict(parameter, factor=factor), factor=factor)
