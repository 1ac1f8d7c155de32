import numpy as np

from geometry.metric import MetricSpec
from metrics import preset
from util.errors import ConfigurationError


class Custom(MetricSpec):
    """
    beta = exp(sum_alpha c_alpha X^alpha) from a table of monomials, kappa = identity.
    """

    def __init__(self, dimension, lower, upper, powers, coefficients, aux_weights=None, params=None):
        super().__init__(dimension, lower, upper, aux_weights=aux_weights, params=params)
        self.powers = np.asarray(powers, dtype=int).reshape(-1, self.n)
        self.coefficients = np.asarray(coefficients, dtype=float)

    @property
    def name(self) -> str:
        return "custom"

    @property
    def static(self) -> bool:
        return bool(np.all(self.powers[self.coefficients != 0, 0] == 0))

    @property
    def diagonal(self) -> bool:
        return True

    def _exponent(self, X):
        X = np.asarray(X, dtype=float)
        monomials = np.prod(X[..., None, :] ** self.powers, axis=-1)
        return monomials @ self.coefficients

    def beta(self, X):
        return np.exp(self._exponent(X))

    def kappa(self, X):
        return np.broadcast_to(np.eye(self.d), np.shape(X)[:-1] + (self.d, self.d)).copy()

    def dbeta(self, X):
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape)
        for i in range(self.n):
            lowered = self.powers.copy()
            lowered[:, i] = np.maximum(lowered[:, i] - 1, 0)
            monomials = np.prod(X[..., None, :] ** lowered, axis=-1) * self.powers[:, i]
            out[..., i] = monomials @ self.coefficients
        return out * self.beta(X)[..., None]

    def dkappa(self, X):
        return np.zeros(np.shape(X)[:-1] + (self.n, self.d, self.d))


class CustomDescription(preset.PresetDescription):
    @staticmethod
    def get_name() -> str:
        return "custom"

    @staticmethod
    def get_description() -> str:
        return "Conformal factor given by a coefficient table of an exponentiated polynomial"

    @staticmethod
    def instantiate(dimension: int, lower, upper, parameter: dict, aux_weights=None) -> MetricSpec:
        table = parameter.get("coefficients", [])
        powers, coefficients = [], []
        for entry in table:
            power = entry["power"]
            if len(power) != dimension + 1 or any(p < 0 for p in power):
                raise ConfigurationError(f"monomial power {power} needs {dimension + 1} non-negative exponents")
            powers.append(power)
            coefficients.append(float(entry["coefficient"]))
        if not powers:
            powers, coefficients = [[0] * (dimension + 1)], [0.0]
        return Custom(dimension, lower, upper, powers, coefficients, aux_weights=aux_weights, params=parameter)
