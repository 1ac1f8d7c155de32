from typing import Dict, Optional

import numpy as np

from geometry.metric import MetricSpec
from util.errors import ConfigurationError


class PresetDescription:
    """
    Registry entry of a named metric: builds a MetricSpec from the `metric` section of a config.
    """

    @staticmethod
    def get_name() -> str:
        raise NotImplementedError()

    @staticmethod
    def get_description() -> str:
        raise NotImplementedError()

    @staticmethod
    def default_chart(dimension: int) -> dict:
        """Chart box used when the config gives none."""
        return {"lower": [-1.0] + [-4.0] * dimension, "upper": [12.0] + [4.0] * dimension}

    @staticmethod
    def instantiate(dimension: int, lower, upper, parameter: dict, aux_weights=None) -> MetricSpec:
        raise NotImplementedError()


def presets() -> Dict[str, PresetDescription]:
    from metrics import bump, conformal, custom, minkowski, sphere

    preset_list = [
        minkowski.MinkowskiDescription,
        conformal.ConformalMinkowskiDescription,
        sphere.UltrastaticSphereDescription,
        bump.BumpPerturbedDescription,
        custom.CustomDescription,
    ]
    return {preset.get_name(): preset for preset in preset_list}


def load_metric(config: dict, overrides: Optional[dict] = None) -> MetricSpec:
    """
    Builds the metric of an experiment config section:

        metric:
          preset: bump-perturbed
          dimension: 2
          chart: {lower: [...], upper: [...]}
          parameter: {amplitude: 0.1, width: 0.5}
    """
    preset_map = presets()
    name = config.get("preset")
    if name not in preset_map:
        raise ConfigurationError(f"unknown metric preset '{name}', known: {', '.join(preset_map)}")

    description = preset_map[name]
    dimension = int(config.get("dimension", 2))
    chart = dict(description.default_chart(dimension), **config.get("chart", {}))
    parameter = dict(config.get("parameter", {}), **(overrides or {}))
    if len(chart["lower"]) != dimension + 1 or len(chart["upper"]) != dimension + 1:
        raise ConfigurationError(f"chart of '{name}' needs {dimension + 1} bounds per side")
    return description.instantiate(dimension, np.asarray(chart["lower"], dtype=float), np.asarray(chart["upper"], dtype=float),
                                   parameter, config.get("aux_weights"))
