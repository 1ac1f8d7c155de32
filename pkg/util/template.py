import copy
import itertools
import string
from typing import Any, List

from util.errors import ConfigurationError


def unfold(d: dict) -> List[dict]:
    """
    Unfolds a dictionary with list values into the list of all combinations of its values.

    Args:
        d (dict): A dictionary where the values are either lists or single elements.

    Returns:
        List[dict]: One dictionary per combination of the input dictionary's values.
    """
    if not d:
        return [{}]

    keys, values = zip(*((k, v if isinstance(v, list) else [v]) for k, v in d.items()))
    return [dict(zip(keys, combination)) for combination in itertools.product(*values)]


class Template(string.Template):
    idpattern = r"""(?a:[_.a-z][_.a-z0-9]*)"""


def parse_value(value: str) -> Any:
    """
    Types a command-line value: booleans, integers, floats, otherwise the string itself.
    """
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    try:
        return int(value)
    except ValueError:
        try:
            return float(value)
        except ValueError:
            return value


def parse_overrides(values: List[str]) -> dict:
    """
    Parses `key=value` pairs given via `--override`; keys may be dotted paths.
    """
    result = {}
    for item in values or []:
        if "=" not in item:
            raise ConfigurationError(f"expected key=value, got: {item}")
        key, value = item.split("=", 1)
        result[key.strip()] = parse_value(value.strip())
    return result


def apply_overrides(config: dict, overrides: dict) -> dict:
    """
    Returns a copy of `config` with every dotted key of `overrides` replaced.

    Example:
        apply_overrides({"grid": {"cells": 128}}, {"grid.cells": 256}) == {"grid": {"cells": 256}}
    """
    result = copy.deepcopy(config)
    for key, value in overrides.items():
        node = result
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {key} does not address a mapping")
        node[parts[-1]] = value
    return result
