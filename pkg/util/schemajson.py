import os
import pathlib
import re

import jsonschema
import simplejson as json
import yaml

from util.errors import ConfigurationError

SCHEMA_DIR = os.path.join(pathlib.Path(__file__).parent.resolve(), "..", "schemas")


def parse_yaml(path: str, env: dict = None) -> dict:
    """
    Load a yaml configuration file and resolve environment variables.
    Values tagged `!ENV` may reference variables as ${VAR_NAME}, e.g.

    output: !ENV ${RESULTS}/boomerang/

    Unknown variables are left untouched.

    :param str path: the path to the yaml file
    :param dict env: the environment (default: os.environ)
    :return: the parsed configuration
    """
    pattern = re.compile(r'.*?\${(\w+)}.*?')
    tag = "!ENV"

    class Loader(yaml.SafeLoader):
        pass

    if env is None:
        env = dict(os.environ)

    Loader.add_implicit_resolver(tag, pattern, None)

    def constructor_env_variables(loader, node):
        value = loader.construct_scalar(node)
        match = pattern.findall(value)
        if match:
            full_value = value
            for g in match:
                full_value = full_value.replace(f"${{{g}}}", env[g] if g in env.keys() else f"${{{g}}}")
            return full_value
        return value

    Loader.add_constructor(tag, constructor_env_variables)

    with open(path) as file:
        return yaml.load(file, Loader=Loader)


def parse_json(path: str):
    with open(path) as file:
        return json.load(file, allow_nan=True)


def load_schema(schema: str) -> dict:
    return parse_json(os.path.join(SCHEMA_DIR, schema))


def validate(instance: dict, schema: str):
    """
    Validate an instance against one of the schemas in `schemas/`.

    Raises:
        ConfigurationError: If the instance violates the schema.
    """
    try:
        jsonschema.validate(instance=instance, schema=load_schema(schema))
    except jsonschema.ValidationError as e:
        location = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigurationError(f"{location}: {e.message}", schema=schema) from e


def load(path: str, schema: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigurationError(f"configuration file {path} does not exist")
    try:
        instance = parse_yaml(path=path) if path.endswith((".yaml", ".yml")) else parse_json(path=path)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"malformed configuration {path}: {e}") from e
    if not isinstance(instance, dict):
        raise ConfigurationError(f"configuration {path} must be a mapping")

    validate(instance, schema)
    return instance
