import copy
import json
import logging
import os

from utils.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "config.json"
)

DEFAULTS = {
    "integrator": {
        "method": "rk4",
        "dt": 1e-3,
        "rtol": 1e-9,
        "atol": 1e-12,
        "dt_min": 1e-12,
        "dt_max": None,
    },
    "holonomic": {
        "stabilization": [5.0, 5.0],
        "projection_tolerance": 1e-6,
        "input_projection_tolerance": 1e-4,
        "state_tolerance": 1e-10,
        "gram_schmidt_tolerance": 1e-12,
    },
    "nonholonomic": {
        "stabilization": 5.0,
        "state_tolerance": 1e-10,
    },
    "analysis": {
        "grid_points": 11,
        "schrodinger_sign": -1,
        "jacobi_min_step": 1e-12,
    },
    "control": {
        "rank_tolerance": 1e-10,
        "max_generators": 256,
        "max_depth": 4,
        "include_drift": False,
    },
    "checks": {
        "constraint": 1e-8,
        "el": 1e-4,
        "hj": 1e-10,
        "energy": 1e-6,
        "jacobi": 1e-3,
        "noether": 1e-6,
        "schrodinger": 1e-12,
        "euler_fluid": 1e-10,
    },
    "logging": {
        "level": "WARNING",
        "format": "%(levelname)s %(name)s: %(message)s",
    },
}


def merge(base, override):
    """Recursive dict merge; values in override win."""
    result = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge(result[key], value)
        else:
            result[key] = value
    return result


def load_config(path=None):
    """Load configuration from config.json, layered over DEFAULTS"""
    config_path = path or DEFAULT_CONFIG_PATH
    try:
        with open(config_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        if path is not None:
            raise ConfigError(f"Config file not found at {config_path}") from None
        logger.debug("No config file at %s, using defaults", config_path)
        return copy.deepcopy(DEFAULTS)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Invalid JSON in config file {config_path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {config_path} must contain a JSON object")
    return merge(DEFAULTS, data)
