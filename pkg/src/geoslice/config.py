"""Run configuration: JSON file, defaults and dotted ``key=value`` overrides."""

import copy
import json

DEFAULTS = {
    "mesh": {"path": None, "format": None},
    "base": "bottom",
    "interval": 1.0,
    "field": {"time_scale": 1.0, "tol": 1e-10, "boundary": "absorbing"},
    "adjacency": "slab",
    "remesh": {"enabled": False, "target_edge": None, "iterations": 3},
    "nozzle": {"angle": 45.0, "height": 50.0, "boundary_samples": 64, "axis": "mean"},
    "strategy": "greedy",
    "pcs": None,
    "print": {"stepover": 0.8, "filament_radius": 0.875, "mu": 1.0, "feed": 20.0,
              "travel_clearance": 5.0, "layer_height": 0.6},
    "timings": False,
    "out": "geoslice-out",
}


class ConfigError(ValueError):
    pass


def default_config():
    return copy.deepcopy(DEFAULTS)


def _merge(dst, src, prefix=""):
    for k, v in src.items():
        name = prefix + k
        if k not in dst:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(dst[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {name!r} must be an object")
            _merge(dst[k], v, name + ".")
        else:
            dst[k] = v
    return dst


def load_config(path=None):
    """Defaults, updated from the JSON object at ``path`` when given."""
    cfg = default_config()
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot open config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return _merge(cfg, data)


def parse_value(text):
    """JSON literal when it parses (``1``, ``true``, ``null``), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_value(cfg, assignment):
    """Apply one ``dotted.key=value`` override in place."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    leaf = parts[-1]
    if leaf not in node or isinstance(node[leaf], dict):
        raise ConfigError(f"unknown config key {key!r}")
    node[leaf] = parse_value(raw)
    return cfg


def dump_config(cfg):
    return json.dumps(cfg, indent=1, sort_keys=True)
