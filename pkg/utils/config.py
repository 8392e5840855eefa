"""
Configuration management for the reversibility toolkit.

Handles loading scenario documents, merging defaults and dotted lookups.
"""

import copy
import json
import os
from typing import Any, Dict, Optional

from services.errors import ConfigError


DEFAULT_TOLERANCES: Dict[str, float] = {
    'zero_weight': 1e-12,
    'revisit': 1e-10,
    'match': 1e-9,
}

DEFAULT_SCENARIO: Dict[str, Any] = {
    'hilbert_dim': 2,
    'choice_rule': {'kind': 'blank-only'},
    'net': {
        'node_count': 200,
        'thinning_radius': 0.0,
        'seed': 0,
        'oversample': 8,
        'neighbors': 16,
    },
    'scales': [0.1, 0.05],
    'budgets': {
        'orbit_len': 1000,
        'max_limit_stages': 8,
        'horizon': 1000,
        'path_length_cap': 64,
        'size_cap': 4096,
        'grid_budget': 4096,
    },
    'stages': {
        'bucket_radius': None,
        'm_min': 5,
    },
    'steering': {
        'ode_steps': 1000,
    },
    'tolerances': DEFAULT_TOLERANCES,
    'output': {
        'directory': 'reports',
        'formats': ['json', 'csv'],
    },
}


def merge_defaults(config: Dict[str, Any], defaults: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Deep-merge a configuration document over the defaults.

    Args:
        config: User configuration
        defaults: Default values (DEFAULT_SCENARIO when omitted)

    Returns:
        New dictionary; nested dictionaries are merged key by key
    """
    merged = copy.deepcopy(DEFAULT_SCENARIO if defaults is None else defaults)
    for key, value in config.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_defaults(value, merged[key])
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(path: str) -> Dict[str, Any]:
    """
    Load a scenario document and merge it over the defaults.

    Args:
        path: Path to the JSON scenario file

    Returns:
        Merged configuration dictionary

    Raises:
        ConfigError: If the file is missing, unreadable or not valid JSON
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Scenario file does not exist: {path}", field='scenario')

    try:
        with open(path, 'r', encoding='utf-8') as f:
            config = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON: {e.msg}", line=e.lineno, column=e.colno)
    except IOError as e:
        raise ConfigError(f"Cannot read scenario file: {e}", field='scenario')

    if not isinstance(config, dict):
        raise ConfigError("Scenario must be a JSON object", field='scenario')
    return merge_defaults(config)


def save_config(config: Dict[str, Any], path: str) -> bool:
    """
    Save a (resolved) scenario document next to the reports.

    Args:
        config: Configuration dictionary
        path: Destination file

    Returns:
        True if successful, False otherwise
    """
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(config, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write('\n')
        return True
    except IOError:
        return False


def get_config_value(config: Dict[str, Any], key: str, default: Any = None) -> Any:
    """
    Get a configuration value by dotted key, e.g. "net.seed".

    Args:
        config: Configuration dictionary
        key: Dotted key
        default: Default value if any part of the key is missing

    Returns:
        Configuration value or default
    """
    node: Any = config
    for part in key.split('.'):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return default if node is None else node


def set_config_value(config: Dict[str, Any], key: str, value: Any) -> None:
    """
    Set a configuration value by dotted key, creating intermediate sections.

    Args:
        config: Configuration dictionary (modified in place)
        key: Dotted key
        value: Value to set
    """
    parts = key.split('.')
    node = config
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    node[parts[-1]] = value
