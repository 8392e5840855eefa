"""
Validation service for the reversibility toolkit.

Provides input validation functions for scenario paths, scales, output
directories, matrix literals and state specs.
"""

import math
import os
import re
from pathlib import Path
from typing import Any, Optional


STATE_SPEC_PATTERN = re.compile(r'^(basis:\d+|plus|minus|random:\d+)$')
SEED_LIMIT = 2 ** 63


def validate_scenario_path(path: str) -> tuple[bool, str]:
    """
    Validate that a scenario file exists and is readable.

    Args:
        path: Path to validate

    Returns:
        Tuple of (is_valid, error_message)
        - is_valid: True if path is valid, False otherwise
        - error_message: Empty string if valid, error description if invalid
    """
    if not path:
        return False, "Scenario path cannot be empty"

    if not isinstance(path, str):
        return False, "Scenario path must be a string"

    path_obj = Path(path)
    if not path_obj.exists():
        return False, f"Scenario file does not exist: {path}"

    if not path_obj.is_file():
        return False, f"Scenario path is not a file: {path}"

    if not os.access(path, os.R_OK):
        return False, f"Scenario file is not readable: {path}"

    if path_obj.suffix.lower() != '.json':
        return True, "Warning: Scenario file does not have a .json extension"

    return True, ""


def validate_epsilon(value: Any) -> tuple[bool, str]:
    """
    Validate a scale epsilon: a finite number in (0, pi/2].

    Args:
        value: Candidate scale

    Returns:
        Tuple of (is_valid, error_message)
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return False, f"Scale must be a number, got {value!r}"
    if not math.isfinite(value) or value <= 0:
        return False, f"Scale must be positive and finite, got {value}"
    if value > math.pi / 2:
        return False, f"Scale {value} exceeds the diameter pi/2 of state space"
    return True, ""


def validate_seed(value: Any) -> tuple[bool, str]:
    """
    Validate a seed: an integer in [0, 2^63).

    Args:
        value: Candidate seed

    Returns:
        Tuple of (is_valid, error_message)
    """
    if isinstance(value, bool) or not isinstance(value, int):
        return False, f"Seed must be an integer, got {value!r}"
    if not 0 <= value < SEED_LIMIT:
        return False, f"Seed must lie in [0, 2^63), got {value}"
    return True, ""


def validate_scales(scales: Any) -> tuple[bool, str]:
    """Validate a non-empty, strictly decreasing list of scales."""
    if not isinstance(scales, list) or not scales:
        return False, "Scales must be a non-empty list"
    for eps in scales:
        ok, message = validate_epsilon(eps)
        if not ok:
            return False, message
    if any(b >= a for a, b in zip(scales, scales[1:])):
        return False, "Scales must be strictly decreasing"
    return True, ""


def validate_output_dir(path: str) -> tuple[bool, str]:
    """
    Validate that reports can be written to a directory.

    A missing directory is fine as long as its nearest existing parent is writable.
    """
    if not path:
        return False, "Output directory cannot be empty"

    path_obj = Path(path)
    if path_obj.exists() and not path_obj.is_dir():
        return False, f"Output path is not a directory: {path}"

    existing = path_obj
    while not existing.exists():
        existing = existing.parent
    if not os.access(existing, os.W_OK):
        return False, f"Output directory is not writable: {existing}"

    if path_obj.is_dir() and any(path_obj.iterdir()):
        return True, "Warning: Output directory is not empty; reports will be overwritten"
    return True, ""


def _is_number_or_pair(entry: Any) -> bool:
    if isinstance(entry, bool):
        return False
    if isinstance(entry, (int, float)):
        return True
    return (isinstance(entry, list) and len(entry) == 2
            and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in entry))


def validate_matrix_literal(data: Any, dim: Optional[int] = None) -> tuple[bool, str]:
    """
    Validate a square matrix given as rows of numbers or [re, im] pairs.

    Args:
        data: Nested list
        dim: Expected dimension, if known
    """
    if not isinstance(data, list) or not data:
        return False, "Matrix must be a non-empty list of rows"
    size = len(data)
    for r, row in enumerate(data):
        if not isinstance(row, list) or len(row) != size:
            return False, f"Row {r} must be a list of {size} entries"
        for c, entry in enumerate(row):
            if not _is_number_or_pair(entry):
                return False, f"Entry ({r}, {c}) must be a number or an [re, im] pair"
    if dim is not None and size != dim:
        return False, f"Matrix is {size}x{size}, expected {dim}x{dim}"
    return True, ""


def validate_state_spec(spec: Any, dim: Optional[int] = None) -> tuple[bool, str]:
    """
    Validate a state spec: "basis:k", "plus", "minus", "random:<seed>" or an amplitude list.

    Args:
        spec: Candidate spec
        dim: Hilbert space dimension, if known
    """
    if isinstance(spec, str):
        if not STATE_SPEC_PATTERN.match(spec):
            return False, f"Unknown state spec '{spec}' (use basis:k, plus, minus, random:<seed>)"
        if spec.startswith('basis:') and dim is not None and int(spec.split(':')[1]) >= dim:
            return False, f"Basis index in '{spec}' outside dimension {dim}"
        return True, ""
    if isinstance(spec, list) and spec:
        if not all(_is_number_or_pair(entry) for entry in spec):
            return False, "Amplitudes must be numbers or [re, im] pairs"
        if dim is not None and len(spec) != dim:
            return False, f"State has {len(spec)} amplitudes, expected {dim}"
        if all((abs(e) if not isinstance(e, list) else abs(complex(*e))) == 0 for e in spec):
            return False, "State amplitudes cannot all be zero"
        return True, ""
    return False, f"State spec must be a string or an amplitude list, got {spec!r}"
