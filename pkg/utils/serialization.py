"""
Serialization helpers for reports.

Complex matrices and vectors are written as nested arrays of [re, im] pairs.
JSON output is canonical (sorted keys, fixed float rendering) so identical
runs produce byte-identical files.
"""

import json
import math
from typing import Any, List

import numpy as np


FLOAT_DIGITS = 15


def clean_float(value: float) -> Any:
    """Round a float for stable rendering; non-finite values become strings."""
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    rounded = round(float(value), FLOAT_DIGITS)
    # avoid "-0.0" in reports
    return 0.0 if rounded == 0 else rounded


def complex_to_pair(value: complex) -> List[float]:
    """Encode one complex number as [re, im]."""
    return [clean_float(value.real), clean_float(value.imag)]


def vector_to_pairs(vector: np.ndarray) -> List[List[float]]:
    """Encode a complex vector as a list of [re, im] pairs."""
    return [complex_to_pair(complex(z)) for z in np.asarray(vector).ravel()]


def matrix_to_pairs(matrix: np.ndarray) -> List[List[List[float]]]:
    """Encode a complex matrix as rows of [re, im] pairs."""
    return [vector_to_pairs(row) for row in np.asarray(matrix)]


def pairs_to_array(data: Any, ndim: int = 1) -> np.ndarray:
    """
    Decode nested [re, im] pairs into a complex array of ndim dimensions.

    Plain real numbers are accepted in place of pairs. The expected rank
    disambiguates a qubit row [a, b] from the pair a + ib.

    Args:
        data: Nested lists
        ndim: 1 for vectors, 2 for matrices

    Raises:
        ValueError: If the nesting is inconsistent
    """
    def decode(item: Any, depth: int) -> Any:
        if depth > 0:
            if not isinstance(item, (list, tuple)):
                raise ValueError(f"Expected a list, got {item!r}")
            return [decode(x, depth - 1) for x in item]
        if isinstance(item, (int, float)) and not isinstance(item, bool):
            return complex(item)
        if (isinstance(item, (list, tuple)) and len(item) == 2
                and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in item)):
            return complex(item[0], item[1])
        raise ValueError(f"Cannot decode complex entry: {item!r}")

    return np.array(decode(data, ndim), dtype=complex)


def to_jsonable(obj: Any) -> Any:
    """
    Recursively convert numpy values and containers into JSON-ready data.

    Complex arrays become [re, im] pairs; real arrays become lists.
    """
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            if obj.ndim == 1:
                return vector_to_pairs(obj)
            return matrix_to_pairs(obj)
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return clean_float(float(obj))
    if isinstance(obj, complex):
        return complex_to_pair(obj)
    if hasattr(obj, 'to_dict'):
        return to_jsonable(obj.to_dict())
    return obj


def dumps_canonical(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, two-space indent, trailing newline)."""
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, ensure_ascii=True) + '\n'
