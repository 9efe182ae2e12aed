"""Input validation helpers shared by the public functions and estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_points(points, name="points", dim=3):
    """Return ``points`` as a C-contiguous float64 array of shape (n, dim)."""
    arr = check_array(points, dtype=np.float64, ensure_2d=True,
                      ensure_all_finite=True, input_name=name)
    if arr.shape[1] != dim:
        raise ValueError(f"{name} must have shape (n, {dim}), got {arr.shape}")
    return np.ascontiguousarray(arr)


def check_cells(cells, n_vertices, width, name="cells"):
    arr = np.asarray(cells)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ValueError(f"{name} must have shape (m, {width}), got {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError(f"{name} must contain integer indices")
    arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= n_vertices):
        bad = int(np.flatnonzero((arr < 0) | (arr >= n_vertices))[0] // width)
        raise IndexError(
            f"{name}: index out of range in cell {bad} "
            f"(valid range 0..{n_vertices - 1})")
    return np.ascontiguousarray(arr)


def check_positive(value, name, strict=True, upper=None):
    if not isinstance(value, numbers.Real) or isinstance(value, bool):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    if upper is not None and value > upper:
        raise ValueError(f"{name} must be <= {upper}, got {value}")
    return value


def check_field(values, n, name="field"):
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
