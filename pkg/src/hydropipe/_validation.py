"""Small input checks used by the estimators and the functional API."""

import math

import numpy as np
from sklearn.utils.validation import check_array

from .errors import HydroError


def check_finite(value, name):
    value = float(value)
    if not math.isfinite(value):
        raise HydroError("non-finite", f"{name}={value!r}")
    return value


def check_window(values):
    """Return ``values`` as a list of non-negative ints, rejecting empties."""
    window = [int(v) for v in values]
    if not window:
        raise HydroError("empty-window")
    if min(window) < 0:
        # truncating and floor division only agree on non-negative counts
        raise HydroError("negative-counts", f"min={min(window)}")
    return window


def check_columns(X, n_columns, name="X"):
    """Validate a 2-D float array with a fixed number of columns."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if X.shape[1] != n_columns:
        raise ValueError(
            f"{name} has {X.shape[1]} columns, expected {n_columns}"
        )
    return X
