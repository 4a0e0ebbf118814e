"""Small input-validation helpers shared by the physics modules and estimators."""

import math

import numpy as np


class NumericalError(RuntimeError):
    """Raised when a numerical routine fails to converge or is ill-conditioned."""


def check_positive(value, name):
    value = float(value)
    if not math.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")
    return value


def check_nonnegative(value, name):
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
    return value


def check_fraction(value, name, *, allow_zero=True, allow_one=True):
    """Validate a dimensionless fraction in [0, 1] (endpoints optional)."""
    value = float(value)
    lo_ok = value >= 0 if allow_zero else value > 0
    hi_ok = value <= 1 if allow_one else value < 1
    if not (math.isfinite(value) and lo_ok and hi_ok):
        lo = "[" if allow_zero else "("
        hi = "]" if allow_one else ")"
        raise ValueError(f"{name} must lie in {lo}0, 1{hi}, got {value!r}")
    return value


def check_1d(x, name, *, min_length=1, dtype=float):
    arr = np.asarray(x, dtype=dtype)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ValueError(f"{name} needs at least {min_length} samples, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_same_length(*pairs):
    """``pairs`` is a sequence of (name, array); all arrays must match in length."""
    lengths = {name: len(arr) for name, arr in pairs}
    if len(set(lengths.values())) > 1:
        raise ValueError(f"arrays must have equal length, got {lengths}")


def check_uniform(x, name, rtol=1e-6):
    """Return the step of a uniform grid, raising if the grid is not uniform."""
    d = np.diff(x)
    if d.size == 0:
        raise ValueError(f"{name} needs at least two points")
    step = float(np.mean(d))
    if step <= 0 or np.max(np.abs(d - step)) > rtol * abs(step) + 1e-300:
        raise ValueError(f"{name} must be uniformly spaced and increasing")
    return step
