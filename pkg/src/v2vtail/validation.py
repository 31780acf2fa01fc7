"""Input validation helpers shared by the estimators and the simulator."""

import numbers

import numpy as np


def check_excess_samples(samples, min_samples=1):
    """Coerce excess-queue samples to a clean 1-D float array.

    Samples are lengths above the threshold, so they must be finite and
    strictly positive (0 is never a member of the excess set).
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError(f"expected 1-D sample array, got shape {x.shape}")
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} sample(s), got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain NaN or infinity")
    if np.any(x <= 0.0):
        raise ValueError("excess samples must be strictly positive")
    return x


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_non_negative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a non-negative finite number, got {value!r}")
    return float(value)


def check_probability(value, name, *, inclusive_high=False):
    ok = isinstance(value, numbers.Real) and 0.0 < value < 1.0
    if inclusive_high:
        ok = isinstance(value, numbers.Real) and 0.0 < value <= 1.0
    if not ok:
        hi = "]" if inclusive_high else ")"
        raise ValueError(f"{name} must lie in (0, 1{hi}, got {value!r}")
    return float(value)
