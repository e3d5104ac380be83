"""Closed-form math of the pairwise preference model.

Pure, stateless functions: the logistic sigmoid, the reshaped preference
probability g(x) = (sigmoid(c*x + b) + a) / (1 + a), the gradient
magnitudes both losses apply per triplet, and the closed-form location and
height of the bell-shaped magnitude curve. All functions accept scalars or
numpy arrays and are safe to call from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCurve

__all__ = [
    "PreferenceCurve",
    "CurveExtremum",
    "BPR_CURVE",
    "sigmoid",
    "g",
    "delta_sigma",
    "delta_g",
    "extremum",
    "neg_log_g",
    "curve_sweep",
    "SWEEP_COLUMNS",
]


@dataclass(frozen=True)
class PreferenceCurve:
    """Coefficients (a, b, c) of the reshaped preference probability.

    ``a`` lifts the lower asymptote to a/(1+a), ``b`` translates, ``c``
    stretches. (0, 0, 1) is exactly the logistic sigmoid.
    """

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a >= 0.0):
            raise ValueError(f"coefficient a must be >= 0, got {self.a}")
        if not (self.c > 0.0):
            raise ValueError(f"coefficient c must be > 0, got {self.c}")


BPR_CURVE = PreferenceCurve(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class CurveExtremum:
    """Location and height of the peak of the gradient-magnitude curve."""

    x_max: float
    delta_max: float


def sigmoid(x):
    """Logistic sigmoid 1/(1 + e^{-x}), branch-on-sign stable."""
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ex = np.exp(arr[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out[0]) if scalar else out


def g(curve: PreferenceCurve, x):
    """Reshaped preference probability (sigmoid(c*x + b) + a) / (1 + a).

    Strictly increasing, lower asymptote a/(1+a), upper asymptote 1.
    """
    z = curve.c * np.asarray(x, dtype=np.float64) + curve.b
    return (sigmoid(z) + curve.a) / (1.0 + curve.a)


def delta_sigma(x):
    """Gradient magnitude of the plain pairwise loss: 1 - sigmoid(x)."""
    return sigmoid(-np.asarray(x, dtype=np.float64))


def delta_g(curve: PreferenceCurve, x):
    """Gradient magnitude of the reshaped loss.

    c * s * (1 - s) / (s + a) with s = sigmoid(c*x + b). Both s and 1 - s
    are evaluated through the stable sigmoid so the tails keep full
    relative accuracy; for a = 0 the ratio collapses to c * (1 - s).
    """
    z = curve.c * np.asarray(x, dtype=np.float64) + curve.b
    one_minus_s = sigmoid(-z)
    if curve.a == 0.0:
        return curve.c * one_minus_s
    s = sigmoid(z)
    return curve.c * s * one_minus_s / (s + curve.a)


def extremum(curve: PreferenceCurve) -> CurveExtremum:
    """Closed-form peak of the gradient-magnitude curve (requires a > 0)."""
    if curve.a == 0.0:
        raise DegenerateCurve(
            "the magnitude curve is monotone decreasing for a = 0; "
            "no interior maximum exists"
        )
    a, b, c = curve.a, curve.b, curve.c
    sa = math.sqrt(a)
    s1a = math.sqrt(1.0 + a)
    x_max = (-b + math.log(sa / s1a)) / c
    delta_max = s1a * c / (2.0 * sa + 2.0 * a * sa + s1a + 2.0 * a * s1a)
    return CurveExtremum(x_max=x_max, delta_max=delta_max)


def neg_log_g(curve: PreferenceCurve, x):
    """-ln g(x), numerically stable.

    For a = 0 this is softplus(-z); for a > 0 the sigmoid is evaluated
    stably first, so g is never materialized in an underflowing form.
    Bounded above by ln((1+a)/a) when a > 0.
    """
    z = curve.c * np.asarray(x, dtype=np.float64) + curve.b
    if curve.a == 0.0:
        return np.logaddexp(0.0, -z)
    s = sigmoid(z)
    # rounding in log(s + a) can leave a -1e-16 residue when s ~ 1
    return np.maximum(np.log1p(curve.a) - np.log(s + curve.a), 0.0)


SWEEP_COLUMNS = ("x", "delta_g", "delta_g_over_c", "g", "neg_log_g")


def curve_sweep(curve: PreferenceCurve, x_min: float, x_max: float, steps: int):
    """Tabulate the curve over a uniform grid.

    Returns an (steps, 5) array with columns ``SWEEP_COLUMNS``. The
    delta/c column matches the convention of reporting shape independent
    of the stretch coefficient.
    """
    if steps < 2:
        raise ValueError("steps must be >= 2")
    xs = np.linspace(x_min, x_max, steps)
    dg = delta_g(curve, xs)
    return np.column_stack([xs, dg, dg / curve.c, g(curve, xs), neg_log_g(curve, xs)])
