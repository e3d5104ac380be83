"""Pairwise-ranking training engine for implicit feedback with hard
negative sampling and a reshaped, gradient-capping preference loss."""

from .prefcurve import (  # noqa: F401
    BPR_CURVE,
    CurveExtremum,
    PreferenceCurve,
    delta_g,
    delta_sigma,
    extremum,
    g,
    neg_log_g,
    sigmoid,
)

__version__ = "0.1.0"
