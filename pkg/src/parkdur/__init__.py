"""Interpretable parking-duration modelling: a single-hidden-layer network
trained by k-fold grid search, Cohen's kappa evaluation, Garson importance,
LIME explanations and parking-generation demand formulas."""

__version__ = "0.1.0"

from ._accel import BACKEND  # noqa: E402,F401
