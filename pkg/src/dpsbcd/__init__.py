"""Differentially private stochastic block coordinate descent for Lipschitz
MLPs, plus a hidden-state Renyi privacy accountant with adaptive noise
schedules and a composition baseline."""

from . import accountant, data, network, numerics, schedules, splitting, trainer

__all__ = [
    "accountant",
    "data",
    "network",
    "numerics",
    "schedules",
    "splitting",
    "trainer",
]

__version__ = "0.1.0"
