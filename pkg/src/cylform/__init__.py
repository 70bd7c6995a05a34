"""Delay-adaptive boundary control of reaction-advection-diffusion
dynamics on a cylinder surface.

The package simulates a formation-keeping problem: a dense swarm whose
deviation from a target shape obeys a pair of diffusion-advection-reaction
equations on the lateral surface of a cylinder, actuated only through the
top rim, with the actuation travelling through an unknown constant delay.
It provides the spatial discretisation, the closed-form and series gain
kernels, the predictor-based rim controller, the delay estimator, and a
scenario runner with a small CLI.
"""

from .errors import (
    ConfigError,
    CylformError,
    HistoryUnderrunError,
    InstabilityError,
    KernelTruncationError,
    ResonantModeError,
)
from .geometry import CylinderGrid, Field, ModeStack

__all__ = [
    "CylinderGrid",
    "Field",
    "ModeStack",
    "CylformError",
    "ConfigError",
    "ResonantModeError",
    "KernelTruncationError",
    "InstabilityError",
    "HistoryUnderrunError",
]

__version__ = "0.1.0"
