"""Velocity-aware uplink statistics for ground and aerial users.

Analytical machinery (dominant-interferer approximation) and a
Voronoi-cell Monte Carlo oracle for the SINR meta distribution, the joint
conditional success probability at two time instants, the spatio-temporal
correlation coefficient, and the peak age-of-information distribution.
"""

from .channel import (
    ENVIRONMENTS,
    GROUND,
    LOS,
    NLOS,
    LinkGeometry,
    SystemParams,
    alzer_beta,
    fading_sample,
    los_probability,
    mean_rx_power,
    nlos_probability,
    table1,
)
from .quadrature import (
    DEFAULT_SPEC,
    RELAXED_SPEC,
    QuadratureError,
    QuadratureSpec,
    integrate_1d,
    integrate_nd,
    lambert_w0,
    lambert_w0_exp,
    upper_incomplete_gamma,
)

__all__ = [
    "ENVIRONMENTS",
    "GROUND",
    "LOS",
    "NLOS",
    "LinkGeometry",
    "SystemParams",
    "alzer_beta",
    "fading_sample",
    "los_probability",
    "mean_rx_power",
    "nlos_probability",
    "table1",
    "DEFAULT_SPEC",
    "RELAXED_SPEC",
    "QuadratureError",
    "QuadratureSpec",
    "integrate_1d",
    "integrate_nd",
    "lambert_w0",
    "lambert_w0_exp",
    "upper_incomplete_gamma",
]

__version__ = "0.1.0"
