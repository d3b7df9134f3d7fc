"""System parameters, propagation models and fading laws.

Ground links are Rayleigh with power-law path loss over the horizontal
distance.  Aerial links are Nakagami-m (channel power ~ Gamma(m, 1/m))
with separate line-of-sight / non-line-of-sight path-loss exponents and
mean additional losses, applied to the 3-D distance sqrt(r^2 + h^2).

Unit conventions, used consistently by every module:

* densities are stored in km^-2 (the table convention) and converted to
  m^-2 via the ``*_m2`` properties wherever a formula needs SI,
* distances and the altitude are in meters,
* powers are in watts,
* the additional losses eta are stored linear (-20 dB is 0.01); dB only
  exists at the CLI boundary,
* the SINR threshold theta is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

__all__ = [
    "GROUND",
    "LOS",
    "NLOS",
    "ENVIRONMENTS",
    "SystemParams",
    "LinkGeometry",
    "alzer_beta",
    "table1",
    "los_probability",
    "nlos_probability",
    "mean_rx_power",
    "fading_sample",
]

GROUND = "ground"
LOS = "los"
NLOS = "nlos"

#: Environment presets (a, b) by obstacle density.
ENVIRONMENTS = {
    "suburban": (4.88, 0.43),
    "urban": (9.6, 0.16),
    "dense_urban": (12.0, 0.11),
    "highrise": (27.0, 0.08),
}


@lru_cache(maxsize=None)
def alzer_beta(m: int) -> float:
    """Tight-bound constant (m!)^(-1/m) for the Gamma CCDF exponential bound.

    beta_1 = 1 recovers the exact Rayleigh expression; beta_3 = 6^(-1/3).
    """
    if m < 1 or m != int(m):
        raise ValueError("shape m must be a positive integer")
    return math.factorial(int(m)) ** (-1.0 / m)


@dataclass(frozen=True)
class SystemParams:
    """Scalar configuration record threaded through all analysis.

    Defaults reproduce the reference parameter table (suburban
    environment); see :func:`table1` for preset construction.
    """

    bs_density: float = 1.0          # lambda, km^-2
    ue_density: float = 10.0         # lambda_u, km^-2
    tx_power: float = 1.0            # p_t, W
    noise: float = 1e-12             # sigma^2, W
    ground_alpha: float = 4.0        # alpha
    los_alpha: float = 2.1           # alpha_l
    nlos_alpha: float = 4.0          # alpha_n
    los_m: int = 3                   # m_l
    nlos_m: int = 1                  # m_n
    los_eta: float = 1.0             # eta_l, linear (0 dB)
    nlos_eta: float = 0.01           # eta_n, linear (-20 dB)
    altitude: float = 100.0          # h, m
    env_a: float = 4.88
    env_b: float = 0.43
    sinr_threshold: float = 1.0      # theta, linear
    velocity: float = 0.0            # v, m per unit time
    arrival_rate: float = 0.5        # lambda_a, updates per unit time
    handover_delay: float = 0.35     # d_m, s
    pdf_step: float = 0.01           # delta for the joint-PDF lattice

    def __post_init__(self) -> None:
        positive = {
            "bs_density": self.bs_density,
            "ue_density": self.ue_density,
            "tx_power": self.tx_power,
            "noise": self.noise,
            "los_eta": self.los_eta,
            "nlos_eta": self.nlos_eta,
            "env_a": self.env_a,
            "env_b": self.env_b,
            "sinr_threshold": self.sinr_threshold,
            "arrival_rate": self.arrival_rate,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")
        if not (self.ground_alpha > 2 and self.nlos_alpha > 2):
            raise ValueError("ground/NLoS path-loss exponents must exceed 2 "
                             "for the interference integrals to converge")
        if not self.los_alpha > 0:
            raise ValueError("LoS path-loss exponent must be positive")
        for name, m in (("los_m", self.los_m), ("nlos_m", self.nlos_m)):
            if m < 1 or m != int(m):
                raise ValueError(f"{name} must be a positive integer")
        if self.altitude < 0:
            raise ValueError("altitude must be >= 0")
        if self.velocity < 0:
            raise ValueError("velocity must be >= 0")
        if self.handover_delay < 0:
            raise ValueError("handover_delay must be >= 0")
        if not 0 < self.pdf_step <= 0.1:
            raise ValueError("pdf_step must lie in (0, 0.1]")

    # -- fitted (conditioned-in-cell) serving density -----------------------
    @property
    def fitted_density(self) -> float:
        """lambda' = 1.28 * lambda, km^-2."""
        return 1.28 * self.bs_density

    # -- SI conversions ------------------------------------------------------
    @property
    def bs_density_m2(self) -> float:
        return self.bs_density * 1e-6

    @property
    def fitted_density_m2(self) -> float:
        return self.fitted_density * 1e-6

    @property
    def ue_density_m2(self) -> float:
        return self.ue_density * 1e-6

    @property
    def mean_interarrival(self) -> float:
        """t_tra = 1 / lambda_a, the update inter-arrival time."""
        return 1.0 / self.arrival_rate

    def alzer(self, m: int) -> float:
        return alzer_beta(m)

    def with_(self, **changes) -> "SystemParams":
        """Return a copy with the given fields replaced."""
        return replace(self, **changes)


def table1(environment: str = "suburban", **overrides) -> SystemParams:
    """Reference parameters with one of the named environment presets."""
    try:
        a, b = ENVIRONMENTS[environment]
    except KeyError:
        raise ValueError(
            f"unknown environment {environment!r}; expected one of {sorted(ENVIRONMENTS)}"
        ) from None
    return SystemParams(env_a=a, env_b=b, **overrides)


@dataclass(frozen=True)
class LinkGeometry:
    """Serving and dominant-interferer geometry of one link.

    Distances are horizontal; path loss applies to sqrt(r^2 + h^2) for
    aerial links and to r for ground links.  Ground never mixes with
    los/nlos within one geometry.
    """

    serving_distance: float
    dominant_distance: float
    serving_link: str = GROUND
    dominant_link: str = GROUND

    def __post_init__(self) -> None:
        for name, d in (("serving_distance", self.serving_distance),
                        ("dominant_distance", self.dominant_distance)):
            if d < 0:
                raise ValueError(f"{name} must be >= 0")
        kinds = {self.serving_link, self.dominant_link}
        if not kinds <= {GROUND, LOS, NLOS}:
            raise ValueError(f"unknown link kind in {kinds}")
        if GROUND in kinds and kinds != {GROUND}:
            raise ValueError("ground links never mix with los/nlos")


def los_probability(p: SystemParams, r):
    """Probability of a line-of-sight link at horizontal distance r.

    Elevation-angle sigmoid; at r = 0 the elevation angle is 90 degrees.
    """
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        angle = np.degrees(np.arctan2(p.altitude, r))
    out = 1.0 / (1.0 + p.env_a * np.exp(-p.env_b * (angle - p.env_a)))
    return float(out) if out.ndim == 0 else out


def nlos_probability(p: SystemParams, r):
    return 1.0 - los_probability(p, r)


def mean_rx_power(p: SystemParams, g: LinkGeometry) -> float:
    """Mean received power (unit-mean fading factored out) of the serving link."""
    r0 = g.serving_distance
    if g.serving_link == GROUND:
        if r0 == 0.0:
            return math.inf
        return p.tx_power * r0 ** (-p.ground_alpha)
    d3sq = r0 * r0 + p.altitude * p.altitude
    if g.serving_link == LOS:
        return p.tx_power * p.los_eta * d3sq ** (-p.los_alpha / 2.0)
    return p.tx_power * p.nlos_eta * d3sq ** (-p.nlos_alpha / 2.0)


def fading_sample(kind: str, m: int, rng: np.random.Generator, size=None):
    """Unit-mean channel-power draw(s).

    Ground links are Rayleigh (exponential power); aerial links are
    Nakagami-m (power ~ Gamma(m, 1/m)).  The caller owns the random
    stream; there is no global generator.
    """
    if kind == GROUND:
        return rng.exponential(1.0, size=size)
    if kind in (LOS, NLOS):
        if m < 1 or m != int(m):
            raise ValueError("shape m must be a positive integer")
        return rng.gamma(float(m), 1.0 / m, size=size)
    raise ValueError(f"unknown link kind {kind!r}")
