"""Distance distributions and mobility geometry.

Covers the serving-distance law of the in-cell typical user, the
nearest-active-interferer law of the one-interferer-per-cell field, the
displacement law of a user moving with constant speed in a uniform random
direction, the averaged handover probability, the nearest LoS/NLoS
interferer laws for aerial links, and the power-equality exclusion radii
between link types.

The printed serving PDF pairs a ``lambda`` prefactor with a
``lambda' = 1.28 lambda`` exponent and therefore integrates to
lambda/lambda' ~ 0.781, not 1.  Both forms are exposed:
``serving_pdf(..., normalized=False)`` is the printed curve, and the
normalized variant (lambda' prefactor) is what every probability-weighted
integral in this package uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from .channel import SystemParams, los_probability, nlos_probability

__all__ = [
    "DisplacementInput",
    "serving_pdf",
    "serving_cdf",
    "interferer_pdf",
    "interferer_cdf",
    "interferer_ccdf",
    "displaced_distance",
    "displaced_cdf",
    "crescent_area",
    "handover_probability",
    "nearest_los_pdf",
    "nearest_los_cdf",
    "nearest_nlos_pdf",
    "nearest_nlos_cdf",
    "exclusion_ln",
    "exclusion_nl",
    "distance_laws",
]

#: Geometric cache grid resolution (points per decade) and span in units
#: of lambda^(-1/2).  The laws appear inside 3- and 4-fold integrals;
#: precomputing them on this grid is the difference between minutes and
#: hours.
GRID_PER_DECADE = 512
GRID_SPAN = (1e-3, 50.0)


# ---------------------------------------------------------------------------
# Ground serving / interferer laws (closed forms)
# ---------------------------------------------------------------------------

def serving_pdf(p: SystemParams, r, normalized: bool = False):
    """PDF of the serving distance of the in-cell typical user.

    The printed form keeps the plain-density prefactor against the fitted
    exponent and is unnormalized; ``normalized=True`` replaces the
    prefactor by the fitted density so the law is proper.
    """
    r = np.asarray(r, dtype=float)
    lamp = p.fitted_density_m2
    pref = lamp if normalized else p.bs_density_m2
    out = 2.0 * math.pi * pref * r * np.exp(-lamp * math.pi * r * r)
    return float(out) if out.ndim == 0 else out


def serving_cdf(p: SystemParams, r):
    """CDF 1 - exp(-lambda' pi r^2) of the serving distance."""
    r = np.asarray(r, dtype=float)
    out = 1.0 - np.exp(-p.fitted_density_m2 * math.pi * r * r)
    return float(out) if out.ndim == 0 else out


def _interferer_Lambda(p: SystemParams, r):
    """Integrated intensity of the active-interferer field up to radius r.

    The inner integral of the nearest-interferer law has the closed form
    2 pi lam * (r^2/2 - (1 - exp(-pi lam r^2)) / (2 pi lam)).
    """
    lam = p.bs_density_m2
    t = math.pi * lam * r * r
    return t - (1.0 - np.exp(-t))


def interferer_pdf(p: SystemParams, r):
    """PDF of the distance to the nearest active interferer.

    Nearest-point law of the non-homogeneous field with density
    lambda * (1 - exp(-pi lambda r^2)).
    """
    r = np.asarray(r, dtype=float)
    lam = p.bs_density_m2
    t = math.pi * lam * r * r
    out = 2.0 * math.pi * lam * (1.0 - np.exp(-t)) * r * np.exp(-(t - (1.0 - np.exp(-t))))
    return float(out) if out.ndim == 0 else out


def interferer_ccdf(p: SystemParams, r):
    r = np.asarray(r, dtype=float)
    out = np.exp(-_interferer_Lambda(p, r))
    return float(out) if out.ndim == 0 else out


def interferer_cdf(p: SystemParams, r):
    r = np.asarray(r, dtype=float)
    out = 1.0 - np.exp(-_interferer_Lambda(p, r))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Displacement geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DisplacementInput:
    """One displacement step: initial distance, direction, speed, elapsed time."""

    r0: float
    direction: float  # kappa_0 in [0, pi] by symmetry
    speed: float
    elapsed: float

    def __post_init__(self) -> None:
        if self.r0 < 0 or self.speed < 0 or self.elapsed < 0:
            raise ValueError("r0, speed and elapsed must be >= 0")
        if not 0.0 <= self.direction <= math.pi + 1e-12:
            raise ValueError("direction must lie in [0, pi]")


def displaced_distance(d: DisplacementInput) -> float:
    """Law-of-cosines distance after moving speed*elapsed at angle kappa_0."""
    step = d.speed * d.elapsed
    return math.sqrt(
        step * step + d.r0 * d.r0 - 2.0 * step * d.r0 * math.cos(d.direction)
    )


def _displaced_distance_arrays(r0, kappa, step):
    return np.sqrt(step * step + r0 * r0 - 2.0 * step * r0 * np.cos(kappa))


def displaced_cdf(p: SystemParams, r0: float, r: float, vt: float) -> float:
    """CDF of the displaced distance given the old distance r0.

    Equals arccos((vt^2 + r0^2 - r^2) / (2 vt r0)) / pi on the support
    [|r0 - vt|, r0 + vt]; the arccos argument is clamped against rounding.
    Outside the support a ValueError is raised (callers clamp to 0/1).
    """
    if vt <= 0:
        raise ValueError("displaced_cdf requires vt > 0")
    lo, hi = abs(r0 - vt), r0 + vt
    eps = 1e-9 * max(hi, 1.0)
    if not (lo - eps <= r <= hi + eps):
        raise ValueError(f"r={r} outside the displacement support [{lo}, {hi}]")
    arg = (vt * vt + r0 * r0 - r * r) / (2.0 * vt * r0)
    return math.acos(min(1.0, max(-1.0, arg))) / math.pi


def _displaced_cdf_clamped(r0, x, step):
    """Array form of the displacement CDF, clamped to {0, 1} off-support.

    ``r0`` is the pre-move distance, ``x`` the evaluation point, ``step``
    the displacement magnitude.  At step == 0 degenerates to 1{x >= r0}.
    """
    r0 = np.asarray(r0, dtype=float)
    x = np.asarray(x, dtype=float)
    if step == 0.0:
        return (x >= r0).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = (step * step + r0 * r0 - x * x) / (2.0 * step * r0)
    out = np.arccos(np.clip(arg, -1.0, 1.0)) / math.pi
    out = np.where(x >= r0 + step, 1.0, out)
    out = np.where(x <= np.abs(r0 - step), 0.0, out)
    return out


# ---------------------------------------------------------------------------
# Handover probability
# ---------------------------------------------------------------------------

def _lens_area(ra, rb, d):
    """Intersection area of discs with radii ra, rb and center distance d."""
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = np.arccos(np.clip((d * d + ra * ra - rb * rb) / (2.0 * d * ra), -1.0, 1.0))
        a2 = np.arccos(np.clip((d * d + rb * rb - ra * ra) / (2.0 * d * rb), -1.0, 1.0))
    s = (-d + ra + rb) * (d + ra - rb) * (d - ra + rb) * (d + ra + rb)
    return ra * ra * a1 + rb * rb * a2 - 0.5 * np.sqrt(np.clip(s, 0.0, None))


def crescent_area(r0, kappa, step):
    """Area seen only by the displaced user: disc(new, r1) minus disc(old, r0).

    This equals the printed handover exponent with displacement d = v*t on
    its acute branch and stays correct when the triangle angles turn
    obtuse (the asin form picks the wrong branch there).
    """
    r0 = np.asarray(r0, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if step == 0.0:
        return np.zeros(np.broadcast(r0, kappa).shape)
    r1 = _displaced_distance_arrays(r0, kappa, step)
    d = np.broadcast_to(np.asarray(step, dtype=float), r1.shape)
    out = math.pi * r1 * r1 - _lens_area(r0, r1, d)
    return np.clip(out, 0.0, None)


def handover_probability(
    p: SystemParams,
    t: float,
    serving_law: str = "fitted",
    n_radial: int = 800,
    n_angle: int = 192,
) -> float:
    """Averaged probability that the nearest base station changes within t.

    Expectation over a uniform direction and the serving-distance law of
    the void probability of the crescent region swept by the displacement
    d = v*t.  ``serving_law`` selects the pairing:

    * ``"nearest"``  - plain Rayleigh serving law and plain void density;
      exact for a user at a fixed location (origin mode).
    * ``"fitted"``   - fitted serving law with plain void density; the
      printed combination.
    * ``"cell"``     - fitted density in both roles; matches the in-cell
      (cell mode) simulation within ~0.01.
    """
    if p.velocity == 0.0 or t == 0.0:
        return 0.0
    step = p.velocity * t
    lam = p.bs_density_m2
    lamp = p.fitted_density_m2
    if serving_law == "nearest":
        law, void = lam, lam
    elif serving_law == "fitted":
        law, void = lamp, lam
    elif serving_law == "cell":
        law, void = lamp, lamp
    else:
        raise ValueError(f"unknown serving_law {serving_law!r}")
    u = (np.arange(n_radial) + 0.5) / n_radial
    r0 = np.sqrt(-np.log1p(-u) / (law * math.pi))
    kappa = math.pi * (np.arange(n_angle) + 0.5) / n_angle
    R0, K = np.meshgrid(r0, kappa, indexing="ij")
    area = crescent_area(R0, K, step)
    return float(np.mean(1.0 - np.exp(-void * area)))


# ---------------------------------------------------------------------------
# Nearest LoS / NLoS interferer laws (cached quadrature)
# ---------------------------------------------------------------------------

class DistanceLaws:
    """Read-only cache of the aerial nearest-interferer laws for one parameter set.

    The integrated intensities of the LoS- and NLoS-thinned interferer
    fields are precomputed on a geometric grid and interpolated
    monotonically; beyond the grid the analytic quadratic tail with the
    floor LoS probability takes over.
    """

    def __init__(self, p: SystemParams):
        self.params = p
        lam = p.bs_density_m2
        scale = 1.0 / math.sqrt(lam)
        lo, hi = GRID_SPAN[0] * scale, GRID_SPAN[1] * scale
        n = int(math.ceil(GRID_PER_DECADE * math.log10(hi / lo))) + 1
        r = np.geomspace(lo, hi, n)
        self.r_grid = r

        def thinned(z, los: bool):
            lam_i = lam * (1.0 - np.exp(-math.pi * lam * z * z))
            frac = los_probability(p, z)
            if not los:
                frac = 1.0 - frac
            return 2.0 * math.pi * z * lam_i * frac

        self._Lambda_l = self._cumulative(r, lambda z: thinned(z, True))
        self._Lambda_n = self._cumulative(r, lambda z: thinned(z, False))
        logr = np.log(r)
        self._interp_l = PchipInterpolator(logr, self._Lambda_l, extrapolate=False)
        self._interp_n = PchipInterpolator(logr, self._Lambda_n, extrapolate=False)
        # Floor LoS probability (r -> inf limit of the sigmoid).
        self.pl_floor = 1.0 / (1.0 + p.env_a * math.exp(p.env_a * p.env_b))

    @staticmethod
    def _cumulative(r, integrand):
        """Cumulative integral from 0 on the grid, 3-point Gauss per interval."""
        edges = np.concatenate(([0.0], r))
        a, b = edges[:-1], edges[1:]
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        s = math.sqrt(0.6)
        pieces = half * (
            (5.0 / 9.0) * integrand(mid - s * half)
            + (8.0 / 9.0) * integrand(mid)
            + (5.0 / 9.0) * integrand(mid + s * half)
        )
        return np.cumsum(pieces)

    def _tail(self, r, kind: str):
        lam = self.params.bs_density_m2
        rmax = self.r_grid[-1]
        frac = self.pl_floor if kind == "los" else 1.0 - self.pl_floor
        return math.pi * lam * frac * (r * r - rmax * rmax)

    def Lambda(self, r, kind: str):
        """Integrated thinned intensity up to radius r (vectorized)."""
        r = np.asarray(r, dtype=float)
        table = self._Lambda_l if kind == "los" else self._Lambda_n
        interp = self._interp_l if kind == "los" else self._interp_n
        rc = np.clip(r, self.r_grid[0], self.r_grid[-1])
        with np.errstate(divide="ignore"):
            out = interp(np.log(rc))
        below = r < self.r_grid[0]
        if np.any(below):
            # quartic start: integrand ~ r^3 through the origin
            out = np.where(below, table[0] * (r / self.r_grid[0]) ** 4, out)
        over = r > self.r_grid[-1]
        if np.any(over):
            out = np.where(over, table[-1] + self._tail(r, kind), out)
        return out

    def cdf(self, r, kind: str):
        return 1.0 - np.exp(-self.Lambda(r, kind))

    def ccdf(self, r, kind: str):
        return np.exp(-self.Lambda(r, kind))

    def pdf(self, r, kind: str):
        p = self.params
        r = np.asarray(r, dtype=float)
        lam = p.bs_density_m2
        lam_i = lam * (1.0 - np.exp(-math.pi * lam * r * r))
        frac = los_probability(p, r) if kind == "los" else nlos_probability(p, r)
        return 2.0 * math.pi * r * lam_i * frac * np.exp(-self.Lambda(r, kind))


@lru_cache(maxsize=8)
def distance_laws(p: SystemParams) -> DistanceLaws:
    """Shared per-parameter cache of the nearest LoS/NLoS laws."""
    return DistanceLaws(p)


def nearest_los_pdf(p: SystemParams, r):
    out = distance_laws(p).pdf(r, "los")
    return float(out) if np.ndim(out) == 0 else out


def nearest_los_cdf(p: SystemParams, r):
    out = distance_laws(p).cdf(r, "los")
    return float(out) if np.ndim(out) == 0 else out


def nearest_nlos_pdf(p: SystemParams, r):
    out = distance_laws(p).pdf(r, "nlos")
    return float(out) if np.ndim(out) == 0 else out


def nearest_nlos_cdf(p: SystemParams, r):
    out = distance_laws(p).cdf(r, "nlos")
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Exclusion (power-equality) radii between link types
# ---------------------------------------------------------------------------

def exclusion_ln(p: SystemParams, d3):
    """Horizontal keep-out radius for NLoS interferers given a LoS dominant.

    ``d3`` is the 3-D distance of the LoS dominant (>= altitude).  Inside
    the returned horizontal radius an NLoS interferer would out-power the
    dominant; the max(h, .) clamp maps "every NLoS position admissible"
    to 0.
    """
    d3 = np.asarray(d3, dtype=float)
    if np.any(d3 < p.altitude - 1e-9):
        raise ValueError("d3 must be >= altitude")
    equal_power = (p.nlos_eta / p.los_eta) ** (1.0 / p.nlos_alpha) * d3 ** (
        p.los_alpha / p.nlos_alpha
    )
    inner = np.maximum(p.altitude, equal_power)
    out = np.sqrt(np.maximum(inner * inner - p.altitude**2, 0.0))
    return float(out) if out.ndim == 0 else out


def exclusion_nl(p: SystemParams, d3):
    """Horizontal keep-out radius for LoS interferers given an NLoS dominant.

    Same clamp as :func:`exclusion_ln`; the printed form omits it and can
    produce a negative radicand when the power-equal 3-D distance falls
    below the altitude.
    """
    d3 = np.asarray(d3, dtype=float)
    if np.any(d3 < p.altitude - 1e-9):
        raise ValueError("d3 must be >= altitude")
    equal_power = (p.los_eta / p.nlos_eta) ** (1.0 / p.los_alpha) * d3 ** (
        p.nlos_alpha / p.los_alpha
    )
    inner = np.maximum(p.altitude, equal_power)
    out = np.sqrt(np.maximum(inner * inner - p.altitude**2, 0.0))
    return float(out) if out.ndim == 0 else out
