"""Joint-law discretization, correlation coefficient, handover rate, PAoI.

The two-instant joint survival functions from the ground / aerial
analysis are discretized on a reliability lattice by the mixed second
difference, giving per-cell probability masses.  Everything downstream is
a Stieltjes sum over those masses: the covariance behind the
spatio-temporal correlation coefficient mixes the handover and
no-handover grids by the average handover probability, and the peak
age-of-information CDF pushes each cell through
1/gamma0 + 1/gamma1 + (transfer time).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import aerial as _aerial
from . import ground as _ground
from .channel import SystemParams
from .distances import handover_probability

__all__ = [
    "JointGrid",
    "PaoiResult",
    "discretize_joint",
    "build_joint_grid",
    "correlation_coefficient",
    "handover_rate",
    "delay_fraction",
    "paoi_cdf",
    "percentile",
]

#: Serving-law pairing used for the branch-mixture weights; matches the
#: in-cell simulation oracle (see distances.handover_probability).
MIXTURE_SERVING_LAW = "cell"

_NEG_MASS_CAP = 1e-3


@dataclass
class JointGrid:
    """Discretized joint law of (Ps(t0), Ps(t1)) on a reliability lattice.

    ``survival`` holds the joint survival values on {delta, ..., 1-delta}^2;
    ``masses`` the second-difference cell masses for all cells covering
    (0, 1]^2 (one more row/column than the lattice, the last cell ending
    at 1), and ``midpoints`` the cell centers used in Stieltjes sums.
    """

    step: float
    gammas: np.ndarray
    survival: np.ndarray
    masses: np.ndarray
    midpoints: np.ndarray
    branch: str
    clipped_negative_mass: float = 0.0

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def stieltjes(self, cell_fn) -> float:
        """Sum of cell_fn(gamma0, gamma1) against the cell masses."""
        g0 = self.midpoints[:, None]
        g1 = self.midpoints[None, :]
        return float(np.sum(cell_fn(g0, g1) * self.masses))


def discretize_joint(evaluator, delta: float, branch: str = "no_handover") -> JointGrid:
    """Build a JointGrid from a joint-survival evaluator.

    ``evaluator(g0, g1)`` must accept two 1-D arrays and return the matrix
    of joint survival values.  Cell mass is the printed second-difference
    stencil F(g0,g1) - F(g0-d,g1) - F(g0,g1-d) + F(g0-d,g1-d); tiny
    negative masses from quadrature noise are clipped and their total
    magnitude recorded (capped at 1e-3).
    """
    if not 0.0 < delta <= 0.1:
        raise ValueError("delta must lie in (0, 0.1]")
    n = int(round(1.0 / delta))
    edges = np.linspace(0.0, 1.0, n + 1)
    S = np.asarray(evaluator(edges, edges), dtype=float)
    if S.shape != (n + 1, n + 1):
        raise ValueError("evaluator must return a full survival matrix")
    masses = S[1:, 1:] - S[:-1, 1:] - S[1:, :-1] + S[:-1, :-1]
    neg = float(-np.minimum(masses, 0.0).sum())
    if neg > _NEG_MASS_CAP:
        raise ValueError(f"negative discretization mass {neg:.3g} exceeds cap")
    masses = np.clip(masses, 0.0, None)
    total = masses.sum()
    if total > 1.0 + _NEG_MASS_CAP:
        raise ValueError(f"total mass {total:.6f} exceeds 1")
    lattice = edges[1:-1]
    return JointGrid(
        step=delta,
        gammas=lattice,
        survival=S[1:-1, 1:-1],
        masses=masses,
        midpoints=edges[1:] - 0.5 * delta,
        branch=branch,
        clipped_negative_mass=neg,
    )


# ---------------------------------------------------------------------------
# Context plumbing
# ---------------------------------------------------------------------------

_CTX_CACHE: dict = {}


def _context(p: SystemParams, kind: str):
    key = (p, kind)
    if key not in _CTX_CACHE:
        if kind == "ground":
            _CTX_CACHE[key] = _ground.GroundSuccessContext(p)
        elif kind == "aerial":
            _CTX_CACHE[key] = _aerial.AerialSuccessContext(p)
        else:
            raise ValueError(f"kind must be 'ground' or 'aerial', got {kind!r}")
    return _CTX_CACHE[key]


def _lattice_evaluator(ctx, kind: str, vt: float, branch: str):
    if kind == "ground":
        return lambda g0, g1: _ground.joint_survival_lattice(ctx, vt, branch, g0, g1)
    return lambda g0, g1: _aerial.joint_survival_lattice_aerial(ctx, vt, branch, g0, g1)


def build_joint_grid(p: SystemParams, kind: str, v: float, t: float,
                     branch: str) -> JointGrid:
    """JointGrid of one mixture branch at displacement v*t."""
    ctx = _context(p, kind)
    return discretize_joint(_lattice_evaluator(ctx, kind, v * t, branch), p.pdf_step, branch)


def _meta_moments(p: SystemParams, kind: str):
    ctx = _context(p, kind)
    if kind == "ground":
        return _ground.moments_from_meta(ctx)
    g, w = _ground._gl3_nodes(np.linspace(0.0, 1.0, 400))
    curve = _aerial.meta_curve_aerial(ctx, g)
    return float(np.dot(w, curve)), float(np.dot(w, 2.0 * g * curve))


def _normalization_moments(p: SystemParams, kind: str, t: float):
    """(M1, M2) for the correlation normalization.

    Ground: Stieltjes moments of the zero-displacement lattice, the same
    discretization as the covariance sums, so rho(v=0) is exactly 1 and
    discretization bias cancels.  Aerial: moments of the meta curve (the
    zero-displacement aerial joint legitimately decorrelates through the
    dominant-interferer and link-type redraw, so it must not serve as the
    variance).
    """
    if kind == "aerial":
        return _meta_moments(p, kind)
    grid0 = build_joint_grid(p, kind, 0.0, t, "no_handover")
    m1 = grid0.stieltjes(lambda a, b: a)
    m2 = grid0.stieltjes(lambda a, b: a * b)
    return m1, m2


# ---------------------------------------------------------------------------
# Correlation coefficient
# ---------------------------------------------------------------------------

def correlation_coefficient(p: SystemParams, kind: str, v: float,
                            t: float | None = None) -> float:
    """Spatio-temporal correlation of the conditional success probability.

    Pearson coefficient of the discretized two-instant law: the handover
    and no-handover lattice masses are mixed by the average handover
    probability, and both the covariance and the marginal moments come
    from the same mixture masses.  This keeps the coefficient inside
    [-1, 1] by construction (the printed form normalizes by externally
    computed moments, which the displacement model's marginal drift can
    push past 1) and mirrors what the simulation estimates.  The
    observation gap defaults to the mean update inter-arrival.
    """
    if t is None:
        t = p.mean_interarrival
    pv = p.with_(velocity=v)
    if v == 0.0:
        ph = 0.0
    else:
        ph = handover_probability(pv, t, serving_law=MIXTURE_SERVING_LAW)
    masses = None
    mids = None
    for branch, weight in (("no_handover", 1.0 - ph), ("handover", ph)):
        if weight == 0.0:
            continue
        grid = build_joint_grid(pv, kind, v, t, branch)
        mids = grid.midpoints
        masses = weight * grid.masses if masses is None else masses + weight * grid.masses
    total = masses.sum()
    row = masses.sum(axis=1) / total
    col = masses.sum(axis=0) / total
    m1_0 = float(np.dot(mids, row))
    m1_1 = float(np.dot(mids, col))
    var0 = float(np.dot(mids * mids, row)) - m1_0 * m1_0
    var1 = float(np.dot(mids * mids, col)) - m1_1 * m1_1
    if min(var0, var1) < 1e-10:
        raise ValueError("degenerate variance: M2 - M1^2 < 1e-10")
    exy = float(mids @ masses @ mids) / total
    rho = (exy - m1_0 * m1_1) / math.sqrt(var0 * var1)
    if abs(rho) > 1.0 + 1e-6:
        raise ValueError(f"correlation coefficient {rho:.6f} outside [-1, 1]")
    return min(1.0, max(-1.0, rho))


def mixture_joint(p: SystemParams, kind: str, v: float, gamma0: float,
                  gamma1: float, t: float | None = None) -> float:
    """Branch-averaged joint survival P(Ps(t0) > g0, Ps(t1) > g1)."""
    if t is None:
        t = p.mean_interarrival
    pv = p.with_(velocity=v)
    ph = 0.0 if v == 0.0 else handover_probability(pv, t, serving_law=MIXTURE_SERVING_LAW)
    ctx = _context(pv, kind)
    acc = 0.0
    for branch, w in (("no_handover", 1.0 - ph), ("handover", ph)):
        if w == 0.0:
            continue
        if kind == "ground":
            val = _ground.joint_survival_lattice(ctx, v * t, branch, [gamma0], [gamma1])
        else:
            val = _aerial.joint_survival_lattice_aerial(ctx, v * t, branch, [gamma0], [gamma1])
        acc += w * float(val[0, 0])
    return acc


# ---------------------------------------------------------------------------
# Handover rate and PAoI
# ---------------------------------------------------------------------------

def handover_rate(p: SystemParams, v: float) -> float:
    """Average number of handovers per unit time: 4 v sqrt(lambda) / pi.

    The direction-averaged boundary-crossing integral
    int_0^pi sqrt(2 - 2 cos x) dx equals 4 exactly.
    """
    if v < 0:
        raise ValueError("v must be >= 0")
    return 4.0 * v * math.sqrt(p.bs_density_m2) / math.pi


def delay_fraction(p: SystemParams, v: float) -> float:
    """Fraction of time lost to handover delay, clipped to [0, 1]."""
    return min(1.0, p.handover_delay * handover_rate(p, v))


@dataclass
class PaoiResult:
    """Peak-AoI distribution on a time grid plus requested percentiles."""

    times: np.ndarray
    cdf: np.ndarray
    percentiles: dict
    handover_weight: float
    no_handover_weight: float
    delta_values: np.ndarray = field(repr=False, default=None)
    delta_masses: np.ndarray = field(repr=False, default=None)

    def evaluate(self, t) -> np.ndarray:
        """Mass of peak ages strictly below each requested time."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.delta_values, t, side="left")
        cum = np.concatenate(([0.0], np.cumsum(self.delta_masses)))
        return cum[idx]


def paoi_cdf(p: SystemParams, kind: str, v: float, arrival_rate: float | None = None,
             t_grid=None, percentiles=(0.6,)) -> PaoiResult:
    """Distribution of the peak age of information for a moving user.

    Mixture over the handover branches of the lattice masses pushed
    through 1/gamma0 + 1/gamma1 plus the transfer time, which is the mean
    inter-arrival inflated by the handover-delay fraction on the handover
    branch.  Requires the delay fraction to stay below 1.
    """
    if arrival_rate is None:
        arrival_rate = p.arrival_rate
    if not arrival_rate > 0:
        raise ValueError("arrival_rate must be > 0")
    pv = p.with_(velocity=v, arrival_rate=arrival_rate)
    t_tra = pv.mean_interarrival
    dho = delay_fraction(pv, v)
    if dho >= 1.0:
        raise ValueError("delay fraction at or above 1: the model assumes the "
                         "velocity keeps the handover-delay fraction below 1")
    ph = 0.0 if v == 0.0 else handover_probability(pv, t_tra, serving_law=MIXTURE_SERVING_LAW)
    shifts = {"no_handover": t_tra, "handover": t_tra / (1.0 - dho)}
    weights = {"no_handover": 1.0 - ph, "handover": ph}
    values = []
    masses = []
    for branch in ("no_handover", "handover"):
        if weights[branch] == 0.0:
            continue
        grid = build_joint_grid(pv, kind, v, t_tra, branch)
        g0 = grid.midpoints[:, None]
        g1 = grid.midpoints[None, :]
        values.append((1.0 / g0 + 1.0 / g1 + shifts[branch]).ravel())
        masses.append(weights[branch] * grid.masses.ravel())
    values = np.concatenate(values)
    masses = np.concatenate(masses)
    order = np.argsort(values)
    values = values[order]
    masses = masses[order]
    cum = np.cumsum(masses)
    total = cum[-1]

    if t_grid is None:
        # geometric grid from the hard floor to 99.9% of the captured mass
        t_lo = 2.0 + t_tra
        k = np.searchsorted(cum, 0.999 * total)
        t_hi = values[min(k, len(values) - 1)] * 1.05
        t_grid = np.geomspace(t_lo, max(t_hi, t_lo * 1.01), 400)
    t_grid = np.asarray(t_grid, dtype=float)

    result = PaoiResult(
        times=t_grid,
        cdf=np.empty_like(t_grid),
        percentiles={},
        handover_weight=ph,
        no_handover_weight=1.0 - ph,
        delta_values=values,
        delta_masses=masses,
    )
    result.cdf = result.evaluate(t_grid)
    for q in percentiles:
        result.percentiles[q] = percentile(result, q)
    return result


def percentile(result: PaoiResult, q: float) -> float:
    """Smallest grid time with CDF >= q, linearly interpolated between brackets."""
    if not 0.0 <= q < 1.0:
        raise ValueError("q must lie in [0, 1)")
    cdf, times = result.cdf, result.times
    if q > cdf[-1]:
        raise ValueError(f"requested percentile {q} above achievable mass {cdf[-1]:.4f}")
    if q <= cdf[0]:
        return float(times[0])
    i = int(np.searchsorted(cdf, q, side="left"))
    lo, hi = cdf[i - 1], cdf[i]
    if hi == lo:
        return float(times[i])
    w = (q - lo) / (hi - lo)
    return float(times[i - 1] * (1.0 - w) + times[i] * w)
