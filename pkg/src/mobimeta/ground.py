"""Dominant-interferer analysis for ground users.

The conditional success probability of a Rayleigh uplink is approximated
by treating the nearest active interferer exactly and the rest through
their mean, which makes success at threshold ``theta`` equivalent to the
serving distance falling below an invertible radius K(r1, gamma, theta)
obtained through the principal Lambert W branch.  Everything downstream
(meta distribution, the two-instant joint distribution with and without
handover, moments) reduces to weighted integrals of that threshold
geometry over the distance laws.

Grid strategy: the survival lattice needed by the correlation and PAoI
modules evaluates the joint law on a 99 x 99 grid of reliability levels;
doing that with nested adaptive quadrature would take hours.  Instead the
context precomputes composite Gauss-Legendre nodes of the radial laws and
a cumulative table of the displaced-serving integrand, after which any
lattice entry is a weighted table lookup.  Tables are keyed by the
displacement, so velocity sweeps reuse all distance-law work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemParams
from .distances import (
    _displaced_cdf_clamped,
    _displaced_distance_arrays,
    _lens_area,
    interferer_pdf,
    serving_cdf,
)
from .quadrature import lambert_w0_exp, upper_incomplete_gamma

__all__ = [
    "GroundSuccessContext",
    "residual_interference",
    "cond_success",
    "k_threshold",
    "meta_distribution",
    "meta_curve",
    "joint_no_handover",
    "joint_handover",
    "joint_survival_lattice",
    "moments",
    "moments_from_meta",
]

#: Radial span of the cached residual-interference curve, in units of
#: lambda^(-1/2).
CTX_GRID_SPAN = (1e-3, 50.0)
CTX_GRID_PER_DECADE = 512


def _gl3_nodes(edges: np.ndarray):
    """Composite 3-point Gauss-Legendre nodes/weights on consecutive edges.

    Layout is block-wise (all low nodes, all midpoints, all high nodes) so
    that cumulative-per-interval sums can regroup by slicing thirds.
    """
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    s = math.sqrt(0.6)
    nodes = np.concatenate([mid - s * half, mid, mid + s * half])
    weights = np.concatenate([(5.0 / 9.0) * half, (8.0 / 9.0) * half, (5.0 / 9.0) * half])
    return nodes, weights


@dataclass
class GroundSuccessContext:
    """Immutable evaluation context for one (parameter set, threshold) pair."""

    params: SystemParams
    theta: float | None = None
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        p = self.params
        if self.theta is None:
            self.theta = p.sinr_threshold
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        lam = p.bs_density_m2
        scale = 1.0 / math.sqrt(lam)
        lo, hi = CTX_GRID_SPAN[0] * scale, CTX_GRID_SPAN[1] * scale
        n = int(math.ceil(CTX_GRID_PER_DECADE * math.log10(hi / lo))) + 1
        self.r_grid = np.geomspace(lo, hi, n)
        self.residual_grid = residual_interference(self, self.r_grid)

        # Radial quadrature nodes covering essentially all serving /
        # interferer probability mass (tail masses below exp(-45)).
        lamp = p.fitted_density_m2
        self.r0_max = math.sqrt(45.0 / (math.pi * lamp))
        self.r1_max = math.sqrt(60.0 / (math.pi * lam))
        r1_edges = np.concatenate(
            ([0.0], np.geomspace(1e-3 * scale, self.r1_max, 96))
        )
        self.r1_nodes, w = _gl3_nodes(r1_edges)
        self.r1_weights = w * interferer_pdf(p, self.r1_nodes)
        # Serving-side cumulative edges (table rows of the joint machinery).
        self.r0_edges = np.concatenate(
            ([0.0], np.geomspace(0.5e-3 * scale, self.r0_max, 400))
        )

    # keep dataclass hashable by identity for lru-style reuse
    __hash__ = object.__hash__
    __eq__ = object.__eq__


# ---------------------------------------------------------------------------
# Core pointwise operations
# ---------------------------------------------------------------------------

def residual_interference(ctx: GroundSuccessContext, r1):
    """Mean interference from everything beyond the dominant interferer.

    Closed form of 2 pi p_t int_r1^inf lam (1 - exp(-pi lam z^2)) z^(1-a) dz
    through the upper incomplete gamma function.
    """
    p = ctx.params
    r1 = np.asarray(r1, dtype=float)
    if np.any(r1 <= 0):
        raise ValueError("r1 must be > 0")
    lam = p.bs_density_m2
    a = p.ground_alpha
    z = lam * math.pi * r1 * r1
    out = (
        2.0 * math.pi * lam * p.tx_power * r1 ** (2.0 - a) / (a - 2.0)
        - p.tx_power * (lam * math.pi) ** (a / 2.0)
        * upper_incomplete_gamma(1.0 - a / 2.0, z)
    )
    return float(out) if out.ndim == 0 else out


def _s_of(ctx: GroundSuccessContext, r1):
    p = ctx.params
    return ctx.theta * (residual_interference(ctx, r1) + p.noise) / p.tx_power


def cond_success(ctx: GroundSuccessContext, r0, r1):
    """Success probability over fading given both link distances.

    exp(-theta (I'(r1) + sigma^2) r0^alpha / p_t) / (1 + theta (r0/r1)^alpha);
    the exponent carries the full power of the serving path loss, which is
    the only form consistent with the Lambert-W threshold inversion.
    """
    p = ctx.params
    r0 = np.asarray(r0, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    a = p.ground_alpha
    with np.errstate(over="ignore", under="ignore"):
        out = np.exp(-_s_of(ctx, r1) * r0**a) / (1.0 + ctx.theta * (r0 / r1) ** a)
    return float(out) if out.ndim == 0 else out


def k_threshold(ctx: GroundSuccessContext, r1, gamma):
    """The serving radius at which the conditional success equals gamma.

    Inverts cond_success in r0 via W0 evaluated in log space, so the huge
    exp(s r^alpha / theta) factor never materializes.  gamma -> 1 gives 0,
    gamma -> 0 gives +inf.
    """
    p = ctx.params
    r1 = np.asarray(r1, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any((gamma < 0.0) | (gamma > 1.0)):
        raise ValueError("gamma must lie in [0, 1]")
    a = p.ground_alpha
    s = _s_of(ctx, r1)
    ra = r1**a
    with np.errstate(divide="ignore"):
        y = np.log(s) + s * ra / ctx.theta + a * np.log(r1) - np.log(gamma) - math.log(ctx.theta)
    w = lambert_w0_exp(np.where(np.isfinite(y), y, 0.0))
    u = np.maximum(w / s - ra / ctx.theta, 0.0)
    out = u ** (1.0 / a)
    out = np.where(gamma == 0.0, np.inf, out)
    out = np.where(gamma == 1.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Meta distribution and moments
# ---------------------------------------------------------------------------

def meta_curve(ctx: GroundSuccessContext, gammas) -> np.ndarray:
    """P(P_s > gamma) for an array of reliability levels."""
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    K = k_threshold(ctx, ctx.r1_nodes[:, None], gammas[None, :])
    return ctx.r1_weights @ serving_cdf(ctx.params, K)


def meta_distribution(ctx: GroundSuccessContext, gamma: float) -> float:
    """SINR meta distribution: the serving distance beats K(r1) on average."""
    return float(meta_curve(ctx, gamma)[0])


def moments(ctx: GroundSuccessContext, n_r1: int = 220, n_u: int = 96):
    """First and second moments of P_s by the nested distance integral.

    The dominant distance follows the second-nearest law
    2 (pi lam)^2 r^3 exp(-pi lam r^2) and the serving distance is uniform
    in the disc it bounds.
    """
    p = ctx.params
    lam = p.bs_density_m2
    edges = np.concatenate(([0.0], np.geomspace(1e-2 / math.sqrt(lam), ctx.r1_max, n_r1)))
    r1, w1 = _gl3_nodes(edges)
    f1 = 2.0 * (math.pi * lam) ** 2 * r1**3 * np.exp(-math.pi * lam * r1 * r1)
    u, wu = _gl3_nodes(np.linspace(0.0, 1.0, n_u))
    ps = cond_success(ctx, u[:, None] * r1[None, :], r1[None, :])
    inner1 = (wu * 2.0 * u) @ ps
    inner2 = (wu * 2.0 * u) @ ps**2
    m1 = float(np.dot(w1 * f1, inner1))
    m2 = float(np.dot(w1 * f1, inner2))
    return m1, m2


def moments_from_meta(ctx: GroundSuccessContext, n: int = 800):
    """Moments implied by the meta curve itself: E[X] = int P(X>g) dg.

    Self-consistent with the joint-survival machinery (same distance
    model), which is what the correlation coefficient needs for its
    normalization.
    """
    g, w = _gl3_nodes(np.linspace(0.0, 1.0, n))
    s = meta_curve(ctx, g)
    return float(np.dot(w, s)), float(np.dot(w, 2.0 * g * s))


# ---------------------------------------------------------------------------
# Joint survival machinery
# ---------------------------------------------------------------------------

def _k_table(ctx: GroundSuccessContext, radii: np.ndarray, gammas: np.ndarray):
    """K(radius, gamma) for radius/gamma node arrays, gamma = 0 allowed."""
    return k_threshold(ctx, radii[:, None], gammas[None, :])


class _NoHandoverTables:
    """Displacement-keyed tables for the correlated (no handover) branch."""

    def __init__(self, ctx: GroundSuccessContext, step: float, n_kappa: int = 15,
                 n_x: int = 220, integrand: str = "appendix"):
        self.ctx = ctx
        self.step = step
        self.integrand = integrand
        p = ctx.params
        kap_edges = np.linspace(0.0, math.pi, n_kappa)
        self.kappa_nodes, kw = _gl3_nodes(kap_edges)
        self.kappa_weights = kw / math.pi
        # displaced dominant-interferer radii per (r1 node, kappa node)
        self.g_r1 = _displaced_distance_arrays(
            ctx.r1_nodes[:, None], self.kappa_nodes[None, :], step
        )
        # cumulative serving-law table A(k0_edge, x): int_0^k0 f'(r) Fdisp(x|r) dr
        edges = ctx.r0_edges
        r0n, r0w = _gl3_nodes(edges)
        f0 = 2.0 * math.pi * p.fitted_density_m2 * r0n * np.exp(
            -p.fitted_density_m2 * math.pi * r0n * r0n
        )
        xg = np.concatenate(
            ([0.0], np.geomspace(edges[1], ctx.r0_max + 4.0 * step + 1.0, n_x))
        )
        self.x_grid = xg
        fd = _displaced_cdf_clamped(r0n[:, None], xg[None, :], step)
        if integrand == "theorem":
            # complemented variant printed in the theorem statement
            fd = 1.0 - fd
        contrib = (r0w * f0)[:, None] * fd
        m = len(edges) - 1
        per_interval = contrib[0:m] + contrib[m:2 * m] + contrib[2 * m:3 * m]
        self.A = np.vstack([np.zeros((1, len(xg))), np.cumsum(per_interval, axis=0)])
        self.k0_edges = edges

    def _column_index(self, x):
        x = np.clip(x, 0.0, self.x_grid[-1])
        ix = np.clip(np.searchsorted(self.x_grid, x) - 1, 0, len(self.x_grid) - 2)
        fx = (x - self.x_grid[ix]) / (self.x_grid[ix + 1] - self.x_grid[ix])
        return ix, fx

    def _row_index(self, k0):
        k0 = np.clip(k0, 0.0, self.k0_edges[-1])
        ik = np.clip(np.searchsorted(self.k0_edges, k0) - 1, 0, len(self.k0_edges) - 2)
        fk = (k0 - self.k0_edges[ik]) / (self.k0_edges[ik + 1] - self.k0_edges[ik])
        return ik, fk

    def survival(self, gammas0: np.ndarray, gammas1: np.ndarray) -> np.ndarray:
        """Joint survival P(Ps(t0) > g0, Ps(t1) > g1) on the grid product."""
        ctx = self.ctx
        if self.step == 0.0:
            # perfect correlation: both conditions collapse onto one event
            K0 = _k_table(ctx, ctx.r1_nodes, gammas0)
            K1 = _k_table(ctx, ctx.r1_nodes, gammas1)
            out = np.empty((len(gammas0), len(gammas1)))
            for j in range(len(gammas1)):
                kmin = np.minimum(K0, K1[:, j][:, None])
                out[:, j] = ctx.r1_weights @ serving_cdf(ctx.params, kmin)
            return out

        K0 = _k_table(ctx, ctx.r1_nodes, gammas0)          # (n_r1, n_g0)
        gflat = self.g_r1.reshape(-1)
        K1 = _k_table(ctx, gflat, gammas1)                 # (n_r1 * n_k, n_g1)
        n_r1, n_k = self.g_r1.shape
        ncols = self.A.shape[1]
        # Hoist the column interpolation: per (r1*kappa, g1) gather the two
        # bracketing columns once; the g0 loop then only indexes rows.
        ix, fx = self._column_index(K1)                    # (n_r1 * n_k, n_g1)
        wnode = (ctx.r1_weights[:, None] * self.kappa_weights[None, :]).reshape(-1)
        out = np.empty((len(gammas0), len(gammas1)))
        ik_all, fk_all = self._row_index(K0)               # (n_r1, n_g0)
        flat_lo = ix
        for i0 in range(len(gammas0)):
            ik = np.repeat(ik_all[:, i0], n_k)[:, None]    # rows per node
            fk = np.repeat(fk_all[:, i0], n_k)[:, None]
            base_lo = self.A.take(ik * ncols + flat_lo)
            base_hi = self.A.take((ik + 1) * ncols + flat_lo)
            next_lo = self.A.take(ik * ncols + flat_lo + 1)
            next_hi = self.A.take((ik + 1) * ncols + flat_lo + 1)
            row_lo = base_lo * (1.0 - fx) + next_lo * fx
            row_hi = base_hi * (1.0 - fx) + next_hi * fx
            vals = row_lo * (1.0 - fk) + row_hi * fk
            out[i0, :] = wnode @ vals
        return out


class _HandoverTables:
    """Displacement-keyed tables for the uncorrelated (handover) branch.

    Two treatments of the new serving distance are supported.  The printed
    one redraws it from the fitted serving law truncated below the
    displaced old-serving radius.  The default conditions it on the
    handover event itself through the same crescent-void geometry as the
    handover probability: the new nearest BS lies in the area uncovered by
    the displacement, so its distance CDF is the void probability of
    disc(new position, x) minus the lens shared with the old empty disc.
    The printed law ignores that the handing-over user sits near a cell
    boundary and overstates the post-handover success badly (the
    acceptance comparison against the cell simulation is what forces the
    default).
    """

    def __init__(self, ctx: GroundSuccessContext, step: float, n_kappa: int = 15,
                 n_x: int = 320, truncation: str = "crescent"):
        self.ctx = ctx
        self.step = step
        self.truncation = truncation
        p = ctx.params
        kap_edges = np.linspace(0.0, math.pi, n_kappa)
        self.kappa_nodes, kw = _gl3_nodes(kap_edges)
        self.kappa_weights = kw / math.pi
        # serving nodes for the outer r0 integral
        edges = ctx.r0_edges
        self.r0_nodes, r0w = _gl3_nodes(edges)
        lamp = p.fitted_density_m2
        f0 = 2.0 * math.pi * lamp * self.r0_nodes * np.exp(
            -lamp * math.pi * self.r0_nodes**2
        )
        self.r0_f_weights = r0w * f0
        self.r0_edges = edges
        # displaced old-serving radius per (r0 node, kappa node)
        self.rd_r0 = _displaced_distance_arrays(
            self.r0_nodes[:, None], self.kappa_nodes[None, :], step
        )
        self.x_grid = np.concatenate(
            ([0.0], np.geomspace(0.5, ctx.r0_max + 2.0 * step + 1.0, n_x))
        )
        if truncation == "crescent" and step > 0.0:
            # unnormalized new-serving CDF W(x | r0): void probability of the
            # crescent between disc(new, x) and the old empty disc(old, r0)
            d = np.full((len(self.r0_nodes), len(self.x_grid)), step)
            area = (
                math.pi * self.x_grid[None, :] ** 2
                - _lens_area(self.r0_nodes[:, None], self.x_grid[None, :], d)
            )
            self.W = 1.0 - np.exp(-lamp * np.clip(area, 0.0, None))
        else:
            self.truncation = "printed"
            self.W = np.broadcast_to(
                serving_cdf(p, self.x_grid), (len(self.r0_nodes), len(self.x_grid))
            ).copy()

    def _interp_w(self, x):
        """W rows evaluated at per-row points x (shape (n_r0, ...))."""
        xg = self.x_grid
        idx = np.clip(np.searchsorted(xg, x) - 1, 0, len(xg) - 2)
        frac = (np.clip(x, xg[0], xg[-1]) - xg[idx]) / (xg[idx + 1] - xg[idx])
        rows = np.arange(self.W.shape[0])
        while rows.ndim < x.ndim:
            rows = rows[..., None]
        lo = self.W[rows, idx]
        hi = self.W[rows, idx + 1]
        return lo * (1.0 - frac) + hi * frac

    def survival(self, gammas0: np.ndarray, gammas1: np.ndarray) -> np.ndarray:
        ctx = self.ctx
        K0 = _k_table(ctx, ctx.r1_nodes, gammas0)          # (n_r1, n_g0)
        K1 = _k_table(ctx, ctx.r1_nodes, gammas1)          # (n_r1, n_g1)
        w_rd = self._interp_w(self.rd_r0)                  # (n_r0, n_kappa)
        denom = np.maximum(w_rd @ self.kappa_weights, 1e-300)
        out = np.empty((len(gammas0), len(gammas1)))
        m = len(self.r0_edges) - 1
        for j in range(len(gammas1)):
            k1 = K1[:, j]
            order = np.argsort(k1)
            k1s = k1[order]
            wz = ctx.r1_weights[order]
            # V(y | r0) = E_z1[ W(min(K1, y)) ] via the K1-sorted cumulative
            wk1 = self._interp_w(np.broadcast_to(k1s, (len(self.r0_nodes), len(k1s))))
            C = np.concatenate(
                [np.zeros((len(self.r0_nodes), 1)), np.cumsum(wk1 * wz, axis=1)], axis=1
            )
            tail = np.concatenate([np.cumsum(wz[::-1])[::-1], [0.0]])
            pos = np.searchsorted(k1s, self.rd_r0)         # (n_r0, n_kappa)
            rows = np.arange(len(self.r0_nodes))[:, None]
            V = C[rows, pos] + w_rd * tail[pos]
            # conditional success at t1 given a handover at this geometry
            H = (V @ self.kappa_weights) / denom
            H = np.clip(H, 0.0, 1.0)
            contrib = self.r0_f_weights * H
            per_interval = contrib[0:m] + contrib[m:2 * m] + contrib[2 * m:3 * m]
            B = np.concatenate(([0.0], np.cumsum(per_interval)))
            bk = np.interp(np.clip(K0, 0.0, self.r0_edges[-1]), self.r0_edges, B)
            out[:, j] = ctx.r1_weights @ bk
        return out


def _branch_tables(ctx: GroundSuccessContext, step: float, branch: str,
                   integrand: str = "appendix", truncation: str = "crescent"):
    key = (branch, round(float(step), 6), integrand, truncation)
    if key not in ctx._tables:
        if branch == "no_handover":
            ctx._tables[key] = _NoHandoverTables(ctx, step, integrand=integrand)
        elif branch == "handover":
            ctx._tables[key] = _HandoverTables(ctx, step, truncation=truncation)
        else:
            raise ValueError(f"unknown branch {branch!r}")
    return ctx._tables[key]


def joint_survival_lattice(
    ctx: GroundSuccessContext,
    vt: float,
    branch: str,
    gammas0,
    gammas1=None,
    integrand: str = "appendix",
    truncation: str = "crescent",
) -> np.ndarray:
    """Joint survival of (Ps(t0), Ps(t1)) on a reliability lattice.

    ``branch`` selects the correlated (``"no_handover"``) or uncorrelated
    (``"handover"``) displacement model; ``vt`` is the displacement.
    ``integrand="theorem"`` switches the no-handover inner probability to
    the complemented form printed in the theorem statement, and
    ``truncation="printed"`` the handover branch to the plain truncated
    serving law (both exposed for comparison runs).
    """
    g0 = np.atleast_1d(np.asarray(gammas0, dtype=float))
    g1 = g0 if gammas1 is None else np.atleast_1d(np.asarray(gammas1, dtype=float))
    tables = _branch_tables(ctx, vt, branch, integrand, truncation)
    return tables.survival(g0, g1)


def joint_no_handover(ctx: GroundSuccessContext, gamma0: float, gamma1: float,
                      vt: float, integrand: str = "appendix") -> float:
    """P(Ps(t0) > gamma0, Ps(t1) > gamma1) given the serving cell is kept."""
    out = joint_survival_lattice(
        ctx, vt, "no_handover", [gamma0], [gamma1], integrand=integrand
    )
    return float(out[0, 0])


def joint_handover(ctx: GroundSuccessContext, gamma0: float, gamma1: float,
                   vt: float, truncation: str = "crescent") -> float:
    """P(Ps(t0) > gamma0, Ps(t1) > gamma1) across a handover.

    Fresh dominant-interferer draws realize the uncorrelated-interferer
    assumption; the new serving distance is conditioned on the handover
    event through the crescent-void geometry by default (see
    _HandoverTables for the printed alternative).
    """
    out = joint_survival_lattice(ctx, vt, "handover", [gamma0], [gamma1],
                                 truncation=truncation)
    return float(out[0, 0])
