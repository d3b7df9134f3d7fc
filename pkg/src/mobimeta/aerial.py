"""Dominant-interferer analysis for aerial users.

Aerial links mix LoS and NLoS states for both the serving link and the
dominant interferer, so the conditional success probability splits into
four kernels (Gamma-fading bounds through the Alzer constant) weighted by
association probabilities built from the nearest LoS/NLoS distance laws
and the power-equality exclusion radii.

The heavy lifting is organized around a single table
``S(r, gamma) = sum_ij P_i(r) * P(kappa_ij(r, Z_j) > gamma, Z_j admissible)``
computed once per context: the meta distribution is its serving-law
average, and both joint branches reduce to products of S evaluated at the
two time instants, so a full reliability lattice is a matrix product.
Inverting each kernel in the dominant distance (they are monotone) turns
the indicator integrals into cumulative-table lookups, which is orders of
magnitude faster and smoother than raw indicator quadrature.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.interpolate import PchipInterpolator

from .channel import SystemParams, los_probability
from .distances import (
    _displaced_distance_arrays,
    _lens_area,
    distance_laws,
    exclusion_ln,
    exclusion_nl,
    serving_cdf,
)
from .ground import _gl3_nodes

__all__ = [
    "PAIRS",
    "AerialSuccessContext",
    "residual_interference_aerial",
    "kappa",
    "association_probability",
    "meta_distribution_aerial",
    "meta_curve_aerial",
    "joint_no_handover_aerial",
    "joint_handover_aerial",
    "joint_survival_lattice_aerial",
    "moments_aerial",
]

log = logging.getLogger(__name__)

#: The four serving/dominant link-type combinations.
PAIRS = ("ll", "ln", "nl", "nn")

_OVERSHOOT_TOL = 1e-6


@dataclass
class AerialSuccessContext:
    """Caches the residual curves, distance laws and S-table for one setup."""

    params: SystemParams
    theta: float | None = None
    _s_tables: dict = field(default_factory=dict, repr=False)
    _joint_tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        p = self.params
        if self.theta is None:
            self.theta = p.sinr_threshold
        if not self.theta > 0:
            raise ValueError("theta must be > 0")
        self.laws = distance_laws(p)
        self.max_kappa_overshoot = 0.0

        lam = p.bs_density_m2
        z = self.laws.r_grid
        self.z_grid = z
        lam_i = lam * (1.0 - np.exp(-math.pi * lam * z * z))
        pl = los_probability(p, z)
        d3 = np.sqrt(z * z + p.altitude**2)

        # Residual-interference building blocks: reverse-cumulative
        # J_i(x) = int_x^inf P_i lam_i (z^2+h^2)^(-a_i/2) z dz with analytic
        # power-law tails beyond the grid (the LoS exponent 2.1 decays too
        # slowly to truncate).
        self._J_l = self._reverse_cumulative(
            lambda zz: self._thinned_kernel(zz, True, p.los_alpha),
            self.laws.pl_floor,
            p.los_alpha,
        )
        self._J_n = self._reverse_cumulative(
            lambda zz: self._thinned_kernel(zz, False, p.nlos_alpha),
            1.0 - self.laws.pl_floor,
            p.nlos_alpha,
        )
        self._logz = np.log(z)
        self._J_l_interp = PchipInterpolator(
            self._logz, np.log(np.maximum(self._J_l, 1e-300)), extrapolate=False
        )
        self._J_n_interp = PchipInterpolator(
            self._logz, np.log(np.maximum(self._J_n, 1e-300)), extrapolate=False
        )

        # Exclusion-weighted dominant-law masses G_j(x), reverse-cumulative
        # over the grid.
        f_l = self.laws.pdf(z, "los")
        f_n = self.laws.pdf(z, "nlos")
        self.dexcl_l = self.laws.ccdf(exclusion_ln(p, d3), "nlos")
        self.dexcl_n = self.laws.ccdf(exclusion_nl(p, d3), "los")
        self._G_l = self._reverse_cumulative_samples(z, self.dexcl_l * f_l)
        self._G_n = self._reverse_cumulative_samples(z, self.dexcl_n * f_n)
        self.association_mass = (self._G_l[0], self._G_n[0])

        # Serving-side quadrature nodes and a sorted copy for interpolation.
        lamp = p.fitted_density_m2
        self.r0_max = math.sqrt(45.0 / (math.pi * lamp))
        srv_edges = np.concatenate(
            ([0.0], np.geomspace(0.5e-3 / math.sqrt(lam), self.r0_max + 2500.0, 150))
        )
        self.srv_edges = srv_edges
        nodes, w = _gl3_nodes(srv_edges)
        self.srv_nodes = nodes
        f0 = 2.0 * math.pi * lamp * nodes * np.exp(-lamp * math.pi * nodes * nodes)
        self.srv_f_weights = w * f0
        self._srv_order = np.argsort(nodes)
        self._srv_sorted = nodes[self._srv_order]

    __hash__ = object.__hash__
    __eq__ = object.__eq__

    # -- residual-interference helpers --------------------------------------
    def _thinned_kernel(self, zz, los: bool, alpha: float):
        p = self.params
        lam = p.bs_density_m2
        lam_i = lam * (1.0 - np.exp(-math.pi * lam * zz * zz))
        frac = los_probability(p, zz)
        if not los:
            frac = 1.0 - frac
        return frac * lam_i * (zz * zz + p.altitude**2) ** (-alpha / 2.0) * zz

    def _reverse_cumulative(self, integrand, floor_frac, alpha):
        z = self.z_grid

        def pieces_on(edges):
            a, b = edges[:-1], edges[1:]
            half = 0.5 * (b - a)
            mid = 0.5 * (a + b)
            s = math.sqrt(0.6)
            return half * (
                (5.0 / 9.0) * integrand(mid - s * half)
                + (8.0 / 9.0) * integrand(mid)
                + (5.0 / 9.0) * integrand(mid + s * half)
            )

        out = np.zeros_like(z)
        out[:-1] = np.cumsum(pieces_on(z)[::-1])[::-1]
        # The LoS probability approaches its floor only like h/z, so keep
        # integrating well past the law grid before handing over to the
        # floor-based power-law tail (which alpha ~ 2.1 makes sizeable).
        far = np.geomspace(z[-1], 10.0 * z[-1], 96)
        lam = self.params.bs_density_m2
        tail = floor_frac * lam * far[-1] ** (2.0 - alpha) / (alpha - 2.0)
        return out + float(np.sum(pieces_on(far))) + tail

    @staticmethod
    def _reverse_cumulative_samples(z, values):
        pieces = 0.5 * (values[1:] + values[:-1]) * np.diff(z)
        out = np.zeros_like(z)
        out[:-1] = np.cumsum(pieces[::-1])[::-1]
        return out

    def _J(self, x, kind: str):
        x = np.asarray(x, dtype=float)
        table = self._J_l if kind == "los" else self._J_n
        interp = self._J_l_interp if kind == "los" else self._J_n_interp
        xc = np.clip(x, self.z_grid[0], self.z_grid[-1])
        out = np.exp(interp(np.log(xc)))
        # analytic power-law tail above the grid
        over = x > self.z_grid[-1]
        if np.any(over):
            p = self.params
            alpha = p.los_alpha if kind == "los" else p.nlos_alpha
            frac = self.laws.pl_floor if kind == "los" else 1.0 - self.laws.pl_floor
            lam = p.bs_density_m2
            tail = frac * lam * x ** (2.0 - alpha) / (alpha - 2.0)
            out = np.where(over, tail, out)
        return out

    def G(self, x, kind: str):
        """Association-weighted dominant-law mass beyond radius x."""
        x = np.asarray(x, dtype=float)
        table = self._G_l if kind == "los" else self._G_n
        out = np.interp(x, self.z_grid, table)
        out = np.where(x <= self.z_grid[0], table[0], out)
        out = np.where(x >= self.z_grid[-1], 0.0, out)
        return out

    # -- S-table -------------------------------------------------------------
    def s_table(self, gammas: np.ndarray, printed: bool = False) -> np.ndarray:
        """S(r, gamma) on (srv_nodes x gammas); cached per gamma grid."""
        gammas = np.asarray(gammas, dtype=float)
        key = (gammas.tobytes(), printed)
        if key not in self._s_tables:
            self._s_tables[key] = _success_given_serving(
                self, self.srv_nodes, gammas, printed
            )
        return self._s_tables[key]

    def s_interp(self, r, s_tab: np.ndarray) -> np.ndarray:
        """Rows of the S-table at arbitrary radii (linear in r, per column).

        Radii beyond the table clamp onto its top row; the serving-law
        weight of any integral reaching that far is below exp(-45).
        """
        r = np.asarray(r, dtype=float)
        srt = self._srv_sorted
        rows = s_tab[self._srv_order]
        rc = np.clip(r, srt[0], srt[-1])
        idx = np.clip(np.searchsorted(srt, rc) - 1, 0, len(srt) - 2)
        frac = (rc - srt[idx]) / (srt[idx + 1] - srt[idx])
        return rows[idx] * (1.0 - frac[..., None]) + rows[idx + 1] * frac[..., None]


# ---------------------------------------------------------------------------
# Pointwise operations
# ---------------------------------------------------------------------------

def residual_interference_aerial(ctx: AerialSuccessContext, kind: str, r_j):
    """Mean interference beyond the dominant aerial interferer.

    Two thinned-field integrals: the same-type tail starts at the dominant
    distance, the opposite-type tail at the power-equality exclusion
    radius of the dominant.
    """
    p = ctx.params
    r_j = np.asarray(r_j, dtype=float)
    d3 = np.sqrt(r_j * r_j + p.altitude**2)
    two_pi_pt = 2.0 * math.pi * p.tx_power
    if kind == "los":
        out = two_pi_pt * (
            p.los_eta * ctx._J(r_j, "los")
            + p.nlos_eta * ctx._J(exclusion_ln(p, d3), "nlos")
        )
    elif kind == "nlos":
        out = two_pi_pt * (
            p.los_eta * ctx._J(exclusion_nl(p, d3), "los")
            + p.nlos_eta * ctx._J(r_j, "nlos")
        )
    else:
        raise ValueError(f"kind must be 'los' or 'nlos', got {kind!r}")
    return float(out) if out.ndim == 0 else out


def _pair_params(p: SystemParams, pair: str):
    i, j = pair
    m_i, eta_i, alpha_i = (
        (p.los_m, p.los_eta, p.los_alpha) if i == "l" else (p.nlos_m, p.nlos_eta, p.nlos_alpha)
    )
    m_j, eta_j, alpha_j = (
        (p.los_m, p.los_eta, p.los_alpha) if j == "l" else (p.nlos_m, p.nlos_eta, p.nlos_alpha)
    )
    return m_i, eta_i, alpha_i, m_j, eta_j, alpha_j


def kappa(ctx: AerialSuccessContext, pair: str, r0, r_j, printed: bool = False):
    """Success kernel of one serving/dominant link-type combination.

    Alternating binomial sum from the Alzer bound of the Gamma CCDF with
    the dominant fading averaged exactly; clamped to [0, 1].  With
    ``printed=True`` the ln kernel keeps its stray shape factor and the nn
    kernel its unbounded final factor, as typeset; the default follows the
    derivation (both coincide for Rayleigh NLoS fading and 0 dB LoS
    excess).
    """
    p = ctx.params
    if pair not in PAIRS:
        raise ValueError(f"pair must be one of {PAIRS}")
    m_i, eta_i, alpha_i, m_j, eta_j, alpha_j = _pair_params(p, pair)
    beta = p.alzer(m_i)
    r0 = np.asarray(r0, dtype=float)
    r_j = np.asarray(r_j, dtype=float)
    d0a = (r0 * r0 + p.altitude**2) ** (alpha_i / 2.0)
    dja = (r_j * r_j + p.altitude**2) ** (-alpha_j / 2.0)
    resid = residual_interference_aerial(ctx, "los" if pair[1] == "l" else "nlos", r_j)
    c_resid = ctx.theta * (resid + p.noise) * d0a / (p.tx_power * eta_i)
    c_dom = ctx.theta * (eta_j / eta_i) * dja * d0a
    acc = 0.0
    with np.errstate(over="ignore", under="ignore"):
        for k in range(1, m_i + 1):
            term = comb(m_i, k) * (-1.0) ** (k + 1) * np.exp(-k * beta * m_i * c_resid)
            if printed and pair == "ln":
                dom = (1.0 + k * beta * ctx.theta * m_i * dja * d0a * eta_j) ** (-m_j)
            elif printed and pair == "nn":
                dom = 1.0 + k * beta * ctx.theta * dja * d0a * (eta_j / eta_i)
            else:
                dom = (1.0 + k * beta * m_i * c_dom / m_j) ** (-float(m_j))
            acc = acc + term * dom
    overshoot = float(np.max(acc) - 1.0) if np.size(acc) else 0.0
    if overshoot > _OVERSHOOT_TOL:
        ctx.max_kappa_overshoot = max(ctx.max_kappa_overshoot, overshoot)
        log.warning("kappa_%s exceeded 1 by %.3g before clamping", pair, overshoot)
    out = np.clip(acc, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def association_probability(ctx: AerialSuccessContext, pair: str, r0, r_j):
    """Probability of the serving-type / dominant-type combination.

    Product of the LoS (or NLoS) probability of the serving link and the
    CCDF that the opposite-type nearest interferer lies beyond the
    power-equality exclusion radius of the dominant.
    """
    p = ctx.params
    if pair not in PAIRS:
        raise ValueError(f"pair must be one of {PAIRS}")
    r_j = np.asarray(r_j, dtype=float)
    d3 = np.sqrt(r_j * r_j + p.altitude**2)
    serving = los_probability(p, r0) if pair[0] == "l" else 1.0 - los_probability(p, r0)
    if pair[1] == "l":
        dominant = ctx.laws.ccdf(exclusion_ln(p, d3), "nlos")
    else:
        dominant = ctx.laws.ccdf(exclusion_nl(p, d3), "los")
    out = serving * dominant
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# S-table construction
# ---------------------------------------------------------------------------

def _success_given_serving(ctx: AerialSuccessContext, radii, gammas, printed=False):
    """S(r, gamma): association-weighted success mass over the dominant laws.

    For each pair the kernel is nondecreasing in the dominant distance, so
    the indicator region is [z*(r, gamma), inf) and its mass is a lookup
    in the exclusion-weighted reverse-cumulative G_j.
    """
    p = ctx.params
    z = ctx.z_grid
    gammas = np.asarray(gammas, dtype=float)
    out = np.zeros((len(radii), len(gammas)))
    pl_r = los_probability(p, np.asarray(radii, dtype=float))
    for pair in PAIRS:
        serving_frac = pl_r if pair[0] == "l" else 1.0 - pl_r
        kind = "los" if pair[1] == "l" else "nlos"
        kvals = kappa(ctx, pair, np.asarray(radii)[:, None], z[None, :], printed)
        kvals = np.atleast_2d(kvals)
        # enforce monotonicity against float noise before inversion
        kmono = np.maximum.accumulate(kvals, axis=1)
        drift = float(np.max(kmono - kvals))
        if drift > 1e-9:
            log.warning("kappa_%s non-monotone in the dominant distance by %.3g", pair, drift)
        for ir in range(len(radii)):
            zstar = np.interp(gammas, kmono[ir], z, left=0.0, right=np.inf)
            # kernel values that underflow to exactly 0 would otherwise push
            # the gamma = 0 boundary off zero; P(P_s > 0) covers everything
            zstar = np.where(gammas == 0.0, 0.0, zstar)
            mass = np.where(np.isinf(zstar), 0.0, ctx.G(np.where(np.isinf(zstar), 0.0, zstar), kind))
            out[ir] += serving_frac[ir] * mass
    return out


# ---------------------------------------------------------------------------
# Meta distribution, joint lattices, moments
# ---------------------------------------------------------------------------

def meta_curve_aerial(ctx: AerialSuccessContext, gammas, printed: bool = False) -> np.ndarray:
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    S = ctx.s_table(gammas, printed)
    return ctx.srv_f_weights @ S


def meta_distribution_aerial(ctx: AerialSuccessContext, gamma: float,
                             printed: bool = False) -> float:
    """P(P_s > gamma) for the aerial user: indicator-region double integrals."""
    return float(meta_curve_aerial(ctx, gamma, printed)[0])


def _joint_tables(ctx: AerialSuccessContext, step: float, branch: str,
                  gammas0, gammas1, n_kappa: int = 15,
                  truncation: str = "crescent"):
    g0 = np.asarray(gammas0, dtype=float)
    g1 = np.asarray(gammas1, dtype=float)
    S0 = ctx.s_table(g0)
    if branch == "no_handover":
        if step == 0.0:
            D = ctx.s_table(g1)
        else:
            kn, kw = _gl3_nodes(np.linspace(0.0, math.pi, n_kappa))
            kw = kw / math.pi
            disp = _displaced_distance_arrays(
                ctx.srv_nodes[:, None], kn[None, :], step
            )
            S1 = ctx.s_table(g1)
            vals = ctx.s_interp(disp, S1)        # (r, kappa, g1)
            D = np.einsum("k,rkg->rg", kw, vals)
    elif branch == "handover":
        S1 = ctx.s_table(g1)
        # New serving distance at the straight-back direction (kappa_0 = pi,
        # so the displaced old-serving radius is r0 + step).  The default
        # conditions its law on the handover event through the crescent-void
        # geometry; the printed variant truncates the fitted serving law.
        xg = np.concatenate(([0.0], np.geomspace(0.5, ctx.r0_max + 2.0 * step + 1.0, 320)))
        lamp = ctx.params.fitted_density_m2
        r0 = ctx.srv_nodes[:, None]
        if truncation == "crescent" and step > 0.0:
            d = np.full((len(ctx.srv_nodes), len(xg)), step)
            area = math.pi * xg[None, :] ** 2 - _lens_area(r0, xg[None, :], d)
            W = 1.0 - np.exp(-lamp * np.clip(area, 0.0, None))
        else:
            W = np.broadcast_to(
                1.0 - np.exp(-lamp * math.pi * xg * xg), (len(ctx.srv_nodes), len(xg))
            ).copy()
        rd = ctx.srv_nodes + step
        idx = np.clip(np.searchsorted(xg, rd) - 1, 0, len(xg) - 2)
        frac = (np.clip(rd, xg[0], xg[-1]) - xg[idx]) / (xg[idx + 1] - xg[idx])
        rows = np.arange(len(ctx.srv_nodes))
        w_rd = W[rows, idx] * (1.0 - frac) + W[rows, idx + 1] * frac
        Wc = np.minimum(W, w_rd[:, None])
        s_mid = ctx.s_interp(0.5 * (xg[1:] + xg[:-1]), S1)   # (n_x - 1, g1)
        D = (Wc[:, 1:] - Wc[:, :-1]) @ s_mid
        D = np.clip(D / np.maximum(w_rd[:, None], 1e-300), 0.0, 1.0)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return S0, D


def joint_survival_lattice_aerial(
    ctx: AerialSuccessContext, vt: float, branch: str, gammas0, gammas1=None,
    truncation: str = "crescent",
) -> np.ndarray:
    """Joint survival of (Ps(t0), Ps(t1)) on a reliability lattice.

    The 16 link-type combinations factor into the product of the t0 and
    t1 success masses S, with the serving distance displaced (no
    handover) or redrawn below the displaced radius at the straight-back
    direction (handover), so the lattice is a single weighted matrix
    product over the serving nodes.
    """
    g0 = np.atleast_1d(np.asarray(gammas0, dtype=float))
    g1 = g0 if gammas1 is None else np.atleast_1d(np.asarray(gammas1, dtype=float))
    key = (branch, round(float(vt), 6), g0.tobytes(), g1.tobytes(), truncation)
    if key not in ctx._joint_tables:
        ctx._joint_tables[key] = _joint_tables(ctx, vt, branch, g0, g1,
                                               truncation=truncation)
    S0, D = ctx._joint_tables[key]
    return np.einsum("r,rg,rh->gh", ctx.srv_f_weights, S0, D)


def joint_no_handover_aerial(ctx: AerialSuccessContext, gamma0: float,
                             gamma1: float, vt: float) -> float:
    out = joint_survival_lattice_aerial(ctx, vt, "no_handover", [gamma0], [gamma1])
    return float(out[0, 0])


def joint_handover_aerial(ctx: AerialSuccessContext, gamma0: float,
                          gamma1: float, vt: float,
                          truncation: str = "crescent") -> float:
    out = joint_survival_lattice_aerial(ctx, vt, "handover", [gamma0], [gamma1],
                                        truncation=truncation)
    return float(out[0, 0])


def moments_aerial(ctx: AerialSuccessContext):
    """Association-weighted first and second moments of the four kernels."""
    p = ctx.params
    z = ctx.z_grid
    radii = ctx.srv_nodes
    pl_r = los_probability(p, radii)
    f_l = ctx.laws.pdf(z, "los")
    f_n = ctx.laws.pdf(z, "nlos")
    wz = np.gradient(z)
    m1 = np.zeros(len(radii))
    m2 = np.zeros(len(radii))
    for pair in PAIRS:
        serving_frac = pl_r if pair[0] == "l" else 1.0 - pl_r
        kind = pair[1]
        fz = f_l if kind == "l" else f_n
        dex = ctx.dexcl_l if kind == "l" else ctx.dexcl_n
        kv = kappa(ctx, pair, radii[:, None], z[None, :])
        w = wz * fz * dex
        m1 += serving_frac * (kv @ w)
        m2 += serving_frac * (kv**2 @ w)
    return float(ctx.srv_f_weights @ m1), float(ctx.srv_f_weights @ m2)
