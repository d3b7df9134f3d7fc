"""Special functions and numerical integration used by every analytical formula.

The distance distributions and success-probability expressions in this
package lead to three recurring numerical needs:

* the principal branch of the Lambert W function, evaluated both directly
  and for astronomically large arguments given in log space (the distance
  threshold inversion multiplies ``exp(s * r^alpha / theta)`` by large
  powers of the radius, which overflows a float well inside the parameter
  ranges of interest),
* the upper incomplete gamma function for zero and negative first
  arguments (a path-loss exponent of 4 produces ``Gamma(-1, z)``), and
* adaptive quadrature on finite and semi-infinite intervals, plus short
  nests of it for the multi-dimensional integrals.

Everything here is a pure function of its arguments and safe to call from
multiple threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = [
    "QuadratureError",
    "QuadratureSpec",
    "DEFAULT_SPEC",
    "RELAXED_SPEC",
    "lambert_w0",
    "lambert_w0_exp",
    "upper_incomplete_gamma",
    "integrate_1d",
    "integrate_nd",
]

_INV_E = -math.exp(-1.0)


class QuadratureError(RuntimeError):
    """Raised when an integral cannot be brought within tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerance and transform settings for the adaptive integrators.

    ``transform`` selects how a semi-infinite interval is mapped onto a
    finite one: ``"algebraic"`` uses t = L + u/(1-u), ``"exponential"``
    uses t = L - log(1-u).  The algebraic map keeps the adaptivity of the
    underlying rule effective for integrands decaying like exp(-c*r^2).
    """

    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_depth: int = 50
    transform: str = "algebraic"

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.transform not in ("algebraic", "exponential"):
            raise ValueError(f"unknown transform {self.transform!r}")


#: Default 1-D settings.
DEFAULT_SPEC = QuadratureSpec()
#: Relaxed settings for 3-D / 4-D nests, where full precision is pointless
#: against a Monte Carlo comparator with ~1e-3 noise.
RELAXED_SPEC = QuadratureSpec(abs_tol=1e-5, rel_tol=1e-5, max_depth=50)


# ---------------------------------------------------------------------------
# Lambert W, principal branch
# ---------------------------------------------------------------------------

def _halley_w(w, x):
    """Halley refinement of w*exp(w) = x (array-safe)."""
    for _ in range(80):
        ew = np.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
            step = np.where(np.abs(denom) > 0, f / denom, 0.0)
        w = w - step
        if np.all(np.abs(step) <= 1e-16 * np.maximum(np.abs(w), 1e-300) + 1e-300):
            break
    return w


def lambert_w0(x):
    """Principal branch W0 of w*exp(w) = x for x >= -1/e.

    Halley iteration seeded from series/log asymptotics; converges to
    machine precision (round trip below 1e-12 relative) over the whole
    branch.  Scalars return scalars, arrays return arrays.
    """
    scalar = np.isscalar(x)
    x = np.asarray(x, dtype=float)
    if np.any(x < _INV_E * (1.0 + 1e-12) - 1e-300):
        raise ValueError("lambert_w0 requires x >= -1/e")
    xc = np.maximum(x, _INV_E)

    # Seed: branch-point series near -1/e, ratio near 0, log asymptote for
    # large arguments.
    w = np.empty_like(xc)
    near = xc < -0.25
    mid = (~near) & (xc < 3.0)
    far = xc >= 3.0
    if np.any(near):
        p = np.sqrt(2.0 * (np.e * xc[near] + 1.0))
        w[near] = -1.0 + p - p * p / 3.0 + 11.0 * p**3 / 72.0
    if np.any(mid):
        w[mid] = xc[mid] / (1.0 + xc[mid])
    if np.any(far):
        lx = np.log(xc[far])
        w[far] = lx - np.log(lx)
    w = _halley_w(w, xc)
    # Exact endpoint: W(-1/e) = -1.
    w = np.where(xc <= _INV_E, -1.0, w)
    return float(w) if scalar else w


def lambert_w0_exp(y):
    """W0(exp(y)) without forming exp(y), valid for arbitrarily large y.

    For y above ~1 solves w + log(w) = y by Newton iteration seeded with
    y - log(y); below that falls back to :func:`lambert_w0`.
    """
    scalar = np.isscalar(y)
    y = np.asarray(y, dtype=float)
    w = np.empty_like(y)
    small = y <= 1.0
    if np.any(small):
        w[small] = lambert_w0(np.exp(y[small]))
    big = ~small
    if np.any(big):
        yb = y[big]
        wb = yb - np.log(yb)
        wb = np.maximum(wb, 1e-300)
        for _ in range(80):
            f = wb + np.log(wb) - yb
            step = f * wb / (wb + 1.0)
            wb = wb - step
            if np.all(np.abs(step) <= 1e-16 * np.abs(wb) + 1e-300):
                break
        w[big] = wb
    return float(w) if scalar else w


# ---------------------------------------------------------------------------
# Upper incomplete gamma for nonpositive first argument
# ---------------------------------------------------------------------------

def upper_incomplete_gamma(a, z):
    """Gamma(a, z) = integral_z^inf t^(a-1) exp(-t) dt.

    For a > 0 this is the regularized scipy routine rescaled.  For a <= 0
    (needed because alpha = 4 gives a = 1 - alpha/2 = -1) the value is
    built by the downward recurrence Gamma(a, z) = (Gamma(a+1, z)
    - z^a exp(-z)) / a from a positive (or exponential-integral) seed,
    which requires z > 0.
    """
    scalar = np.isscalar(a) and np.isscalar(z)
    a = float(a)
    z = np.asarray(z, dtype=float)
    if a > 0:
        out = special.gammaincc(a, z) * special.gamma(a)
        return float(out) if scalar else out
    if np.any(z <= 0):
        raise ValueError("upper_incomplete_gamma requires z > 0 when a <= 0")
    steps = int(math.ceil(-a))
    a0 = a + steps
    if a0 == 0.0:
        g = special.exp1(z)
    else:
        g = special.gammaincc(a0, z) * special.gamma(a0)
    aa = a0
    for _ in range(steps):
        aa -= 1.0
        if aa == 0.0:
            g = special.exp1(z)
        else:
            g = (g - z**aa * np.exp(-z)) / aa
    return float(g) if scalar else g


# ---------------------------------------------------------------------------
# Adaptive quadrature
# ---------------------------------------------------------------------------

def _quad_finite(f, lo, hi, spec: QuadratureSpec) -> float:
    limit = max(50, spec.max_depth * 4)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        val, err = integrate.quad(
            f, lo, hi, epsabs=spec.abs_tol, epsrel=spec.rel_tol, limit=limit
        )
    tol = max(spec.abs_tol, spec.rel_tol * abs(val))
    # quad's own estimate is conservative; reject only clear failures.
    if not np.isfinite(val) or err > max(tol * 50.0, 1e-13):
        raise QuadratureError(
            f"integral on [{lo}, {hi}] did not converge "
            f"(value {val:.6g}, error estimate {err:.3g})"
        )
    return val


def integrate_1d(f, lower: float, upper: float, spec: QuadratureSpec | None = None) -> float:
    """Adaptive quadrature of ``f`` on [lower, upper], upper may be +inf.

    Semi-infinite intervals are mapped to [0, 1) with the substitution
    chosen by ``spec.transform`` before handing the finite problem to the
    adaptive rule.  Deterministic: identical inputs give bit-identical
    outputs.  Raises :class:`QuadratureError` on non-convergence.
    """
    spec = spec or DEFAULT_SPEC
    if not np.isinf(upper):
        return _quad_finite(f, lower, upper, spec)
    L = lower
    if spec.transform == "algebraic":
        def g(u):
            onem = 1.0 - u
            return f(L + u / onem) / (onem * onem)
    else:
        def g(u):
            onem = 1.0 - u
            return f(L - np.log(onem)) / onem
    return _quad_finite(g, 0.0, 1.0, spec)


def integrate_nd(f, bounds, spec: QuadratureSpec | None = None) -> float:
    """Nested adaptive quadrature over ``bounds``, dimension <= 4.

    ``bounds`` is a sequence of (lower, upper) pairs, outermost first;
    either bound may be a callable of the already-fixed outer variables.
    ``f`` receives one positional argument per dimension.  Inner levels run
    at a slightly looser tolerance, which keeps the cost of 3-D and 4-D
    nests sane without touching the outer target.
    """
    spec = spec or RELAXED_SPEC
    bounds = list(bounds)
    if not 1 <= len(bounds) <= 4:
        raise ValueError("integrate_nd supports 1 to 4 dimensions")
    inner = QuadratureSpec(
        abs_tol=spec.abs_tol * 0.1,
        rel_tol=spec.rel_tol,
        max_depth=spec.max_depth,
        transform=spec.transform,
    )

    def nest(level, outer_args):
        lo, hi = bounds[level]
        lo = lo(*outer_args) if callable(lo) else lo
        hi = hi(*outer_args) if callable(hi) else hi
        sub = spec if level == 0 else inner
        if level == len(bounds) - 1:
            return integrate_1d(lambda t: f(*outer_args, t), lo, hi, sub)
        return integrate_1d(lambda t: nest(level + 1, outer_args + (t,)), lo, hi, sub)

    return nest(0, ())
