"""Special functions used by the down-conversion kernels.

Everything here is pure, deterministic and safe to call from several
threads at once.  Only the small set of functions the kernels actually
need is provided: associated Laguerre polynomials with integer order,
Bessel functions of the first kind for integer order and complex
argument, the cardinal sine and binomial coefficients.

The complex Bessel evaluation uses the ascending power series only.  The
documented validity radius is ``|z| <= 60`` for general complex
arguments; imaginary-dominated arguments (the only kind the analytic
orbital-eigenvalue integrals produce) stay well conditioned far beyond
that because the result grows like ``exp(|Im z|)`` along with the terms.
A running error estimate guards against silent cancellation either way.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import SeriesOverflowError

# Documented validity radius of the ascending Bessel series (see module
# docstring); callers size their integration domains against it.
BESSEL_SERIES_RADIUS = 60.0

_SERIES_MAX_TERMS = 600
_SERIES_RELTOL = 1e-15
_SERIES_ACCURACY_FLOOR = 1e-8


def assoc_laguerre(m: int, alpha: int, x):
    """Associated Laguerre polynomial L_m^alpha(x).

    Evaluated with the stable three-term recurrence
    (m+1) L_{m+1} = (2m+1+alpha-x) L_m - (m+alpha) L_{m-1}.
    ``x`` may be a scalar or an ndarray.
    """
    if m < 0 or alpha < 0:
        raise ValueError("assoc_laguerre requires m >= 0 and alpha >= 0")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if m == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 + alpha - x
    for k in range(1, m):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def sinc(x):
    """sin(x)/x with the removable singularity expanded near zero.

    For |x| < 1e-4 the even Taylor polynomial 1 - x^2/6 + x^4/120 is
    exact to double precision.
    """
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 0.0, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(small, 1.0 - x * x / 6.0 + x**4 / 120.0, np.sin(xs) / np.where(small, 1.0, xs))
    return out if out.ndim else float(out)


def binomial(n: int, k: int) -> float:
    """Binomial coefficient C(n, k) as a float; zero outside 0 <= k <= n.

    Exact integer arithmetic up to n = 60, log-gamma beyond that.
    """
    if n < 0:
        raise ValueError("binomial requires n >= 0")
    if k < 0 or k > n:
        return 0.0
    if n <= 60:
        return float(math.comb(n, k))
    return math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1))


def bessel_j_series(order: int, z):
    """J_order(z) for integer order >= 0 on a complex array, by power series.

    The series is summed until every element's term magnitude falls below
    ``1e-15`` of its partial sum.  The largest term magnitude seen per
    element gives a cancellation-error estimate; if the estimated relative
    error exceeds 1e-8 anywhere, SeriesOverflowError is raised and the
    caller must shrink its radial domain.
    """
    if order < 0:
        raise ValueError("bessel_j_series requires order >= 0")
    if order > 170:
        raise ValueError("bessel_j_series supports integer orders up to 170")
    z = np.asarray(z, dtype=complex)
    half = z / 2.0
    half_sq = -(half * half)
    term = half**order / math.factorial(order)
    total = term.copy()
    peak = np.abs(term)
    converged = False
    for k in range(1, _SERIES_MAX_TERMS):
        term = term * half_sq / (k * (k + order))
        total += term
        np.maximum(peak, np.abs(term), out=peak)
        if k % 4 == 0 or k < 8:
            tmag = np.abs(term)
            smag = np.abs(total)
            if np.all(tmag <= _SERIES_RELTOL * np.maximum(smag, np.finfo(float).tiny)):
                converged = True
                break
    if not converged:
        raise SeriesOverflowError(
            f"Bessel series for order {order} did not converge within "
            f"{_SERIES_MAX_TERMS} terms (max |z| = {np.max(np.abs(z)):.3g}); "
            "shrink the radial grid extent"
        )
    # Cancellation estimate: rounding noise scales with the largest term.
    smag = np.abs(total)
    bad = peak * 1e-16 > _SERIES_ACCURACY_FLOOR * np.maximum(smag, np.finfo(float).tiny)
    if np.any(bad & (smag > 0)):
        worst = np.max(np.where(smag > 0, peak * 1e-16 / np.maximum(smag, np.finfo(float).tiny), 0.0))
        raise SeriesOverflowError(
            f"Bessel series for order {order} loses too much precision to "
            f"cancellation (estimated relative error {worst:.2g}); "
            "shrink the radial grid extent"
        )
    return total


def bessel_j_complex(order: int, z) -> complex:
    """J_order(z) for a single complex argument and integer order >= 0."""
    return complex(bessel_j_series(order, np.asarray([z], dtype=complex))[0])
