"""Closed-form orbital eigenvalues in the double-Gaussian approximation.

Replacing sinc(x) by exp(-alpha^2 x) (alpha = 0.65) in the two-crystal
longitudinal kernel makes the azimuthal integral of the OAM expansion
solvable: each harmonic reduces to Bessel functions of a complex
argument, and the orbital eigenvalues become a 2D radial integral

    Lam_n ~ int q_s q_i e^{-a (q_s^2+q_i^2)}
            | sum_nu binom(l_p, nu) q_s^nu q_i^{l_p-nu}
              [ e^{+i E (q_s^2+q_i^2)/2} e^{+i mu} J_{n-nu}(q_s q_i V)
              + e^{-i E (q_s^2+q_i^2)/2} e^{-i mu} J_{n-nu}(q_s q_i U) ] |^2

with real constants a, E, mu and complex V, U assembled from the crystal
length, gap, pump waist and dispersion (dg_constants).  The overall
prefactor is never evaluated; outputs are normalized to sum to one.

The derivation requires a pump without radial structure (m_p = 0).  For
d = 0 the two Bessel branches coincide in phase and the profile is a
monotone binomial-like hump centered at n = l_p / 2; a nonzero gap phase
mu suppresses low Bessel orders and produces the non-monotonic side
peaks seen in the full model.

Internally the integral is evaluated in units of sqrt(a) so the large
monomial powers stay bounded; Bessel arguments are capped by the series
validity radius through the quadrature extent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import OpticalSetup
from .errors import ConfigError
from .kernels import DOUBLE_GAUSS_ALPHA, adaptive_q_max, default_n_range
from .specfun import BESSEL_SERIES_RADIUS, bessel_j_series, binomial

DEFAULT_DG_QUAD = 200


@dataclass(frozen=True)
class DgConstants:
    """Constants of the double-Gaussian orbital-eigenvalue integral."""

    a: float
    E: float
    mu: float
    V: complex
    U: complex
    alpha: float

    def bessel_radius_extent(self, margin: float = 1.0) -> float:
        """Largest q with |q^2 V|, |q^2 U| within the Bessel series radius."""
        vmax = max(abs(self.V), abs(self.U))
        return math.sqrt(margin * BESSEL_SERIES_RADIUS / vmax)


def dg_constants(setup: OpticalSetup, alpha: float = DOUBLE_GAUSS_ALPHA) -> DgConstants:
    """Assemble a, E, mu, V, U for a setup (requires m_p = 0)."""
    pump = setup.pump
    if pump.m_p != 0:
        raise ConfigError(
            "the double-Gaussian orbital eigenvalues are derived for a pump "
            "without radial structure (m_p = 0)"
        )
    disp = setup.dispersion
    L = setup.geometry.L
    d = setup.geometry.d
    w0 = pump.w0
    k_p = disp.k_p
    a2 = alpha * alpha
    return DgConstants(
        a=w0 * w0 / 2.0 + L * a2 / (2.0 * k_p),
        E=L / (2.0 * k_p) + disp.n_s_crystal * d / (2.0 * k_p),
        mu=disp.delta_n * disp.k_s * d / disp.n_s_crystal,
        V=0.5j * w0 * w0 - 0.5j * L * a2 / k_p - 1.5 * L / k_p - disp.n_s_crystal * d / k_p,
        U=0.5j * w0 * w0 - 0.5j * L * a2 / k_p - 0.5 * L / k_p,
        alpha=alpha,
    )


def _bessel_table(orders: np.ndarray, z: np.ndarray) -> dict[int, np.ndarray]:
    """J_k(z) for every requested integer order; negative via J_{-k} = (-1)^k J_k."""
    table: dict[int, np.ndarray] = {}
    for k in sorted({abs(int(o)) for o in orders}):
        table[k] = bessel_j_series(k, z)
    out: dict[int, np.ndarray] = {}
    for o in {int(o) for o in orders}:
        base = table[abs(o)]
        out[o] = base if o >= 0 or abs(o) % 2 == 0 else -base
    return out


def analytic_orbital_eigs(setup: OpticalSetup,
                          n_range: tuple[int, int] | None = None,
                          n_quad: int = DEFAULT_DG_QUAD,
                          alpha: float = DOUBLE_GAUSS_ALPHA,
                          q_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Normalized orbital eigenvalues Lam_n of the double-Gaussian model.

    Returns (n values, weights summing to one).  The quadrature domain is
    the smaller of the numeric pipeline's adaptive extent and the Bessel
    series validity extent.
    """
    l_p = setup.pump.l_p
    if n_range is None:
        n_range = default_n_range(l_p)
    n_values = np.arange(n_range[0], n_range[1] + 1)
    if l_p < 0:
        # helicity mirror: the negative-OAM weights are the positive-OAM
        # ones at -n, so evaluate the |l_p| expansion on the mirrored range
        from dataclasses import replace as _replace
        mirrored = _replace(setup, pump=_replace(setup.pump, l_p=-l_p))
        ns, lam = analytic_orbital_eigs(
            mirrored, n_range=(-n_range[1], -n_range[0]), n_quad=n_quad,
            alpha=alpha, q_max=q_max)
        return n_values, lam[::-1].copy()

    consts = dg_constants(setup, alpha=alpha)
    if q_max is None:
        q_max = adaptive_q_max(setup)
    q_max = min(q_max, consts.bessel_radius_extent())

    # scale q by sqrt(a): monomials stay O(1), arguments rescale accordingly
    scale = math.sqrt(consts.a)
    x, w = np.polynomial.legendre.leggauss(n_quad)
    qs = 0.5 * q_max * scale * (x + 1.0)
    ws = 0.5 * q_max * scale * w

    q1 = qs[:, None]
    q2 = qs[None, :]
    prod = q1 * q2
    sq_sum = q1 * q1 + q2 * q2
    phase_plus = np.exp(0.5j * (consts.E / consts.a) * sq_sum + 1j * consts.mu)
    jv = _bessel_table(
        np.concatenate([n_values - nu for nu in range(0, abs(l_p) + 1)]),
        prod * (consts.V / consts.a),
    )
    ju = _bessel_table(
        np.concatenate([n_values - nu for nu in range(0, abs(l_p) + 1)]),
        prod * (consts.U / consts.a),
    )

    la = abs(l_p)
    monomials = [q1**nu * q2 ** (la - nu) for nu in range(la + 1)]
    coeffs = [binomial(la, nu) for nu in range(la + 1)]
    measure = prod * np.exp(-sq_sum) * np.outer(ws, ws)

    lam = np.empty(n_values.size)
    for i, n in enumerate(n_values):
        acc = np.zeros_like(phase_plus)
        for nu in range(la + 1):
            order = int(n - nu)
            acc += (coeffs[nu] * monomials[nu]) * (
                phase_plus * jv[order] + np.conj(phase_plus) * ju[order]
            )
        lam[i] = float((measure * (acc.real**2 + acc.imag**2)).sum())
    total = lam.sum()
    if not total > 0:
        raise ConfigError("double-Gaussian eigenvalues vanished on the domain")
    return n_values, lam / total


@dataclass(frozen=True)
class ModelComparison:
    """Numeric vs double-Gaussian orbital weights at one separation."""

    d: float
    n_values: np.ndarray
    numeric: np.ndarray
    analytic: np.ndarray

    @property
    def correlation(self) -> float:
        a, b = self.numeric, self.analytic
        a = a - a.mean()
        b = b - b.mean()
        return float((a * b).sum() / math.sqrt((a * a).sum() * (b * b).sum()))

    @property
    def max_abs_deviation(self) -> float:
        return float(np.max(np.abs(self.numeric - self.analytic)))

    @property
    def numeric_peak(self) -> int:
        return int(self.n_values[np.argmax(self.numeric)])

    @property
    def analytic_peak(self) -> int:
        return int(self.n_values[np.argmax(self.analytic)])


def compare_numeric_analytic(setup: OpticalSetup, d_list,
                             n_radial: int = 128, n_phi: int = 1024,
                             n_window: int | None = None) -> list[ModelComparison]:
    """Run both pipelines over separations and collect normalized weights.

    The numeric side decomposes the full sinc kernel; both sides are
    normalized over a common OAM window around l_p / 2.
    """
    from .kernels import build_grids, compute_chi_blocks
    from .schmidt import decompose

    if setup.pump.m_p != 0:
        raise ConfigError(
            "the double-Gaussian orbital eigenvalues are derived for a pump "
            "without radial structure (m_p = 0)"
        )
    l_p = setup.pump.l_p
    if n_window is None:
        lo, hi = default_n_range(l_p, 25)
    else:
        lo, hi = default_n_range(l_p, n_window)
    ns = np.arange(lo, hi + 1)

    d_values = [float(d) for d in d_list]
    base = setup.with_gap(0.0) if setup.geometry.kind != "gap" else setup
    grid, angular = build_grids(base.single_crystal(), n_radial=n_radial,
                                n_phi=n_phi, d_max=max(d_values))
    out = []
    for d in d_values:
        gapped = base.with_gap(d)
        blocks = compute_chi_blocks(gapped, grid, angular)
        spec = decompose(blocks)
        num_all = spec.orbital_eigenvalues()
        sel = [spec.chi.index_of(int(n)) for n in ns]
        numeric = num_all[sel]
        numeric = numeric / numeric.sum()
        n_an, lam_an = analytic_orbital_eigs(gapped, n_range=(lo, hi))
        analytic = lam_an / lam_an.sum()
        out.append(ModelComparison(d=d, n_values=ns.copy(),
                                   numeric=numeric, analytic=analytic))
    return out
