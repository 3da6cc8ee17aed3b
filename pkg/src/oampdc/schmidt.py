"""Schmidt decomposition of the OAM-resolved kernels and gain weighting.

Each Fourier block chi_n(q_s, q_i) is decomposed on the quadrature grid
as a singular value decomposition of

    M_n[i, j] = chi_n(q_i, q_j) sqrt(q_i q_j) sqrt(w_i w_j),

so that lambda_{mn} = s_m^2 and the paired radial mode functions come
from the singular vectors with the quadrature weights divided back out.
The per-block mode count keeps every singular value above 1e-10 of the
block maximum; the discarded remainder is quadrature noise.

Gain enters through the Bogoliubov solution of the parametric process:
every Schmidt mode is squeezed independently, giving mean photon numbers
Lambda_{mn} = sinh^2(G sqrt(lambda_{mn})) and the renormalized weights
Lambda'_{mn} that describe the mode content of the bright output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .kernels import ChiBlockSet

_SINGULAR_VALUE_CUT = 1e-10


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Eigenvalue tensor and mode tables of one decomposition.

    Arrays are padded along the mode axis to the largest per-block count;
    padded entries have lambda = 0 and zero mode vectors.  ``counts[k]``
    gives the number of retained modes of block ``n_values[k]``.
    """

    chi: ChiBlockSet
    n_values: np.ndarray
    lam: np.ndarray      # (K, M) Schmidt eigenvalues, descending per block
    u: np.ndarray        # (K, N, M) signal radial modes u_{mn}(q)
    v: np.ndarray        # (K, N, M) idler radial modes v_{mn}(q)
    counts: np.ndarray   # (K,) retained modes per block

    @property
    def setup(self):
        return self.chi.setup

    @property
    def grid(self):
        return self.chi.grid

    @property
    def mode_mask(self) -> np.ndarray:
        m = np.arange(self.lam.shape[1])
        return m[None, :] < self.counts[:, None]

    def index_of(self, n: int) -> int:
        return self.chi.index_of(n)

    def total(self) -> float:
        return float(self.lam.sum())

    def orbital_eigenvalues(self) -> np.ndarray:
        """Probability of OAM n in the signal field: sum_m lambda_{mn}."""
        return self.lam.sum(axis=1)

    def schmidt_number(self) -> float:
        lam = self.lam / self.lam.sum()
        return 1.0 / float((lam * lam).sum())


def decompose(chi: ChiBlockSet) -> SchmidtSpectrum:
    """Per-block SVD of a ChiBlockSet (see module docstring)."""
    grid = chi.grid
    sqw = np.sqrt(grid.nodes * grid.weights)
    n = grid.n
    k_blocks = chi.n_values.size

    svals: list[np.ndarray] = []
    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    counts = np.empty(k_blocks, dtype=int)
    for k in range(k_blocks):
        mat = chi.blocks[k] * sqw[:, None] * sqw[None, :]
        try:
            u_mat, s, vh = np.linalg.svd(mat)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"SVD failed for OAM block n = {chi.n_values[k]}"
            ) from exc
        keep = int(np.count_nonzero(s > _SINGULAR_VALUE_CUT * s[0])) if s[0] > 0 else 0
        keep = max(keep, 1)
        counts[k] = keep
        svals.append(s[:keep])
        us.append(u_mat[:, :keep])
        vs.append(vh[:keep, :].T)

    m_max = int(counts.max())
    lam = np.zeros((k_blocks, m_max))
    u = np.zeros((k_blocks, n, m_max), dtype=complex)
    v = np.zeros((k_blocks, n, m_max), dtype=complex)
    inv_sqw = 1.0 / sqw
    for k in range(k_blocks):
        m = counts[k]
        lam[k, :m] = svals[k] ** 2
        uk = us[k] * inv_sqw[:, None]
        vk = vs[k] * inv_sqw[:, None]
        # joint phase convention: largest-|u| sample real positive
        imax = np.argmax(np.abs(uk), axis=0)
        ph = uk[imax, np.arange(m)]
        ph = np.where(np.abs(ph) > 0, ph / np.abs(ph), 1.0)
        u[k, :, :m] = uk * np.conj(ph)[None, :]
        v[k, :, :m] = vk * ph[None, :]
    return SchmidtSpectrum(chi=chi, n_values=chi.n_values.copy(), lam=lam,
                           u=u, v=v, counts=counts)


@dataclass(frozen=True)
class WeightedSpectrum:
    """Gain-weighted eigenvalues of a SchmidtSpectrum.

    Lambda = sinh^2(G sqrt(lambda)), Lambda_tilde = cosh^2(G sqrt(lambda)),
    Lambda_prime = Lambda / sum(Lambda) (the lambda themselves at G = 0),
    K = 1 / sum(Lambda_prime^2).
    """

    spectrum: SchmidtSpectrum
    gain: float
    Lambda: np.ndarray
    Lambda_tilde: np.ndarray
    Lambda_prime: np.ndarray
    K: float

    @property
    def n_values(self) -> np.ndarray:
        return self.spectrum.n_values

    def total(self) -> float:
        """Total signal photon number sum_{mn} Lambda_{mn}."""
        return float(self.Lambda.sum())


def weight(spectrum: SchmidtSpectrum, gain: float) -> WeightedSpectrum:
    """Attach Bogoliubov gain weights to a Schmidt spectrum."""
    if gain < 0:
        raise ValueError("gain must be non-negative")
    root = np.sqrt(spectrum.lam)
    mask = spectrum.mode_mask
    big = np.sinh(gain * root) ** 2
    big[~mask] = 0.0
    tilde = np.cosh(gain * root) ** 2
    tilde[~mask] = 0.0
    total = big.sum()
    if gain == 0 or total == 0.0:
        # limit value: renormalized weights reduce to the Schmidt eigenvalues
        prime = spectrum.lam / spectrum.lam.sum()
    else:
        prime = big / total
    k = 1.0 / float((prime * prime).sum())
    return WeightedSpectrum(spectrum=spectrum, gain=gain, Lambda=big,
                            Lambda_tilde=tilde, Lambda_prime=prime, K=k)


@dataclass(frozen=True)
class IntensityCurve:
    """Azimuth-independent mean photon number density over radial q."""

    q: np.ndarray
    theta: np.ndarray
    values: np.ndarray


def intensity_spectrum(weighted: WeightedSpectrum) -> IntensityCurve:
    """<N(q)> = (1/2pi) sum_{mn} |u_{mn}(q)|^2 / q * Lambda_{mn}."""
    spec = weighted.spectrum
    dens = np.einsum("knm,km->n", np.abs(spec.u) ** 2, weighted.Lambda)
    q = spec.grid.nodes
    vals = dens / (2.0 * np.pi * q)
    theta = q / spec.setup.dispersion.k_s_air
    return IntensityCurve(q=q.copy(), theta=theta, values=vals)


def integral_intensity(weighted: WeightedSpectrum) -> float:
    """Total signal photon number; the q-integral collapses to sum Lambda."""
    return weighted.total()


def quadrature_integral_intensity(weighted: WeightedSpectrum) -> float:
    """Cross-check of integral_intensity by explicit 2D quadrature."""
    curve = intensity_spectrum(weighted)
    grid = weighted.spectrum.grid
    return float(2.0 * np.pi * np.sum(grid.weights * grid.nodes * curve.values))


def orbital_eigenvalues(spectrum: SchmidtSpectrum) -> tuple[np.ndarray, np.ndarray]:
    """(n values, script-Lambda_n = sum_m lambda_{mn})."""
    return spectrum.n_values.copy(), spectrum.orbital_eigenvalues()


@dataclass(frozen=True)
class ModeProfile:
    """Radial intensity profile of one Schmidt mode, plus its helical phase."""

    m: int
    n: int
    q: np.ndarray
    theta: np.ndarray
    intensity: np.ndarray   # |u_{mn}(q)|^2 / q, integrates to 1 against q dq dphi / 2pi
    mode_phase: np.ndarray  # arg u_{mn}(q); the azimuthal factor is exp(-i n phi)


def mode_profile(spectrum: SchmidtSpectrum, m: int, n: int) -> ModeProfile:
    k = spectrum.index_of(n)
    if not (0 <= m < spectrum.counts[k]):
        raise IndexError(
            f"mode index m = {m} out of range for block n = {n} "
            f"({spectrum.counts[k]} modes retained)"
        )
    u = spectrum.u[k, :, m]
    q = spectrum.grid.nodes
    return ModeProfile(
        m=m,
        n=n,
        q=q.copy(),
        theta=q / spectrum.setup.dispersion.k_s_air,
        intensity=np.abs(u) ** 2 / q,
        mode_phase=np.angle(u),
    )


def export_mode_profiles(spectrum: SchmidtSpectrum,
                         indices: list[tuple[int, int]]) -> list[ModeProfile]:
    """Profiles |u_{mn}|^2/q for the requested (m, n) pairs."""
    return [mode_profile(spectrum, m, n) for m, n in indices]


def reconstruct_block(spectrum: SchmidtSpectrum, n: int) -> np.ndarray:
    """Rebuild chi_n from the decomposition (SVD round-trip check)."""
    k = spectrum.index_of(n)
    m = spectrum.counts[k]
    root = np.sqrt(spectrum.lam[k, :m])
    q = spectrum.grid.nodes
    us = spectrum.u[k, :, :m] / np.sqrt(q)[:, None]
    vs = spectrum.v[k, :, :m] / np.sqrt(q)[:, None]
    return (us * root[None, :]) @ vs.T
