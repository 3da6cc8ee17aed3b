"""Physical parameters: pump beam, crystal geometry and dispersion.

Dispersion models
-----------------
``bbo_air``
    Crystal index from the ordinary-ray BBO Sellmeier fit of Eimerl et
    al. (J. Appl. Phys. 62, 1968 (1987)),

        n_o^2 = 2.7405 + 0.0184 / (lam^2 - 0.0179) - 0.0155 lam^2

    with lam in micrometres, valid over the BBO transparency window
    (0.2-2.5 um).  Air indices from the revised Edlen equation (Birch &
    Downs, Metrologia 30, 155 (1993)) for standard dry air at 15 degC,
    101.325 kPa, 450 ppm CO2,

        (n - 1) 1e8 = 8342.54 + 2406147/(130 - s^2) + 15998/(38.9 - s^2)

    with s the vacuum wavenumber in 1/um (valid 0.23-1.69 um).
``vacuum``
    All air indices equal to 1 (no gap phase at all).
``manual``
    Like ``bbo_air`` but with the pump/signal air-index difference
    pinned to a user-supplied value.

Conventions baked in here: the process is degenerate type-I, so
lambda_s = 2 lambda_p and the signal and idler indices are identical;
the pump wavenumber is fixed by perfect collinear phase matching,
k_p = 2 k_s, so the pump's extraordinary index never enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ConfigError

# Default pinned air-index difference for the `manual` model, chosen so
# the two-crystal fringe pattern has its first dark fringe at the
# documented reference position (see interferometer module tests).
DEFAULT_MANUAL_DELTA_N = 1.0016e-5

_BBO_RANGE_UM = (0.2, 2.5)
_EDLEN_RANGE_UM = (0.23, 1.69)


@dataclass(frozen=True)
class PumpBeam:
    """Laguerre-Gaussian pump: OAM number, radial number, waist and wavelength."""

    l_p: int
    m_p: int
    w0: float
    lambda_p: float

    def __post_init__(self):
        if int(self.l_p) != self.l_p:
            raise ConfigError("pump OAM number l_p must be an integer")
        if self.m_p < 0 or int(self.m_p) != self.m_p:
            raise ConfigError("pump radial number m_p must be a non-negative integer")
        if not self.w0 > 0:
            raise ConfigError("pump waist w0 must be positive")
        if not self.lambda_p > 0:
            raise ConfigError("pump wavelength must be positive")

    @property
    def lambda_s(self) -> float:
        """Degenerate signal/idler wavelength, 2 * lambda_p."""
        return 2.0 * self.lambda_p


@dataclass(frozen=True)
class Geometry:
    """Crystal arrangement: single crystal, gapped pair, or compensated pair with Dove prism.

    ``L`` is the length of one crystal.  ``d`` is the air gap of the
    two-crystal setup; ``theta`` the Dove-prism rotation angle of the
    diffraction-compensated interferometer.
    """

    kind: str
    L: float
    d: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("single", "gap", "dove"):
            raise ConfigError(f"unknown geometry kind {self.kind!r}")
        if not self.L > 0:
            raise ConfigError("crystal length L must be positive")
        if self.d < 0:
            raise ConfigError("gap length d must be non-negative")

    @classmethod
    def single(cls, L: float) -> "Geometry":
        return cls(kind="single", L=L)

    @classmethod
    def gap(cls, L: float, d: float) -> "Geometry":
        return cls(kind="gap", L=L, d=d)

    @classmethod
    def dove(cls, L: float, theta: float) -> "Geometry":
        return cls(kind="dove", L=L, theta=theta)


@dataclass(frozen=True)
class DispersionTable:
    """Refractive indices and wavenumbers entering the longitudinal kernels."""

    n_s_crystal: float
    n_p_air: float
    n_s_air: float
    n_i_air: float
    delta_n: float
    k_p: float
    k_s: float
    k_s_air: float

    def __post_init__(self):
        for name in ("n_s_crystal", "n_p_air", "n_s_air", "n_i_air"):
            val = getattr(self, name)
            if not (1.0 - 1e-3 < val < 3.0):
                raise ConfigError(f"refractive index {name}={val} outside sane range")
        if self.n_s_air != self.n_i_air:
            raise ConfigError("degenerate process requires n_s_air == n_i_air")


def bbo_ordinary_index(wavelength: float) -> float:
    """Ordinary-ray BBO index at the given vacuum wavelength [m]."""
    lam_um = wavelength * 1e6
    if not (_BBO_RANGE_UM[0] <= lam_um <= _BBO_RANGE_UM[1]):
        raise ConfigError(
            f"wavelength {lam_um:.4g} um outside BBO Sellmeier validity "
            f"{_BBO_RANGE_UM[0]}-{_BBO_RANGE_UM[1]} um"
        )
    lam2 = lam_um * lam_um
    return math.sqrt(2.7405 + 0.0184 / (lam2 - 0.0179) - 0.0155 * lam2)


def air_index(wavelength: float) -> float:
    """Standard-air index (15 degC, 101.325 kPa, dry) at vacuum wavelength [m]."""
    lam_um = wavelength * 1e6
    if not (_EDLEN_RANGE_UM[0] <= lam_um <= _EDLEN_RANGE_UM[1]):
        raise ConfigError(
            f"wavelength {lam_um:.4g} um outside Edlen air-model validity "
            f"{_EDLEN_RANGE_UM[0]}-{_EDLEN_RANGE_UM[1]} um"
        )
    s2 = (1.0 / lam_um) ** 2
    return 1.0 + 1e-8 * (8342.54 + 2406147.0 / (130.0 - s2) + 15998.0 / (38.9 - s2))


def build_dispersion(pump: PumpBeam, model: str = "bbo_air",
                     delta_n_manual: float | None = None) -> DispersionTable:
    """Dispersion table for a pump beam under the requested model.

    The signal wavelength is 2 lambda_p (degenerate type-I) and the pump
    wavenumber follows the perfect-collinear-matching convention
    k_p = 2 k_s.
    """
    lam_s = pump.lambda_s
    n_s_crystal = bbo_ordinary_index(lam_s)
    k_s = 2.0 * math.pi * n_s_crystal / lam_s
    k_p = 2.0 * k_s

    if model == "vacuum":
        n_p_air = n_s_air = 1.0
    elif model == "bbo_air":
        n_p_air = air_index(pump.lambda_p)
        n_s_air = air_index(lam_s)
    elif model == "manual":
        dn = DEFAULT_MANUAL_DELTA_N if delta_n_manual is None else delta_n_manual
        n_s_air = air_index(lam_s)
        n_p_air = n_s_air + dn
    else:
        raise ConfigError(f"unknown dispersion model {model!r}")

    return DispersionTable(
        n_s_crystal=n_s_crystal,
        n_p_air=n_p_air,
        n_s_air=n_s_air,
        n_i_air=n_s_air,
        delta_n=n_p_air - n_s_air,
        k_p=k_p,
        k_s=k_s,
        k_s_air=2.0 * math.pi * n_s_air / lam_s,
    )


@dataclass(frozen=True)
class OpticalSetup:
    """Full physical description of one run: pump, geometry, dispersion."""

    pump: PumpBeam
    geometry: Geometry
    dispersion: DispersionTable
    dispersion_model: str = "bbo_air"

    def with_geometry(self, geometry: Geometry) -> "OpticalSetup":
        return replace(self, geometry=geometry)

    def with_gap(self, d: float) -> "OpticalSetup":
        return self.with_geometry(Geometry.gap(self.geometry.L, d))

    def single_crystal(self) -> "OpticalSetup":
        return self.with_geometry(Geometry.single(self.geometry.L))

    def fingerprint(self) -> dict:
        """Deterministic, JSON-serializable identity of the physics."""
        return {
            "l_p": int(self.pump.l_p),
            "m_p": int(self.pump.m_p),
            "w0": repr(self.pump.w0),
            "lambda_p": repr(self.pump.lambda_p),
            "geometry": self.geometry.kind,
            "L": repr(self.geometry.L),
            "d": repr(self.geometry.d),
            "theta": repr(self.geometry.theta),
            "model": self.dispersion_model,
            "delta_n": repr(self.dispersion.delta_n),
            "n_s_crystal": repr(self.dispersion.n_s_crystal),
        }


def make_setup(l_p: int, m_p: int, w0: float, lambda_p: float, geometry: Geometry,
               dispersion: str = "bbo_air", delta_n_manual: float | None = None) -> OpticalSetup:
    """Convenience constructor assembling pump, dispersion and geometry."""
    pump = PumpBeam(l_p=l_p, m_p=m_p, w0=w0, lambda_p=lambda_p)
    table = build_dispersion(pump, model=dispersion, delta_n_manual=delta_n_manual)
    return OpticalSetup(pump=pump, geometry=geometry, dispersion=table,
                        dispersion_model=dispersion)


def external_angle(q, k_s_air: float):
    """Paraxial external emission angle Theta = q / k_s_air for q >= 0."""
    return q / k_s_air


def transverse_wavenumber(theta, k_s_air: float):
    """Inverse of external_angle."""
    return theta * k_s_air
