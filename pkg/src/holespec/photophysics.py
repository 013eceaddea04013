"""
Closed-form photophysics of the Eu(III) 5D0 emitter: radiative lifetime,
intrinsic quantum yield, sensitisation efficiency, band ratios and CIE 1931
chromaticity.
"""

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

CMF_FILE = "cie1931_2deg.csv"
CMF_SHA256 = "9cabafb0515b1645e97e57b61ad39a9f82f4e405e146c9fab11d5e9b878f471b"
CMF_RANGE = (380, 780)
CIE_REQUIRED_SPAN = (400.0, 750.0)

A_MD_DEFAULT = 14.65
REFRACTIVE_INDEX_DEFAULT = 1.5

# nominal 5D0 -> 7F_J band positions (nm) used for synthetic spectra
BAND_CENTERS_NM = (580.0, 592.0, 616.0, 652.0, 700.0, 745.0, 820.0)


@dataclass(frozen=True)
class EmissionBands:
    """Integrated 5D0 -> 7F_J intensities for J = 0..6, any consistent unit."""

    intensities: tuple

    def __post_init__(self):
        arr = np.asarray(self.intensities, dtype=float)
        if arr.shape != (7,):
            raise ValueError(f"need 7 band intensities (J=0..6), got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ValueError("band intensities must be finite and >= 0")
        object.__setattr__(self, "intensities", tuple(float(v) for v in arr))

    def __getitem__(self, j):
        return self.intensities[j]

    @property
    def total(self):
        return float(sum(self.intensities))

    @property
    def i_tot_over_i_md(self):
        if self[1] <= 0:
            raise ValueError("magnetic-dipole band (J=1) must be > 0")
        return self.total / self[1]


@dataclass(frozen=True)
class PhotophysicalParams:
    a_md: float = A_MD_DEFAULT
    n: float = REFRACTIVE_INDEX_DEFAULT
    tau_obs: float = 822e-6
    tau_rad: float = float("nan")
    q_tot: float = float("nan")
    q_eu: float = float("nan")
    eta_sens: float = float("nan")


def _positive(name, v):
    v = float(v)
    if not (np.isfinite(v) and v > 0):
        raise ValueError(f"{name} must be > 0, got {v!r}")
    return v


def radiative_lifetime(a_md, n, i_tot_over_i_md):
    """tau_rad = 1 / (A_MD * n^3 * I_tot / I_MD)."""
    a = _positive("A_MD", a_md)
    n = _positive("n", n)
    r = _positive("I_tot/I_MD", i_tot_over_i_md)
    return 1.0 / (a * n ** 3 * r)


def intrinsic_quantum_yield(tau_obs, tau_rad):
    """Q_Eu = tau_obs / tau_rad; an observed lifetime above tau_rad is unphysical."""
    t_obs = _positive("tau_obs", tau_obs)
    t_rad = _positive("tau_rad", tau_rad)
    if t_obs > t_rad:
        raise ValueError(f"tau_obs ({t_obs!r}) exceeds tau_rad ({t_rad!r})")
    return t_obs / t_rad


def sensitization_efficiency(q_tot, q_eu):
    """eta_sens = Q_tot / Q_Eu."""
    q_eu = float(q_eu)
    q_tot = float(q_tot)
    if not q_eu > 0:
        raise ValueError(f"Q_Eu must be > 0, got {q_eu!r}")
    if not 0 <= q_tot <= q_eu:
        raise ValueError(f"Q_tot must lie in [0, Q_Eu={q_eu!r}], got {q_tot!r}")
    return q_tot / q_eu


def asymmetry_ratio(bands):
    """I(7F2) / I(7F1)."""
    if bands[1] <= 0:
        raise ValueError("asymmetry ratio needs I(7F1) > 0")
    return bands[2] / bands[1]


def emission_fractions(bands):
    total = bands.total
    if not total > 0:
        raise ValueError("total emission intensity is zero")
    return np.array(bands.intensities) / total


def photophysics_summary(a_md, n, i_tot_over_i_md, tau_obs, q_tot):
    tau_rad = radiative_lifetime(a_md, n, i_tot_over_i_md)
    q_eu = intrinsic_quantum_yield(tau_obs, tau_rad)
    return PhotophysicalParams(a_md, n, tau_obs, tau_rad, q_tot, q_eu,
                               sensitization_efficiency(q_tot, q_eu))


@lru_cache(maxsize=1)
def load_cmf():
    """
    CIE 1931 2-degree colour-matching functions, 380-780 nm in 1 nm steps.

    Returns (wavelength_nm, xbar, ybar, zbar). The file checksum is verified.
    """
    raw = resources.files("holespec.data").joinpath(CMF_FILE).read_bytes()
    digest = hashlib.sha256(raw).hexdigest()
    if digest != CMF_SHA256:
        raise RuntimeError(f"{CMF_FILE} checksum mismatch: {digest}")
    rows = [line.split(",") for line in raw.decode().strip().splitlines()[1:]]
    data = np.array(rows, dtype=float)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3]


def tristimulus(wavelength_nm, values):
    """X, Y, Z by trapezoid integration on the CMF grid; the spectrum is
    linearly interpolated onto it and taken as zero outside its own span."""
    wl = np.asarray(wavelength_nm, dtype=float)
    v = np.asarray(values, dtype=float)
    if wl.shape != v.shape or wl.ndim != 1 or wl.size < 2:
        raise ValueError("wavelength and values must be 1-D arrays of equal length")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("spectrum values must be finite and >= 0")
    order = np.argsort(wl)
    wl, v = wl[order], v[order]
    covers = wl[0] <= CIE_REQUIRED_SPAN[0] and wl[-1] >= CIE_REQUIRED_SPAN[1]
    if not covers and (v[0] > 0 or v[-1] > 0):
        raise ValueError(
            f"spectrum must span {CIE_REQUIRED_SPAN} nm or fall to zero at its ends")
    lam, xb, yb, zb = load_cmf()
    s = np.interp(lam, wl, v, left=0.0, right=0.0)
    return tuple(float(np.trapezoid(s * cmf, lam)) for cmf in (xb, yb, zb))


def cie_xy(wavelength_nm, values):
    """CIE 1931 (x, y) chromaticity of an emission spectrum."""
    X, Y, Z = tristimulus(wavelength_nm, values)
    total = X + Y + Z
    if not total > 0:
        raise ValueError("spectrum has no weight inside the CMF range")
    return X / total, Y / total


def cie_xy_spectrum(spectrum):
    if spectrum.axis_kind != "wavelength":
        raise ValueError("cie_xy needs a spectrum over wavelength (nm)")
    return cie_xy(spectrum.axis, spectrum.values)


def spectral_locus(wavelength_nm):
    """Chromaticity of a monochromatic line straight from the CMF table row."""
    lam, xb, yb, zb = load_cmf()
    i = np.flatnonzero(lam == float(wavelength_nm))
    if i.size != 1:
        raise ValueError(f"{wavelength_nm} nm is not a CMF table row")
    X, Y, Z = xb[i[0]], yb[i[0]], zb[i[0]]
    return X / (X + Y + Z), Y / (X + Y + Z)


def synthetic_emission_spectrum(bands, wavelength_nm=None, fwhm_nm=4.0, centers_nm=BAND_CENTERS_NM):
    """Gaussian bands at nominal 7F_J positions, each with its integrated intensity."""
    wl = np.arange(360.0, 900.0, 0.1) if wavelength_nm is None else np.asarray(wavelength_nm, float)
    sigma = fwhm_nm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    out = np.zeros_like(wl)
    for inten, c in zip(bands.intensities, centers_nm):
        out += inten * np.exp(-0.5 * ((wl - c) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    return wl, out
