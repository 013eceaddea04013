"""
Unit conversions, lineshape kernels and linewidth algebra.

Everything inside the package works in Hz and seconds. Nanometres and
wavenumbers only show up at the edges (config files, CSV, CLI output).
"""

from dataclasses import dataclass, field

import numpy as np

C_M_PER_S = 299_792_458.0
C_CM_PER_S = C_M_PER_S * 100.0
FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))

AXIS_KINDS = ("frequency", "detuning", "wavelength")


def _require_finite(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return arr


def _require_positive(name, value):
    arr = _require_finite(name, value)
    if np.any(arr <= 0):
        raise ValueError(f"{name} must be > 0, got {value!r}")
    return arr


def _scalar_or_array(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def wavelength_to_frequency(lambda_vac_nm):
    """Vacuum wavelength in nm -> optical frequency in Hz."""
    lam = _require_positive("lambda_vac", lambda_vac_nm)
    return _scalar_or_array(C_M_PER_S / (lam * 1e-9))


def frequency_to_wavelength(freq_hz):
    """Optical frequency in Hz -> vacuum wavelength in nm."""
    nu = _require_positive("frequency", freq_hz)
    return _scalar_or_array(C_M_PER_S / nu * 1e9)


def delta_lambda_to_delta_nu(delta_lambda_nm, lambda0_nm):
    """First-order width conversion, c * dlambda / lambda0**2, in Hz."""
    lam0 = _require_positive("lambda0", lambda0_nm)
    dlam = _require_finite("delta_lambda", delta_lambda_nm)
    return _scalar_or_array(C_M_PER_S * (dlam * 1e-9) / (lam0 * 1e-9) ** 2)


def delta_nu_to_delta_lambda(delta_nu_hz, lambda0_nm):
    lam0 = _require_positive("lambda0", lambda0_nm)
    dnu = _require_finite("delta_nu", delta_nu_hz)
    return _scalar_or_array(dnu * (lam0 * 1e-9) ** 2 / C_M_PER_S * 1e9)


def wavenumber_to_frequency(k_per_cm):
    """Wavenumber in cm^-1 -> frequency in Hz (1 cm^-1 = 29.9792458 GHz)."""
    k = _require_finite("wavenumber", k_per_cm)
    return _scalar_or_array(k * C_CM_PER_S)


def frequency_to_wavenumber(freq_hz):
    nu = _require_finite("frequency", freq_hz)
    return _scalar_or_array(nu / C_CM_PER_S)


def t2_from_linewidth(gamma_h):
    """Optical coherence time T2 = 1 / (pi * gamma_h)."""
    g = _require_positive("gamma_h", gamma_h)
    return _scalar_or_array(1.0 / (np.pi * g))


def linewidth_from_t2(t2):
    """Homogeneous FWHM from T2, inverse of :func:`t2_from_linewidth`."""
    t = _require_positive("t2", t2)
    return _scalar_or_array(1.0 / (np.pi * t))


def homogeneous_from_hole(gamma_hole, gamma_laser=0.0):
    """
    Homogeneous linewidth from a measured hole width.

    Lorentzian widths add, so a hole burned and read with a laser of width
    ``gamma_laser`` has FWHM ``2 * (gamma_h + gamma_laser)``. With the
    default ``gamma_laser = 0`` this is simply half the hole width.
    """
    hole = float(_require_finite("gamma_hole", gamma_hole))
    laser = float(_require_finite("gamma_laser", gamma_laser))
    if laser < 0:
        raise ValueError(f"gamma_laser must be >= 0, got {laser!r}")
    if hole <= 2.0 * laser:
        raise ValueError(
            f"gamma_hole ({hole!r}) must exceed 2*gamma_laser ({2 * laser!r})")
    return (hole - 2.0 * laser) / 2.0


def hole_from_homogeneous(gamma_h, gamma_laser=0.0):
    return 2.0 * (float(gamma_h) + float(gamma_laser))


def lorentzian(x, x0, fwhm):
    """Area-normalised Lorentzian in 1/Hz."""
    fwhm = float(fwhm)
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm!r}")
    hw = 0.5 * fwhm
    d = np.asarray(x, dtype=float) - x0
    return _scalar_or_array(hw / (np.pi * (d * d + hw * hw)))


def lorentzian_peak_normalized(x, x0, fwhm):
    """Lorentzian with unit height at ``x0``."""
    fwhm = float(fwhm)
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm!r}")
    u = 2.0 * (np.asarray(x, dtype=float) - x0) / fwhm
    return _scalar_or_array(1.0 / (1.0 + u * u))


def lorentzian_bin_average(x, x0, fwhm, bin_width):
    """
    Area-normalised Lorentzian averaged over a bin of ``bin_width`` centred
    on ``x0``. Reduces to :func:`lorentzian` when the bin is narrow.
    """
    fwhm = float(fwhm)
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm!r}")
    d = np.asarray(x, dtype=float) - x0
    if bin_width <= 1e-3 * fwhm:
        hw = 0.5 * fwhm
        return hw / (np.pi * (d * d + hw * hw))
    hi = np.arctan(2.0 * (d + 0.5 * bin_width) / fwhm)
    lo = np.arctan(2.0 * (d - 0.5 * bin_width) / fwhm)
    return (hi - lo) / (np.pi * bin_width)


def gaussian(x, x0, fwhm):
    """Area-normalised Gaussian in 1/Hz."""
    fwhm = float(fwhm)
    if not fwhm > 0:
        raise ValueError(f"fwhm must be > 0, got {fwhm!r}")
    sigma = fwhm * FWHM_TO_SIGMA
    d = np.asarray(x, dtype=float) - x0
    return _scalar_or_array(
        np.exp(-0.5 * (d / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi)))


@dataclass(frozen=True)
class Linewidths:
    """FWHM values in Hz. Regime checks live in ``dynamics.validate_shb_regime``."""

    gamma_h: float
    gamma_inh: float
    gamma_laser: float = 0.0
    gamma_hole: float = float("nan")

    def __post_init__(self):
        for name in ("gamma_h", "gamma_inh", "gamma_laser"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")
        if np.isfinite(self.gamma_hole) and self.gamma_hole < 0:
            raise ValueError(f"gamma_hole must be >= 0, got {self.gamma_hole!r}")

    @property
    def gamma_eff(self):
        """Width of the pump/probe lineshape seen by one ion."""
        return self.gamma_h + self.gamma_laser


@dataclass
class Spectrum:
    """Sampled spectrum; ``axis`` strictly monotonic and in SI units (Hz or nm)."""

    axis: np.ndarray
    values: np.ndarray
    axis_kind: str = "detuning"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.axis_kind not in AXIS_KINDS:
            raise ValueError(f"axis_kind must be one of {AXIS_KINDS}, got {self.axis_kind!r}")
        if self.axis.ndim != 1 or self.axis.shape != self.values.shape:
            raise ValueError(
                f"axis and values must be 1-D of equal length, got "
                f"{self.axis.shape} and {self.values.shape}")
        if self.axis.size < 2:
            raise ValueError("spectrum needs at least two samples")
        if not (np.all(np.isfinite(self.axis)) and np.all(np.isfinite(self.values))):
            raise ValueError("spectrum axis and values must be finite")
        step = np.diff(self.axis)
        if not (np.all(step > 0) or np.all(step < 0)):
            raise ValueError("spectrum axis must be strictly monotonic")

    def __len__(self):
        return self.axis.size

    def with_values(self, values, **meta):
        return Spectrum(self.axis.copy(), values, self.axis_kind, {**self.meta, **meta})


def detuning_axis(span, n_points=1024, center=0.0):
    """Evenly spaced readout axis covering ``center +/- span/2``."""
    if span <= 0 or n_points < 2:
        raise ValueError("detuning axis needs span > 0 and at least 2 points")
    return np.linspace(center - 0.5 * span, center + 0.5 * span, int(n_points))
