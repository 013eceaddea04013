import hashlib
from importlib import resources

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holespec.photophysics import (
    CMF_SHA256, EmissionBands, asymmetry_ratio, cie_xy, emission_fractions,
    intrinsic_quantum_yield, load_cmf, radiative_lifetime, sensitization_efficiency,
    spectral_locus, synthetic_emission_spectrum,
)

# J4, J5, J6 fractions 0.26, 0.033, 0.075 with I2/I1 = 7.6: total T solves T = 27.8 + 0.368 T
T_TOTAL = 27.8 / 0.632
BANDS = EmissionBands((1.0, 3.0, 22.8, 1.0, 0.26 * T_TOTAL, 0.033 * T_TOTAL, 0.075 * T_TOTAL))


def test_radiative_lifetime():
    assert radiative_lifetime(14.65, 1.5, 22.65) == pytest.approx(893e-6, rel=1e-3)
    with pytest.raises(ValueError):
        radiative_lifetime(14.65, 0.0, 22.65)


def test_quantum_yield_and_sensitisation():
    assert intrinsic_quantum_yield(822e-6, 893e-6) == pytest.approx(0.920, abs=5e-4)
    assert intrinsic_quantum_yield(880e-6, 893e-6) == pytest.approx(0.985, abs=5e-4)
    assert intrinsic_quantum_yield(1e-3, 1e-3) == 1.0
    with pytest.raises(ValueError):
        intrinsic_quantum_yield(900e-6, 893e-6)
    assert sensitization_efficiency(0.38, 0.920) == pytest.approx(0.413, abs=5e-4)
    assert sensitization_efficiency(0.5, 0.5) == 1.0
    with pytest.raises(ValueError):
        sensitization_efficiency(0.5, 0.4)
    with pytest.raises(ValueError):
        sensitization_efficiency(0.0, 0.0)


@given(st.floats(1e-5, 1e-3), st.floats(0.0, 1.0), st.floats(1.001, 5.0))
def test_yield_closure(tau_obs, frac, stretch):
    tau_rad = tau_obs * stretch
    q_eu = intrinsic_quantum_yield(tau_obs, tau_rad)
    q_tot = frac * q_eu
    assert sensitization_efficiency(q_tot, q_eu) * q_eu == pytest.approx(q_tot, rel=1e-12, abs=1e-15)


@given(st.floats(1, 100), st.floats(1, 3), st.floats(1, 50), st.floats(1.01, 2))
def test_radiative_lifetime_decreasing(a, n, r, k):
    base = radiative_lifetime(a, n, r)
    assert radiative_lifetime(a * k, n, r) < base
    assert radiative_lifetime(a, n * k, r) < base
    assert radiative_lifetime(a, n, r * k) < base


def test_band_ratios():
    fr = emission_fractions(BANDS)
    assert fr[4:] == pytest.approx([0.26, 0.033, 0.075], rel=1e-12)
    assert fr.sum() == pytest.approx(1.0, abs=1e-12)
    assert asymmetry_ratio(BANDS) == pytest.approx(7.6)
    assert asymmetry_ratio(EmissionBands((0, 1, 0, 0, 0, 0, 0))) == 0
    assert np.allclose(emission_fractions(EmissionBands((1,) * 7)), 1 / 7)
    one = emission_fractions(EmissionBands((0, 0, 5, 0, 0, 0, 0)))
    assert one[2] == 1 and one.sum() == 1
    with pytest.raises(ValueError):
        emission_fractions(EmissionBands((0,) * 7))
    with pytest.raises(ValueError):
        asymmetry_ratio(EmissionBands((1, 0, 1, 0, 0, 0, 0)))
    with pytest.raises(ValueError):
        EmissionBands((1, 2, 3))


@given(st.floats(1e-3, 1e3))
def test_fraction_scale_invariance(c):
    scaled = EmissionBands(tuple(c * v for v in BANDS.intensities))
    assert np.allclose(emission_fractions(scaled), emission_fractions(BANDS), rtol=1e-12)


def test_cmf_table_checksum_and_grid():
    raw = resources.files("holespec.data").joinpath("cie1931_2deg.csv").read_bytes()
    assert hashlib.sha256(raw).hexdigest() == CMF_SHA256
    lam, xb, yb, zb = load_cmf()
    assert lam[0] == 380 and lam[-1] == 780 and np.all(np.diff(lam) == 1)
    # photopic luminosity peaks at 555 nm with unit value
    assert lam[np.argmax(yb)] == 555 and yb.max() == pytest.approx(1.0, abs=1e-3)


def test_equal_energy_white():
    wl = np.arange(380.0, 781.0)
    x, y = cie_xy(wl, np.ones_like(wl))
    assert abs(x - 1 / 3) <= 0.002 and abs(y - 1 / 3) <= 0.002


def test_monochromatic_line_hits_locus():
    wl = np.arange(380.0, 781.0)
    line = np.where(wl == 616.0, 1.0, 0.0)
    assert cie_xy(wl, line) == pytest.approx(spectral_locus(616), rel=1e-12)


def test_eu_like_spectrum_is_deep_red():
    x, y = cie_xy(*synthetic_emission_spectrum(BANDS))
    assert x > 0.60 and y < 0.38


@given(st.floats(1e-6, 1e6))
def test_cie_scale_invariance(c):
    wl, v = synthetic_emission_spectrum(BANDS)
    assert cie_xy(wl, c * v) == pytest.approx(cie_xy(wl, v), rel=1e-12)


def test_cie_input_checks():
    wl = np.arange(500.0, 700.0)
    with pytest.raises(ValueError):
        cie_xy(wl, np.ones_like(wl))
    with pytest.raises(ValueError):
        cie_xy(wl, np.zeros_like(wl))
    with pytest.raises(ValueError):
        cie_xy(wl, -np.ones_like(wl))
