import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holespec.fitting import (
    ExponentialModel, FitError, GaussianMixtureModel, LorentzianModel, damped_least_squares,
    fit_exponential, fit_gaussian_mixture, fit_lorentzian, fit_lorentzian_hole, lorentzian_area,
    numeric_jacobian,
)
from holespec.readout import HoleSpectrum, make_rng

X = np.linspace(-100e6, 100e6, 1024)
LOR = np.array([3e6, 44e6, 3.5e-3, 1e-5])


def lorentz(x, p):
    return LorentzianModel().f(x, p)


def test_exact_guess_does_not_move():
    y = lorentz(X, LOR)
    res = damped_least_squares(LorentzianModel(), X, y, LOR)
    assert res.converged
    assert np.array_equal(res.values, LOR)
    assert res.residual_rms == 0.0


@pytest.mark.parametrize("sign", [1, -1])
def test_lorentzian_recovery_from_perturbed_guess(sign):
    y = lorentz(X, LOR)
    p0 = LOR * (1 + sign * 0.2)
    res = damped_least_squares(LorentzianModel(), X, y, p0)
    assert res.converged
    assert np.allclose(res.values, LOR, rtol=1e-6)


def test_gaussian_mixture_recovery_from_perturbed_guess():
    model = GaussianMixtureModel(2)
    p = np.array([-40e9, 20e9, 1.0, 30e9, 25e9, 0.6, 0.01])
    x = np.linspace(-150e9, 150e9, 800)
    res = damped_least_squares(model, x, model.f(x, p), p * 1.2)
    assert res.converged
    assert np.allclose(res.values, p, rtol=1e-6)


def test_exponential_recovery_from_perturbed_guess():
    t = np.linspace(0, 5e-3, 200)
    p = np.array([2.0, 880e-6, 0.1])
    res = damped_least_squares(ExponentialModel(), t, ExponentialModel().f(t, p), p * 0.8)
    assert res.converged
    assert np.allclose(res.values, p, rtol=1e-6)


@pytest.mark.parametrize("model,x,p", [
    (LorentzianModel(), X, LOR),
    (GaussianMixtureModel(3), np.linspace(-100, 100, 300), np.array([-30, 20, 1, 0, 15, .5, 40, 10, .3, .02])),
    (ExponentialModel(), np.linspace(0, 3, 50), np.array([1.5, 0.9, -0.2])),
])
def test_analytic_jacobian_matches_finite_difference(model, x, p):
    J = model.jac(x, p)
    Jn = numeric_jacobian(model, x, p)
    scale = np.abs(J).max(axis=0)
    assert np.abs(J - Jn).max(axis=0).max() <= 1e-5 * scale.max()
    assert np.all(np.abs(J - Jn).max(axis=0) <= 1e-5 * scale)


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(-5e7, 5e7))
def test_lorentzian_fit_equivariance(c, shift):
    rng = make_rng(7)
    y = lorentz(X, LOR) + 2e-5 * rng.standard_normal(X.size)
    base = fit_lorentzian(X, y)
    scaled = fit_lorentzian(X, c * y)
    moved = fit_lorentzian(X + shift, y)
    for name in ("center", "fwhm"):
        assert scaled[name] == pytest.approx(base[name], rel=1e-10, abs=1e-10 * LOR[1])
    for name in ("amplitude", "baseline"):
        assert scaled[name] == pytest.approx(c * base[name], rel=1e-10, abs=1e-10 * c * LOR[2])
    assert moved["center"] == pytest.approx(base["center"] + shift, rel=1e-10, abs=1e-10 * LOR[1])
    assert moved["fwhm"] == pytest.approx(base["fwhm"], rel=1e-10)


def test_exponential_scale_equivariance():
    t = np.linspace(5e-3, 1.0, 8)
    y = np.exp(-t / 2.1) + 0.01 * np.sin(30 * t)
    a, b = fit_exponential(t, y), fit_exponential(t, 250.0 * y)
    assert b["time_constant"] == pytest.approx(a["time_constant"], rel=1e-10)
    assert b["amplitude"] == pytest.approx(250.0 * a["amplitude"], rel=1e-10)


def test_constant_data_lorentzian_is_degenerate():
    res = fit_lorentzian(X, np.full(X.size, 0.3))
    assert (not res.converged) or res.rank_deficient or abs(res["amplitude"]) < 1e-9


def test_noiseless_hole_recovery():
    hole = HoleSpectrum(X, lorentz(X, [0.0, 44e6, 4e-3, 0.0]), "detuning")
    res = fit_lorentzian_hole(hole, window=None)
    assert res["fwhm"] == pytest.approx(44e6, rel=1e-3)
    assert lorentzian_area(res) == pytest.approx(np.pi / 2 * 4e-3 * 44e6, rel=1e-6)
    with pytest.raises(FitError):
        fit_lorentzian_hole(HoleSpectrum(X[:32], X[:32] * 0, "detuning"))


def test_hole_fwhm_under_noise_monte_carlo():
    amp = 4e-3
    clean = lorentz(X, [0.0, 44e6, amp, 0.0])
    rng = make_rng(11)
    widths = []
    for _ in range(100):
        noise = rng.standard_normal((50, X.size)).mean(axis=0)
        res = fit_lorentzian_hole(HoleSpectrum(X, clean + 0.05 * amp * noise, "detuning"))
        widths.append(res["fwhm"])
    widths = np.array(widths)
    assert np.all(np.abs(widths / 44e6 - 1) <= 0.05)


def test_gaussian_mixture_single_and_pair():
    x = np.linspace(-150e9, 150e9, 1024)
    one = GaussianMixtureModel(1).f(x, [0.0, 50e9, 1.0, 0.0])
    assert fit_gaussian_mixture(x, one, 1)["fwhm_0"] == pytest.approx(50e9, rel=1e-3)
    two = GaussianMixtureModel(2).f(x, [-30e9, 20e9, 1.0, 30e9, 20e9, 0.8, 0.0])
    res = fit_gaussian_mixture(x, two, 2)
    assert res["center_0"] == pytest.approx(-30e9, rel=1e-2)
    assert res["center_1"] == pytest.approx(30e9, rel=1e-2)


def test_exponential_fits():
    t = np.linspace(0, 5e-3, 200)
    res = fit_exponential(t, np.exp(-t / 880e-6))
    assert res["time_constant"] == pytest.approx(880e-6, rel=1e-3)
    d = np.array([5, 10, 20, 50, 100, 200, 500, 1000]) * 1e-3
    assert fit_exponential(d, np.exp(-d / 2.1))["time_constant"] == pytest.approx(2.1, rel=0.02)
    fixed = fit_exponential(d, np.exp(-d / 2.1), offset=0.0)
    assert fixed["time_constant"] == pytest.approx(2.1, rel=1e-6)
    assert fixed.error("offset") == 0.0


def test_exponential_errors():
    t = np.linspace(0, 1, 8)
    with pytest.raises(FitError, match="dynamic range"):
        fit_exponential(t, np.ones(8))
    with pytest.raises(FitError):
        fit_exponential(t[:5], np.exp(-t[:5]))


def test_separates_room_and_low_temperature_lifetimes():
    t = np.linspace(0, 5e-3, 200)
    rng = make_rng(3)
    fits = {tau: fit_exponential(t, np.exp(-t / tau) + 0.01 * rng.standard_normal(t.size))
            for tau in (822e-6, 880e-6)}
    a, b = fits[822e-6], fits[880e-6]
    gap = b["time_constant"] - a["time_constant"]
    assert gap > 3 * np.hypot(a.error("time_constant"), b.error("time_constant"))


def test_uncertainties_non_negative():
    rng = make_rng(5)
    res = fit_lorentzian(X, lorentz(X, LOR) + 1e-4 * rng.standard_normal(X.size))
    assert np.all(res.stderr >= 0)
    assert res.converged and res.gradient_norm >= 0
