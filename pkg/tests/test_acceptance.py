"""
Acceptance criteria, one test per criterion. Each test records a
``criterion N ... PASS|FAIL`` line, printed in the terminal summary.
"""

import time

import numpy as np
import pytest

from holespec.config import build_sequence
from holespec.dynamics import LaserPulse, RelaxationParams, evolve, rate_generator, relaxation_generator
from holespec.expm import expm_batch
from holespec.fitting import (
    LorentzianModel, damped_least_squares, fit_exponential, fit_gaussian_mixture,
    fit_lorentzian_hole, numeric_jacobian,
)
from holespec.levels import HyperfineManifold, InhomogeneousProfile, build_transition_table, single_isotope_ensemble
from holespec.photophysics import (
    EmissionBands, cie_xy, intrinsic_quantum_yield, radiative_lifetime, sensitization_efficiency,
    synthetic_emission_spectrum,
)
from holespec.readout import hole_decay_series, hole_spectrum, simulate_ple
from holespec.spectro import (
    delta_lambda_to_delta_nu, homogeneous_from_hole, t2_from_linewidth, wavenumber_to_frequency,
)

from conftest import ACCEPTANCE_LINES, DECAY_DELAYS, make_experiment

DESK_SECONDS = 60.0


def record(criterion, checks):
    """checks: list of (label, ok, detail). Records one line per criterion and asserts."""
    ok = all(c[1] for c in checks)
    detail = "; ".join(f"{label}: {d}{'' if good else ' [FAIL]'}" for label, good, d in checks)
    ACCEPTANCE_LINES.append(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_1_hole_width(ref_cfg):
    t0 = time.perf_counter()
    run = make_experiment(ref_cfg).run()
    fit = fit_lorentzian_hole(run.hole, window=ref_cfg.fit.hole_window)
    width = fit["fwhm"]
    gamma_h = homogeneous_from_hole(width, ref_cfg.dynamics.gamma_laser_hz)
    t2 = t2_from_linewidth(gamma_h)
    elapsed = time.perf_counter() - t0
    record(1, [
        ("hole fwhm", 42e6 <= width <= 46e6, f"{width / 1e6:.2f} MHz in [42, 46]"),
        ("gamma_h", 21e6 <= gamma_h <= 23e6, f"{gamma_h / 1e6:.2f} MHz in [21, 23]"),
        ("T2", 13.8e-9 <= t2 <= 15.2e-9, f"{t2 * 1e9:.2f} ns in [13.8, 15.2]"),
        ("converged", fit.converged, str(fit.converged)),
        ("time", elapsed <= DESK_SECONDS, f"{elapsed:.1f} s"),
    ])


def test_criterion_2_hole_decay(ref_cfg, ref_experiment, ref_decay):
    t0 = time.perf_counter()
    clean = fit_exponential(ref_decay.delays, ref_decay.areas, offset=0.0)
    free = fit_exponential(ref_decay.delays, ref_decay.areas)
    # noise: 3 % of the noise-free hole peak, white on each transmission, 50 averages
    sigma = 0.03 * ref_decay.fits[0]["amplitude"]
    noisy_series = hole_decay_series(ref_experiment, DECAY_DELAYS, sigma=sigma, n_average=50,
                                     seed=ref_cfg.sequence.seed)
    noisy = fit_exponential(noisy_series.delays, noisy_series.areas, offset=0.0)
    elapsed = time.perf_counter() - t0
    tc, tf, tn = clean["time_constant"], free["time_constant"], noisy["time_constant"]
    record(2, [
        ("noise-free T1", abs(tc / 2.1 - 1) <= 0.02, f"{tc:.4f} s (2.1 s +/- 2%)"),
        ("noise-free T1, free offset", abs(tf / 2.1 - 1) <= 0.02, f"{tf:.4f} s"),
        ("noisy T1", abs(tn / 2.1 - 1) <= 0.15, f"{tn:.3f} +/- {noisy.error('time_constant'):.3f} s (2.1 s +/- 15%)"),
        ("noisy series time", elapsed <= DESK_SECONDS, f"{elapsed:.1f} s"),
    ])


def test_criterion_3_photophysics_pipeline():
    tau_rad = radiative_lifetime(14.65, 1.5, 22.65)
    q_eu = intrinsic_quantum_yield(822e-6, tau_rad)
    eta = sensitization_efficiency(0.38, q_eu)
    record(3, [
        ("tau_rad", abs(tau_rad / 893e-6 - 1) <= 0.01, f"{tau_rad * 1e6:.1f} us (893 +/- 1%)"),
        ("Q_Eu", abs(q_eu - 0.92) <= 0.01, f"{q_eu:.4f} (0.92 +/- 0.01)"),
        ("eta_sens", abs(eta - 0.41) <= 0.01, f"{eta:.4f} (0.41 +/- 0.01)"),
    ])


def test_criterion_4_inhomogeneous_line(ref_cfg):
    z = HyperfineManifold((0, 0, 0))
    s = np.zeros((3, 3))
    s[0, 0] = 1.0
    table = build_transition_table(z, HyperfineManifold((0, 0, 0), "excited"), s)
    ens = single_isotope_ensemble(InhomogeneousProfile.single(50e9), 400e9, 1201, table)
    axis = np.linspace(-150e9, 150e9, 1024)
    ple = simulate_ple(ens, axis, ref_cfg.dynamics.gamma_h_hz)
    fwhm = fit_gaussian_mixture(axis, ple.values, 1)["fwhm_0"]
    nm = delta_lambda_to_delta_nu(0.06, 580.185)
    k = wavenumber_to_frequency(1.7)
    record(4, [
        ("PLE fwhm", abs(fwhm / 50e9 - 1) <= 0.02, f"{fwhm / 1e9:.3f} GHz (50 +/- 2%)"),
        ("0.06 nm", abs(53.4e9 / nm - 1) <= 1e-3, f"{nm / 1e9:.3f} GHz vs 53.4"),
        ("1.7 cm^-1", abs(50.96e9 / k - 1) <= 1e-3, f"{k / 1e9:.3f} GHz vs 50.96"),
    ])


def _area(hole, fit):
    win = np.abs(hole.axis - fit["center"]) <= fit["fwhm"]
    return np.trapezoid(hole.values[win], hole.axis[win])


def test_criterion_5_erase_and_reburn(ref_cfg):
    t0 = time.perf_counter()
    exp = make_experiment(ref_cfg)
    exp.sequence = build_sequence(ref_cfg, with_erase=True)
    first = exp.run()
    fit1 = fit_lorentzian_hole(first.hole)
    pre = _area(first.hole, fit1)
    # read the erased state without a new burn, against the erased reference
    quiet = exp.sequence.with_burn(saturation=0.0)
    after = exp.run(initial=first.result.final, sequence=quiet)
    ref = exp.run(initial=first.reference_result.final, sequence=quiet)
    post = _area(hole_spectrum(after.burned, ref.burned), fit1)
    second = exp.run(burn_center=5e6, initial=first.result.final)
    fit2 = fit_lorentzian_hole(second.hole)
    step = exp.axis[1] - exp.axis[0]
    elapsed = time.perf_counter() - t0
    record(5, [
        ("residual hole area", abs(post) <= 0.02 * pre, f"{post / pre:.2e} of pre-erase (<= 2%)"),
        ("re-burn center", abs(fit2["center"] - 5e6) <= step, f"{fit2['center'] / 1e6:.3f} MHz (5 MHz +/- {step / 1e6:.3f})"),
        ("re-burn width", abs(fit2["fwhm"] / fit1["fwhm"] - 1) <= 0.05,
         f"{fit2['fwhm'] / 1e6:.2f} vs {fit1['fwhm'] / 1e6:.2f} MHz"),
        ("erase status", first.result.erase_report.status == "ok", first.result.erase_report.status),
        ("time", elapsed <= DESK_SECONDS, f"{elapsed:.1f} s"),
    ])


def test_criterion_6_regime(ref_cfg):
    from holespec.config import regime_report
    r = regime_report(ref_cfg)
    record(6, [
        ("gamma_inh/gamma_h", r.inhomogeneous_ok and abs(r.inhomogeneous_ratio / 2273 - 1) < 1e-3,
         f"{r.inhomogeneous_ratio:.0f}"),
        ("gamma_h/gamma_laser", r.laser_ok and abs(r.laser_ratio - 88) < 1e-9, f"{r.laser_ratio:.1f}"),
        ("T1/tau_exc", r.storage_ok and abs(r.storage_ratio / 2386 - 1) < 1e-3, f"{r.storage_ratio:.0f}"),
        ("all pass", r.passed, str(r.passed)),
    ])


def test_criterion_7_properties(ref_experiment, ref_decay, default_table):
    relax = RelaxationParams(880e-6, 2.1)
    # population conservation through a full reference run
    run = ref_experiment.run()
    cons = max(np.abs(run.result.readout[0].sum(axis=2) - 1).max(),
               np.abs(run.result.final[0].sum(axis=1) - 1).max())
    # matrix exponential vs brute-force Euler (1e6 steps)
    G = rate_generator([3e6], default_table, LaserPulse("burn", 1e-3, 1.0), relax, 22.25e6)[0]
    M = np.eye(6) + 1e-9 * G
    p = np.full(6, 0.0)
    p[:3] = 1 / 3
    p0 = p.copy()
    for _ in range(1_000_000):
        p = M @ p
    euler = np.abs(evolve(p0, G, 1e-3) - p).max()
    # fit round trip from a 20 % perturbed start
    x = np.linspace(-1e8, 1e8, 1024)
    truth = np.array([3e6, 44e6, 3.5e-3, 1e-5])
    res = damped_least_squares(LorentzianModel(), x, LorentzianModel().f(x, truth), truth * 1.2)
    roundtrip = np.abs(res.values / truth - 1).max()
    # finite-difference vs analytic Jacobian
    J = LorentzianModel().jac(x, truth)
    jac = (np.abs(J - numeric_jacobian(LorentzianModel(), x, truth)).max(axis=0) / np.abs(J).max(axis=0)).max()
    # hole-area monotonicity in delay
    mono = bool(np.all(np.diff(ref_decay.areas) <= 0))
    # CIE equal-energy point
    wl = np.arange(380.0, 781.0)
    cx, cy = cie_xy(wl, np.ones_like(wl))
    # determinism under a fixed seed
    a = ref_experiment.noisy_hole(run, 1e-4, 50, seed=9).values
    b = ref_experiment.noisy_hole(run, 1e-4, 50, seed=9).values
    thermal_gen = relaxation_generator(default_table, relax)
    record(7, [
        ("conservation", cons <= 1e-9, f"{cons:.1e}"),
        ("expm vs Euler", euler <= 1e-6, f"{euler:.1e}"),
        ("fit round trip", roundtrip <= 1e-6 and res.converged, f"{roundtrip:.1e}"),
        ("jacobian", jac <= 1e-5, f"{jac:.1e}"),
        ("area monotone", mono, str(mono)),
        ("CIE white", abs(cx - 1 / 3) <= 2e-3 and abs(cy - 1 / 3) <= 2e-3, f"({cx:.4f}, {cy:.4f})"),
        ("determinism", np.array_equal(a, b), str(np.array_equal(a, b))),
        ("generator columns", np.abs(thermal_gen.sum(axis=0)).max() <= 1e-12,
         f"{np.abs(thermal_gen.sum(axis=0)).max():.1e}"),
        ("expm identity", np.abs(expm_batch(np.zeros((6, 6))) - np.eye(6)).max() <= 1e-15, "ok"),
    ])


def test_criterion_8_out_of_reach_items_reported():
    # the absolute chromaticity needs the measured spectrum; only the deep-red region is checked
    t = 27.8 / 0.632
    bands = EmissionBands((1.0, 3.0, 22.8, 1.0, 0.26 * t, 0.033 * t, 0.075 * t))
    x, y = cie_xy(*synthetic_emission_spectrum(bands))
    record(8, [
        ("CIE region (absolute point not reproducible)", x > 0.6 and y < 0.38, f"({x:.4f}, {y:.4f})"),
        ("Q_tot consumed as input, not derived", True, "0.38"),
        ("PLE side peaks qualitative only", True, "covered by three-component PLE property test"),
    ])
