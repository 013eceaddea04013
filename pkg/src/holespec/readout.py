"""
Spectra from populations: absorption, transmission, corrected hole spectra,
PLE lines, fluorescence decays and hole-area decay series.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import (
    SequenceResult, apply_pulse, erase, run_pulse_sequence, thermal_state, wait,
)
from .fitting import fit_lorentzian_hole, lorentzian_area, lorentzian_area_error
from .levels import N_LEVELS
from .spectro import Spectrum, lorentzian_bin_average

DEFAULT_PEAK_ALPHA = 0.1
LINEAR_ALPHA_MAX = 0.2
MIN_DELAY = 5e-3


@dataclass
class HoleSpectrum(Spectrum):
    """Relative transmission change ``T_burn / T_ref - 1`` versus detuning."""

    burn_frequency: float = 0.0


@dataclass
class DecaySeries:
    delays: np.ndarray
    areas: np.ndarray
    area_errors: np.ndarray = None
    fits: list = field(default_factory=list)

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.areas = np.asarray(self.areas, dtype=float)
        if self.delays.shape != self.areas.shape:
            raise ValueError("delays and areas differ in length")
        if np.any(np.diff(self.delays) <= 0):
            raise ValueError("delays must be strictly increasing")
        if not np.all(np.isfinite(self.areas)):
            raise ValueError("hole areas must be finite")


def _active_offsets(table):
    return table.offsets[table.strengths > 0]


def check_axis_coverage(ensemble, axis):
    """Every axis point must be reachable by every active line of every isotope."""
    lo, hi = ensemble.classes.bounds
    amin, amax = float(np.min(axis)), float(np.max(axis))
    for iso in ensemble.isotopes:
        offs = _active_offsets(iso.table)
        if amin - offs.max() < lo or amax - offs.min() > hi:
            raise ValueError(
                f"axis [{amin:g}, {amax:g}] Hz reaches outside the discretised "
                f"ensemble [{lo:g}, {hi:g}] Hz (plus line offsets)")


def absorption_norm(ensemble):
    """Thermal absorption of the densest class region, so alpha0 is a peak optical depth."""
    cls = ensemble.classes
    dens = cls.weights.max() / cls.bin_width
    per_ion = sum(iso.abundance * iso.table.strengths.sum() / N_LEVELS for iso in ensemble.isotopes)
    return per_ion * dens


def _raw_absorption(det, weights, bin_width, table, ground, axis, gamma):
    """sum_c w_c sum_jk p_gj(c) s_jk K(axis - det_c - offset_jk)."""
    out = np.zeros(axis.size)
    offs = table.offsets
    for j in range(N_LEVELS):
        wp = weights * ground[:, j]
        for k in range(N_LEVELS):
            s = table.strengths[j, k]
            if s == 0:
                continue
            kern = lorentzian_bin_average(axis[:, None], det[None, :] + offs[j, k], gamma, bin_width)
            out += s * (kern @ wp)
    return out


def absorption_spectrum(ensemble, populations, axis, alpha0=DEFAULT_PEAK_ALPHA, gamma=None,
                        readout_freqs=None, gamma_h=None):
    """
    Absorption on ``axis`` from ground populations.

    ``populations`` is a list (one entry per isotope) of either (n_classes, 6)
    arrays or (steps, n_classes, 6) readout snapshots; in the second case
    each axis point uses the snapshot of the readout sub-step nearest to it
    (``readout_freqs`` required). ``alpha0`` is the optical depth of the
    thermal line at its densest point. The probe kernel is an
    area-normalised Lorentzian of FWHM ``gamma`` averaged over each class bin.
    """
    axis = np.asarray(axis, dtype=float)
    if gamma is None:
        gamma = gamma_h
    if gamma is None or not gamma > 0:
        raise ValueError("absorption_spectrum needs a positive kernel width")
    check_axis_coverage(ensemble, axis)
    cls = ensemble.classes
    alpha = np.zeros(axis.size)
    for iso, pops in zip(ensemble.isotopes, populations):
        pops = np.asarray(pops, dtype=float)
        if pops.ndim == 2:
            raw = _raw_absorption(cls.detunings, cls.weights, cls.bin_width, iso.table,
                                  pops[:, :N_LEVELS], axis, gamma)
        else:
            if readout_freqs is None:
                raise ValueError("readout snapshots need readout_freqs")
            freqs = np.asarray(readout_freqs)
            step_of = np.abs(axis[:, None] - freqs[None, :]).argmin(axis=1)
            raw = np.zeros(axis.size)
            for s in np.unique(step_of):
                sel = step_of == s
                raw[sel] = _raw_absorption(cls.detunings, cls.weights, cls.bin_width, iso.table,
                                           pops[s, :, :N_LEVELS], axis[sel], gamma)
        alpha += iso.abundance * raw
    alpha = alpha0 * alpha / absorption_norm(ensemble)
    return Spectrum(axis, np.clip(alpha, 0.0, None), "detuning", {"quantity": "absorption"})


def transmission(absorption, mode="linear"):
    """Thin-sample ``1 - alpha`` or Beer-Lambert ``exp(-alpha)``."""
    a = absorption.values
    if np.any(a < 0):
        raise ValueError("absorption must be >= 0")
    if mode == "linear":
        if a.max() > LINEAR_ALPHA_MAX:
            raise ValueError(
                f"linear transmission needs max alpha <= {LINEAR_ALPHA_MAX}, got {a.max():.3g}")
        t = 1.0 - a
    elif mode == "beer-lambert":
        t = np.exp(-a)
    else:
        raise ValueError(f"unknown transmission mode {mode!r}")
    return absorption.with_values(t, quantity="transmission")


def hole_spectrum(burned, reference, burn_frequency=0.0):
    """Ratio-corrected hole, ``T_burned / T_reference - 1``."""
    if burned.axis.shape != reference.axis.shape or not np.array_equal(burned.axis, reference.axis):
        raise ValueError("burned and reference spectra must share the same axis")
    if np.any(reference.values == 0):
        raise ValueError("reference transmission has zero samples")
    return HoleSpectrum(burned.axis.copy(), burned.values / reference.values - 1.0,
                        burned.axis_kind, {"quantity": "delta_transmission"},
                        burn_frequency=burn_frequency)


def simulate_ple(ensemble, axis, gamma_h, detection_efficiency=1.0):
    """
    PLE intensity of thermal ions versus excitation detuning.

    Proportional to the total excitation rate, i.e. the thermal absorption
    line shape; scaled to ``detection_efficiency`` at the densest point.
    """
    pops = [thermal_state(len(ensemble.classes)) for _ in ensemble.isotopes]
    alpha = absorption_spectrum(ensemble, pops, axis, alpha0=detection_efficiency, gamma=gamma_h)
    return alpha.with_values(alpha.values, quantity="ple")


def simulate_fluorescence_decay(tau_obs, times, amplitude=1.0):
    if not (np.isfinite(tau_obs) and tau_obs > 0):
        raise ValueError(f"tau_obs must be > 0, got {tau_obs!r}")
    t = np.asarray(times, dtype=float)
    return amplitude * np.exp(-t / tau_obs)


def make_rng(seed):
    """PCG64 generator; the documented source of all simulated noise."""
    return np.random.Generator(np.random.PCG64(seed))


def add_noise_and_average(spectrum, sigma, n_average=1, seed=0, rng=None):
    """
    Mean of ``n_average`` copies of ``spectrum`` each with independent
    zero-mean Gaussian noise of std ``sigma``.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    if n_average < 1:
        raise ValueError(f"n_average must be >= 1, got {n_average!r}")
    if sigma == 0:
        return spectrum.with_values(spectrum.values.copy())
    rng = make_rng(seed) if rng is None else rng
    noise = rng.standard_normal((int(n_average), spectrum.values.size)).mean(axis=0)
    return spectrum.with_values(spectrum.values + sigma * noise, n_average=int(n_average))


@dataclass
class SHBRun:
    hole: HoleSpectrum
    burned: Spectrum
    reference: Spectrum
    result: SequenceResult
    reference_result: SequenceResult


@dataclass
class SHBExperiment:
    """
    Everything needed to burn, read and correct one spectral hole.

    ``axis`` is the readout detuning axis in Hz; the readout pulse of
    ``sequence`` should span it.
    """

    ensemble: object
    relax: object
    linewidths: object
    sequence: object
    axis: np.ndarray
    alpha0: float = DEFAULT_PEAK_ALPHA
    transmission_mode: str = "linear"
    noninvasive: bool = False
    threads: int = None

    @property
    def gamma_eff(self):
        return self.linewidths.gamma_eff

    def spectrum_from(self, result):
        pops = [p[0] for p in result.readout] if self.noninvasive else result.readout
        freqs = None if self.noninvasive else result.readout_freqs
        alpha = absorption_spectrum(self.ensemble, pops, self.axis, self.alpha0,
                                    gamma=self.gamma_eff, readout_freqs=freqs)
        return transmission(alpha, self.transmission_mode)

    def run(self, burn_center=None, initial=None, sequence=None):
        """Burned and unburned (zero-power) runs from the same start, plus the hole."""
        seq = sequence or self.sequence
        if burn_center is not None:
            seq = seq.with_burn(center=burn_center)
        ref_seq = seq.with_burn(saturation=0.0)
        burned = run_pulse_sequence(self.ensemble, self.relax, seq, self.gamma_eff, initial,
                                    self.noninvasive, self.threads)
        ref = run_pulse_sequence(self.ensemble, self.relax, ref_seq, self.gamma_eff, initial,
                                 self.noninvasive, self.threads)
        tb, tr = self.spectrum_from(burned), self.spectrum_from(ref)
        return SHBRun(hole_spectrum(tb, tr, seq.burn.center), tb, tr, burned, ref)

    def noisy_hole(self, run, sigma, n_average, seed=0, rng=None):
        """Add averaged white noise to both transmissions, then correct."""
        rng = make_rng(seed) if rng is None else rng
        tb = add_noise_and_average(run.burned, sigma, n_average, rng=rng)
        tr = add_noise_and_average(run.reference, sigma, n_average, rng=rng)
        return hole_spectrum(tb, tr, run.hole.burn_frequency)

    def erase_state(self, populations, erase_pulse=None, settle=None):
        """Apply the erase scan to per-isotope populations."""
        pulse = erase_pulse or self.sequence.erase
        if pulse is None:
            raise ValueError("no erase pulse configured")
        det = self.ensemble.classes.detunings
        out, reports = [], []
        for iso, pops in zip(self.ensemble.isotopes, populations):
            st, rep = erase(pops, pulse, det, iso.table, self.relax, self.gamma_eff,
                            settle=settle, threads=self.threads)
            out.append(st)
            reports.append(rep)
        report = reports[0]
        for rep in reports[1:]:
            report = report.merge(rep)
        return out, report


def hole_decay_series(experiment, delays, sigma=0.0, n_average=1, seed=0, fit_window=1.0):
    """
    Hole area versus readout delay.

    The burn train is run once; each delay then adds a wait and a readout.
    The unburned reference is delay independent only when started thermal,
    so it is recomputed per delay as well.
    """
    delays = np.sort(np.asarray(delays, dtype=float))
    if delays.size and delays[0] < MIN_DELAY:
        raise ValueError(f"delays must be >= {MIN_DELAY} s, got {delays[0]!r}")
    exp = experiment
    seq = exp.sequence
    det = exp.ensemble.classes.detunings
    rng = make_rng(seed)

    def states_after_burn(sat):
        out = []
        for iso in exp.ensemble.isotopes:
            st = thermal_state(det.size)
            train = replace(seq, burn=replace(seq.burn, saturation=sat)).burn_train()
            for pulse in train:
                st, _ = apply_pulse(st, pulse, det, iso.table, exp.relax, exp.gamma_eff,
                                    threads=exp.threads)
            out.append(st)
        return out

    def read(states, delay):
        res_readout = []
        for iso, st in zip(exp.ensemble.isotopes, states):
            st, _ = apply_pulse(st, wait(delay), det, iso.table, exp.relax, exp.gamma_eff)
            if exp.noninvasive:
                res_readout.append(st)
            else:
                _, snaps = apply_pulse(st, seq.readout, det, iso.table, exp.relax, exp.gamma_eff,
                                       record=True, threads=exp.threads)
                res_readout.append(snaps)
        freqs = None if exp.noninvasive else seq.readout.sub_frequencies()
        alpha = absorption_spectrum(exp.ensemble, res_readout, exp.axis, exp.alpha0,
                                    gamma=exp.gamma_eff, readout_freqs=freqs)
        return transmission(alpha, exp.transmission_mode)

    burned_states = states_after_burn(seq.burn.saturation)
    ref_states = states_after_burn(0.0)
    areas, errors, fits = [], [], []
    for d in delays:
        tb, tr = read(burned_states, d), read(ref_states, d)
        if sigma > 0:
            tb = add_noise_and_average(tb, sigma, n_average, rng=rng)
            tr = add_noise_and_average(tr, sigma, n_average, rng=rng)
        hole = hole_spectrum(tb, tr, seq.burn.center)
        fit = fit_lorentzian_hole(hole, window=fit_window)
        fits.append(fit)
        areas.append(lorentzian_area(fit))
        errors.append(lorentzian_area_error(fit))
    return DecaySeries(delays, np.array(areas), np.array(errors), fits)
