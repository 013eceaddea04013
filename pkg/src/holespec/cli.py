"""
Command-line entry point.

Every subcommand prints a ``key=value`` summary on stdout. Exit status is
0 on success, 1 on invalid input (config, CSV, physical parameters) and 2
when a fit fails or does not converge.
"""

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError, build_ensemble, build_linewidths, build_relaxation, build_sequence,
    parse_config, readout_axis, regime_report,
)
from .csvio import CSVFormatError, read_series, read_spectrum, write_csv
from .fitting import (
    FitError, fit_exponential, fit_gaussian_mixture, fit_lorentzian_hole, lorentzian_area,
    lorentzian_area_error,
)
from .photophysics import (
    EmissionBands, asymmetry_ratio, cie_xy, emission_fractions, photophysics_summary,
    synthetic_emission_spectrum,
)
from .readout import SHBExperiment, hole_decay_series, make_rng, simulate_ple
from .spectro import (
    Spectrum, delta_nu_to_delta_lambda, detuning_axis, frequency_to_wavenumber,
    homogeneous_from_hole, t2_from_linewidth,
)

log = logging.getLogger("holespec")

EXIT_OK, EXIT_INVALID, EXIT_FIT = 0, 1, 2

# stable summary keys per subcommand (fit-ple adds peak<i>_* keys when fitting more than one peak)
SUMMARY_KEYS = {
    "simulate-shb": ("command", "hole_csv", "transmission_csv", "n_classes", "burn_frequency_hz",
                     "readout_delay_s", "hole_peak", "noise_sigma", "n_average", "seed"),
    "hole-decay": ("command", "decay_csv", "n_delays", "amplitude", "amplitude_err",
                   "t1_spin_s", "t1_spin_err_s", "offset", "offset_err", "offset_fixed",
                   "converged", "iterations", "residual_rms", "seed"),
    "simulate-ple": ("command", "ple_csv", "n_points", "span_hz", "n_classes"),
    "fit-hole": ("command", "input", "center_hz", "center_err_hz", "fwhm_hz", "fwhm_err_hz",
                 "amplitude", "amplitude_err", "baseline", "baseline_err", "area_hz", "area_err_hz",
                 "gamma_laser_hz", "gamma_h_hz", "gamma_h_err_hz", "t2_s", "t2_err_s",
                 "converged", "iterations", "residual_rms", "rank_deficient"),
    "fit-decay": ("command", "input", "amplitude", "amplitude_err", "time_constant_s",
                  "time_constant_err_s", "offset", "offset_err", "offset_fixed",
                  "converged", "iterations", "residual_rms", "rank_deficient"),
    "fit-ple": ("command", "input", "n_peaks", "center_hz", "center_err_hz", "fwhm_hz",
                "fwhm_err_hz", "fwhm_nm", "fwhm_per_cm", "amplitude", "baseline",
                "converged", "iterations", "residual_rms", "rank_deficient"),
    "photophysics": ("command", "i_tot_over_i_md", "tau_rad_s", "tau_obs_s", "q_eu", "q_tot",
                     "eta_sens", "r21", "fraction_j0", "fraction_j1", "fraction_j2",
                     "fraction_j3", "fraction_j4", "fraction_j5", "fraction_j6"),
    "cie": ("command", "source", "spectrum_csv", "x", "y"),
    "validate": ("command", "gamma_inh_over_gamma_h", "gamma_h_over_gamma_laser",
                 "t1_spin_over_tau_exc", "inhomogeneous_ok", "laser_ok", "storage_ok",
                 "flip_flop_limited", "passed"),
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit(summary, stream=None):
    stream = stream or sys.stdout
    for k, v in summary.items():
        stream.write(f"{k}={_fmt(v)}\n")


def _out_path(args, cfg, name):
    prefix = cfg.output.prefix if cfg is not None and cfg.output is not None else ""
    return Path(args.out) / f"{prefix}{name}"


def _need_input(args):
    if not args.input:
        raise ConfigError("--input: this command needs an input CSV")
    return args.input


def _fit_summary(res):
    return {"converged": res.converged, "iterations": res.iterations,
            "residual_rms": res.residual_rms}


def _with_fit_status(out, res):
    if not res.converged:
        log.error("fit did not converge: %s", res.message)
        out["_exit"] = EXIT_FIT
    return out


def _experiment(cfg, delay_s=None):
    return SHBExperiment(
        build_ensemble(cfg), build_relaxation(cfg), build_linewidths(cfg),
        build_sequence(cfg, delay_s), readout_axis(cfg), cfg.output.alpha0,
        cfg.output.transmission, cfg.sequence.noninvasive)


def cmd_simulate_shb(args, cfg):
    exp = _experiment(cfg)
    run = exp.run()
    sq = cfg.sequence
    hole = run.hole
    burned, ref = run.burned, run.reference
    if sq.noise_sigma > 0:
        hole = exp.noisy_hole(run, sq.noise_sigma, sq.n_average, rng=make_rng(args.seed))
    hole_csv = write_csv(_out_path(args, cfg, "hole.csv"), hole, "delta_transmission")
    tr_csv = write_csv(_out_path(args, cfg, "transmission.csv"),
                       (["detuning_hz", "t_burned", "t_reference"],
                        [burned.axis, burned.values, ref.values]))
    return {
        "command": "simulate-shb", "hole_csv": hole_csv, "transmission_csv": tr_csv,
        "n_classes": len(exp.ensemble.classes), "burn_frequency_hz": sq.burn_offset_hz,
        "readout_delay_s": exp.sequence.readout_delay, "hole_peak": float(hole.values.max()),
        "noise_sigma": sq.noise_sigma, "n_average": sq.n_average, "seed": args.seed,
    }


def cmd_hole_decay(args, cfg):
    exp = _experiment(cfg)
    sq = cfg.sequence
    delays = np.array(sq.delay_ms) * 1e-3
    series = hole_decay_series(exp, delays, sq.noise_sigma, sq.n_average, args.seed,
                               cfg.fit.hole_window)
    path = write_csv(_out_path(args, cfg, "hole_decay.csv"),
                     (["delay_s", "hole_area_hz", "hole_area_err_hz"],
                      [series.delays, series.areas, series.area_errors]))
    # the hole relaxes completely, so the offset is pinned at zero unless configured
    offset = 0.0 if cfg.fit.decay_offset is None else cfg.fit.decay_offset
    res = fit_exponential(series.delays, series.areas, offset=offset)
    out = {
        "command": "hole-decay", "decay_csv": path, "n_delays": delays.size,
        "amplitude": res["amplitude"], "amplitude_err": res.error("amplitude"),
        "t1_spin_s": res["time_constant"], "t1_spin_err_s": res.error("time_constant"),
        "offset": res["offset"], "offset_err": res.error("offset"), "offset_fixed": True,
        **_fit_summary(res), "seed": args.seed,
    }
    return _with_fit_status(out, res)


def cmd_simulate_ple(args, cfg):
    en = cfg.ensemble
    axis = detuning_axis(en.ple_span_hz, en.ple_points)
    margin = 0.1 * en.ple_span_hz
    ens = build_ensemble(cfg, span=en.ple_span_hz + 2 * margin)
    ple = simulate_ple(ens, axis, cfg.dynamics.gamma_h_hz)
    path = write_csv(_out_path(args, cfg, "ple.csv"), ple, "ple")
    return {"command": "simulate-ple", "ple_csv": path, "n_points": axis.size,
            "span_hz": en.ple_span_hz, "n_classes": len(ens.classes)}


def cmd_fit_hole(args, cfg):
    path = _need_input(args)
    hole = read_spectrum(path)
    window = cfg.fit.hole_window if cfg is not None and cfg.fit is not None else 1.0
    gl = cfg.dynamics.gamma_laser_hz if cfg is not None and cfg.dynamics is not None else 0.0
    res = fit_lorentzian_hole(hole, window=window)
    out = {"command": "fit-hole", "input": path}
    for name, unit in (("center", "_hz"), ("fwhm", "_hz"), ("amplitude", ""), ("baseline", "")):
        out[name + unit] = res[name]
        out[f"{name}_err{unit}"] = res.error(name)
    out["area_hz"] = lorentzian_area(res)
    out["area_err_hz"] = lorentzian_area_error(res)
    out["gamma_laser_hz"] = gl
    gh = homogeneous_from_hole(res["fwhm"], gl)
    gh_err = 0.5 * res.error("fwhm")
    t2 = t2_from_linewidth(gh)
    out.update(gamma_h_hz=gh, gamma_h_err_hz=gh_err, t2_s=t2, t2_err_s=t2 * gh_err / gh)
    out.update(_fit_summary(res), rank_deficient=res.rank_deficient)
    return _with_fit_status(out, res)


def cmd_fit_decay(args, cfg):
    path = _need_input(args)
    t, y, _ = read_series(path)
    offset = cfg.fit.decay_offset if cfg is not None and cfg.fit is not None else None
    res = fit_exponential(t, y, offset=offset)
    out = {
        "command": "fit-decay", "input": path,
        "amplitude": res["amplitude"], "amplitude_err": res.error("amplitude"),
        "time_constant_s": res["time_constant"], "time_constant_err_s": res.error("time_constant"),
        "offset": res["offset"], "offset_err": res.error("offset"),
        "offset_fixed": offset is not None, **_fit_summary(res),
        "rank_deficient": res.rank_deficient,
    }
    return _with_fit_status(out, res)


def cmd_fit_ple(args, cfg):
    path = _need_input(args)
    spec = read_spectrum(path)
    n = cfg.fit.ple_peaks if cfg is not None and cfg.fit is not None else 1
    lam0 = cfg.ensemble.center_wavelength_nm if cfg is not None and cfg.ensemble is not None else 580.185
    res = fit_gaussian_mixture(spec.axis, spec.values, n)
    amps = [res[f"amplitude_{i}"] for i in range(n)]
    main = int(np.argmax(amps))
    fwhm = res[f"fwhm_{main}"]
    out = {
        "command": "fit-ple", "input": path, "n_peaks": n,
        "center_hz": res[f"center_{main}"], "center_err_hz": res.error(f"center_{main}"),
        "fwhm_hz": fwhm, "fwhm_err_hz": res.error(f"fwhm_{main}"),
        "fwhm_nm": abs(float(delta_nu_to_delta_lambda(fwhm, lam0))),
        "fwhm_per_cm": float(frequency_to_wavenumber(fwhm)),
        "amplitude": amps[main], "baseline": res["baseline"],
        **_fit_summary(res), "rank_deficient": res.rank_deficient,
    }
    if n > 1:
        for i in range(n):
            out[f"peak{i}_center_hz"] = res[f"center_{i}"]
            out[f"peak{i}_fwhm_hz"] = res[f"fwhm_{i}"]
            out[f"peak{i}_amplitude"] = res[f"amplitude_{i}"]
    return _with_fit_status(out, res)


def cmd_photophysics(args, cfg):
    p = cfg.photophysics
    bands = EmissionBands(tuple(p.bands)) if p.bands is not None else None
    ratio = p.i_tot_over_i_md if p.i_tot_over_i_md is not None else bands.i_tot_over_i_md
    pp = photophysics_summary(p.a_md_per_s, p.refractive_index, ratio, p.tau_obs_s, p.q_tot)
    out = {"command": "photophysics", "i_tot_over_i_md": ratio, "tau_rad_s": pp.tau_rad,
           "tau_obs_s": pp.tau_obs, "q_eu": pp.q_eu, "q_tot": pp.q_tot, "eta_sens": pp.eta_sens}
    if bands is not None:
        out["r21"] = asymmetry_ratio(bands)
        for j, f in enumerate(emission_fractions(bands)):
            out[f"fraction_j{j}"] = float(f)
    else:
        out["r21"] = "nan"
        for j in range(7):
            out[f"fraction_j{j}"] = "nan"
    return out


def cmd_cie(args, cfg):
    if args.input:
        spec = read_spectrum(args.input)
        if spec.axis_kind != "wavelength":
            raise ConfigError("--input: cie needs a wavelength_nm first column")
        wl, v, source, csv_path = spec.axis, spec.values, "input", args.input
    else:
        if cfg is None or cfg.photophysics is None or cfg.photophysics.bands is None:
            raise ConfigError("photophysics.bands: needed to synthesise a spectrum (or pass --input)")
        bands = EmissionBands(tuple(cfg.photophysics.bands))
        wl, v = synthetic_emission_spectrum(bands, fwhm_nm=cfg.photophysics.band_fwhm_nm)
        source = "bands"
        csv_path = write_csv(_out_path(args, cfg, "emission.csv"),
                             Spectrum(wl, v, "wavelength", {"quantity": "intensity"}))
    x, y = cie_xy(wl, v)
    return {"command": "cie", "source": source, "spectrum_csv": csv_path, "x": x, "y": y}


def cmd_validate(args, cfg):
    r = regime_report(cfg)
    out = {
        "command": "validate",
        "gamma_inh_over_gamma_h": r.inhomogeneous_ratio,
        "gamma_h_over_gamma_laser": r.laser_ratio,
        "t1_spin_over_tau_exc": r.storage_ratio,
        "inhomogeneous_ok": r.inhomogeneous_ok, "laser_ok": r.laser_ok,
        "storage_ok": r.storage_ok, "flip_flop_limited": r.flip_flop_limited,
        "passed": r.passed,
    }
    if not r.passed:
        out["_exit"] = EXIT_INVALID
    return out


# command -> (handler, blocks that must be complete; None = config optional)
COMMANDS = {
    "simulate-shb": (cmd_simulate_shb, ("ensemble", "levels", "dynamics", "sequence")),
    "hole-decay": (cmd_hole_decay, ("ensemble", "levels", "dynamics", "sequence")),
    "simulate-ple": (cmd_simulate_ple, ("ensemble", "levels", "dynamics")),
    "fit-hole": (cmd_fit_hole, None),
    "fit-decay": (cmd_fit_decay, None),
    "fit-ple": (cmd_fit_ple, None),
    "photophysics": (cmd_photophysics, ("photophysics",)),
    "cie": (cmd_cie, None),
    "validate": (cmd_validate, None),
}


def build_parser():
    p = argparse.ArgumentParser(prog="holespec",
                                description="Spectral hole burning simulation and analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="run config file (TOML); 'paper.cfg' selects the bundled one")
        sp.add_argument("--input", help="input CSV for fit-* and cie")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--seed", type=int, default=None, help="noise seed (overrides sequence.seed)")
        sp.add_argument("--quiet", action="store_true", help="suppress progress and warnings on stderr")
    return p


def _load_config(args):
    handler, blocks = COMMANDS[args.command]
    if args.config is None:
        if blocks is not None or args.command == "validate":
            raise ConfigError("--config: this command needs a config file")
        return None
    # validate needs every block; fit-* and cie take whatever is there
    if blocks is None:
        blocks = None if args.command == "validate" else ()
    return parse_config(args.config, blocks)


def run(argv=None, stdout=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if args.seed is not None and args.seed < 0:
        log.error("--seed must be a non-negative integer")
        return EXIT_INVALID
    handler, _ = COMMANDS[args.command]
    try:
        with warnings.catch_warnings():
            if args.quiet:
                warnings.simplefilter("ignore")
            cfg = _load_config(args)
            if args.seed is None:
                args.seed = cfg.sequence.seed if cfg is not None and cfg.sequence is not None else 0
            log.info("running %s", args.command)
            summary = handler(args, cfg)
    except FitError as exc:
        log.error("%s", exc)
        return EXIT_FIT
    except (ConfigError, CSVFormatError, ValueError, OSError, FloatingPointError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    code = summary.pop("_exit", EXIT_OK)
    emit(summary, stdout)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
