"""
Run configuration: a TOML file with one table per block.

Every key is listed in ``SCHEMA`` with its type and default; keys marked
``REQUIRED`` must be present whenever their block is needed by the chosen
subcommand. Unknown blocks or keys are errors, and every error names the
offending ``block.key`` path.
"""

import math
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import SimpleNamespace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .dynamics import LaserPulse, PulseSequence, RelaxationParams, validate_shb_regime
from .levels import (
    GaussianComponent, HyperfineManifold, InhomogeneousProfile, Isotope, EnsembleModel,
    build_transition_table, discretize_ensemble,
)
from .photophysics import EmissionBands
from .spectro import Linewidths, detuning_axis

REQUIRED = object()
BUNDLED = ("paper.cfg",)


class ConfigError(ValueError):
    pass


# block -> key -> (kind, default)
SCHEMA = {
    "ensemble": {
        "profile_centers_hz": ("floats", [0.0]),
        "profile_fwhm_hz": ("floats", REQUIRED),
        "profile_weights": ("floats", None),
        "span_hz": ("float", None),
        "margin_linewidths": ("float", 20.0),
        "n_classes": ("int", 1201),
        "abundances": ("floats", [1.0]),
        "ple_span_hz": ("float", 300e9),
        "ple_points": ("int", 1024),
        "center_wavelength_nm": ("float", 580.185),
    },
    "levels": {
        "ground_offsets_hz": ("floats", REQUIRED),
        "excited_offsets_hz": ("floats", REQUIRED),
        "strengths": ("matrix", None),
        "branching": ("matrix", None),
        "gap_min_hz": ("float", 1e6),
        "gap_max_hz": ("float", 200e6),
        # second isotope, only read when ensemble.abundances has two entries
        "ground_offsets_2_hz": ("floats", None),
        "excited_offsets_2_hz": ("floats", None),
        "strengths_2": ("matrix", None),
        "branching_2": ("matrix", None),
    },
    "dynamics": {
        "tau_exc_s": ("float", REQUIRED),
        "t1_spin_s": ("float_or_inf", REQUIRED),
        "gamma_h_hz": ("float", REQUIRED),
        "gamma_laser_hz": ("float", 0.0),
        "gamma_inh_hz": ("float", None),
        "s_burn": ("float", REQUIRED),
        "s_probe": ("float", None),
        "s_erase": ("float", 50.0),
        "regime_threshold": ("float", 10.0),
    },
    "sequence": {
        "n_burn": ("int", 10),
        "burn_ms": ("float", 2.0),
        "wait_ms": ("float", 3.0),
        "delay_ms": ("floats", [5.0]),
        "burn_offset_hz": ("float", 0.0),
        "scan_span_hz": ("float", 200e6),
        "scan_ms": ("float", 2.0),
        "scan_steps": ("int", 128),
        "erase_span_hz": ("float", 200e6),
        "erase_ms": ("float", 20.0),
        "n_average": ("int", 1),
        "noise_sigma": ("float", 0.0),
        "seed": ("int", 0),
        "noninvasive": ("bool", False),
    },
    "photophysics": {
        "a_md_per_s": ("float", 14.65),
        "refractive_index": ("float", 1.5),
        "bands": ("floats", None),
        "i_tot_over_i_md": ("float", None),
        "tau_obs_s": ("float", REQUIRED),
        "q_tot": ("float", REQUIRED),
        "band_fwhm_nm": ("float", 4.0),
    },
    "output": {
        "axis_points": ("int", 1024),
        "alpha0": ("float", 0.1),
        "transmission": ("str", "linear"),
        "prefix": ("str", ""),
    },
    "fit": {
        "hole_window": ("float", 1.0),
        "decay_offset": ("float", None),
        "ple_peaks": ("int", 1),
    },
}

OPTIONAL_BLOCKS = ("fit", "output")


def _convert(path, kind, value):
    def bad(what):
        return ConfigError(f"{path}: expected {what}, got {value!r}")

    def num(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise bad("a number")
        if not math.isfinite(v):
            raise bad("a finite number")
        return float(v)

    if kind == "float":
        return num(value)
    if kind == "float_or_inf":
        if value == "inf" or (isinstance(value, float) and value == math.inf):
            return math.inf
        return num(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind == "floats":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = [value]
        if not isinstance(value, list) or not value:
            raise bad("a non-empty list of numbers")
        return [num(v) for v in value]
    if kind == "matrix":
        if not (isinstance(value, list) and value and all(isinstance(r, list) for r in value)):
            raise bad("a list of rows")
        return [[num(v) for v in row] for row in value]
    raise AssertionError(kind)


@dataclass
class RunConfig:
    """Parsed blocks (attribute access) plus the file they came from."""

    ensemble: SimpleNamespace = None
    levels: SimpleNamespace = None
    dynamics: SimpleNamespace = None
    sequence: SimpleNamespace = None
    photophysics: SimpleNamespace = None
    output: SimpleNamespace = None
    fit: SimpleNamespace = None
    source: str = ""

    def require(self, *blocks):
        for b in blocks:
            if getattr(self, b) is None:
                raise ConfigError(f"{b}: block is required for this command")


def _parse_block(name, raw, strict):
    schema = SCHEMA[name]
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a table")
    for key in raw:
        if key not in schema:
            raise ConfigError(f"{name}.{key}: unknown key")
    out = {}
    for key, (kind, default) in schema.items():
        path = f"{name}.{key}"
        if key in raw:
            out[key] = _convert(path, kind, raw[key])
        elif default is REQUIRED:
            if strict:
                raise ConfigError(f"{path}: missing required key")
            out[key] = None
        else:
            out[key] = default
    return SimpleNamespace(**out)


def bundled_config(name="paper.cfg"):
    """Path of a config file shipped with the package."""
    return Path(str(resources.files("holespec.data").joinpath(name)))


def resolve_config_path(path):
    p = Path(path)
    if not p.exists() and p.name in BUNDLED and p.parent == Path("."):
        return bundled_config(p.name)
    return p


def parse_config_text(text, blocks=None, source="<string>"):
    """
    Parse and validate config text.

    ``blocks`` lists the blocks that must be present and complete; ``None``
    means all non-optional blocks. Blocks present but not required are
    still checked for unknown keys and types.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: not valid TOML ({exc})") from None
    for name in raw:
        if name not in SCHEMA:
            raise ConfigError(f"{name}: unknown block")
    need = [b for b in SCHEMA if b not in OPTIONAL_BLOCKS] if blocks is None else list(blocks)
    cfg = RunConfig(source=source)
    for name in SCHEMA:
        if name in raw:
            setattr(cfg, name, _parse_block(name, raw[name], strict=name in need))
        elif name in need or name in OPTIONAL_BLOCKS:
            # missing required keys are reported one at a time, in schema order
            setattr(cfg, name, _parse_block(name, {}, strict=name in need))
    validate_config(cfg, need)
    return cfg


def parse_config(path, blocks=None):
    """Read, parse and validate a config file; see :func:`parse_config_text`."""
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, blocks, str(p))


def _check(path, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def validate_config(cfg, blocks):
    """Build every object the required blocks describe so their own checks run."""
    if "levels" in blocks or "ensemble" in blocks:
        cfg.require("levels", "ensemble")
        build_ensemble(cfg)
    if "dynamics" in blocks:
        d = cfg.dynamics
        _check("dynamics", lambda: build_relaxation(cfg))
        _check("dynamics", lambda: build_linewidths(cfg))
        for key in ("s_burn", "s_probe", "s_erase"):
            v = getattr(d, key)
            if v is not None and v < 0:
                raise ConfigError(f"dynamics.{key}: must be >= 0, got {v!r}")
    if "sequence" in blocks:
        _check("sequence", lambda: build_sequence(cfg))
        if any(v <= 0 for v in cfg.sequence.delay_ms):
            raise ConfigError("sequence.delay_ms: delays must be > 0")
    if "photophysics" in blocks:
        p = cfg.photophysics
        if p.bands is not None:
            _check("photophysics.bands", lambda: EmissionBands(tuple(p.bands)))
        if p.bands is None and p.i_tot_over_i_md is None:
            raise ConfigError("photophysics.i_tot_over_i_md: missing (give it or photophysics.bands)")
    if cfg.output is not None:
        if cfg.output.transmission not in ("linear", "beer-lambert"):
            raise ConfigError(f"output.transmission: must be 'linear' or 'beer-lambert', "
                              f"got {cfg.output.transmission!r}")
        if cfg.output.axis_points < 64:
            raise ConfigError("output.axis_points: need at least 64 points")
        if not cfg.output.alpha0 > 0:
            raise ConfigError("output.alpha0: must be > 0")
    if cfg.fit is not None:
        if not 1 <= cfg.fit.ple_peaks <= 5:
            raise ConfigError("fit.ple_peaks: must be in 1..5")
        if not cfg.fit.hole_window > 0:
            raise ConfigError("fit.hole_window: must be > 0")


def build_tables(cfg):
    lv = cfg.levels
    window = (lv.gap_min_hz, lv.gap_max_hz)
    n_iso = len(cfg.ensemble.abundances)
    specs = [("", lv.ground_offsets_hz, lv.excited_offsets_hz, lv.strengths, lv.branching)]
    if n_iso == 2:
        g2 = lv.ground_offsets_2_hz
        if g2 is None:
            raise ConfigError("levels.ground_offsets_2_hz: missing required key for two isotopes")
        e2 = lv.excited_offsets_2_hz
        if e2 is None:
            raise ConfigError("levels.excited_offsets_2_hz: missing required key for two isotopes")
        specs.append(("_2", g2, e2, lv.strengths_2, lv.branching_2))
    tables = []
    for suffix, g, e, s, b in specs:
        ground = _check(f"levels.ground_offsets{suffix}_hz",
                        lambda: HyperfineManifold(tuple(g), "ground", window))
        excited = _check(f"levels.excited_offsets{suffix}_hz",
                         lambda: HyperfineManifold(tuple(e), "excited", window))
        tables.append(_check(f"levels.strengths{suffix}/branching{suffix}", lambda: build_transition_table(
            ground, excited,
            None if s is None else np.array(s),
            None if b is None else np.array(b))))
    return tables


def build_profile(cfg):
    en = cfg.ensemble
    fwhm = en.profile_fwhm_hz
    centers = en.profile_centers_hz
    weights = en.profile_weights or [1.0] * len(fwhm)
    if not len(centers) == len(fwhm) == len(weights):
        raise ConfigError("ensemble.profile_*: centers, fwhm and weights differ in length")
    comps = _check("ensemble.profile_fwhm_hz", lambda: tuple(
        GaussianComponent(c, f, w) for c, f, w in zip(centers, fwhm, weights) if w != 0))
    if not comps:
        raise ConfigError("ensemble.profile_weights: all components have zero weight")
    return InhomogeneousProfile(comps)


def ensemble_span(cfg, tables):
    en = cfg.ensemble
    if en.span_hz is not None:
        return en.span_hz
    half_scan = 0.5 * max(cfg.sequence.scan_span_hz if cfg.sequence else 200e6,
                          cfg.sequence.erase_span_hz if cfg.sequence else 0.0)
    gamma_h = cfg.dynamics.gamma_h_hz if cfg.dynamics and cfg.dynamics.gamma_h_hz else 0.0
    return 2.0 * (half_scan + max(t.span for t in tables) + en.margin_linewidths * gamma_h)


def build_ensemble(cfg, span=None, n_classes=None):
    en = cfg.ensemble
    if en.n_classes < 3:
        raise ConfigError(f"ensemble.n_classes: need at least 3, got {en.n_classes}")
    if len(en.abundances) > 2:
        raise ConfigError("ensemble.abundances: one or two isotopes supported")
    tables = build_tables(cfg)
    profile = build_profile(cfg)
    span = ensemble_span(cfg, tables) if span is None else span
    classes = _check("ensemble.span_hz",
                     lambda: discretize_ensemble(profile, span, n_classes or en.n_classes))
    isos = tuple(Isotope(a, t, f"isotope{i + 1}") for i, (a, t) in enumerate(zip(en.abundances, tables)))
    return _check("ensemble.abundances", lambda: EnsembleModel(profile, classes, isos))


def build_relaxation(cfg):
    d = cfg.dynamics
    return RelaxationParams(d.tau_exc_s, d.t1_spin_s)


def gamma_inh(cfg):
    """Explicit ``dynamics.gamma_inh_hz`` or the FWHM of the heaviest profile component."""
    if cfg.dynamics.gamma_inh_hz is not None:
        return cfg.dynamics.gamma_inh_hz
    en = cfg.ensemble
    weights = en.profile_weights or [1.0] * len(en.profile_fwhm_hz)
    return en.profile_fwhm_hz[int(np.argmax(weights))]


def build_linewidths(cfg):
    d = cfg.dynamics
    return Linewidths(d.gamma_h_hz, gamma_inh(cfg), d.gamma_laser_hz)


def probe_saturation(cfg):
    d = cfg.dynamics
    return d.s_burn / 6.0 if d.s_probe is None else d.s_probe


def build_sequence(cfg, delay_s=None, with_erase=False):
    sq, d = cfg.sequence, cfg.dynamics
    delay = sq.delay_ms[0] * 1e-3 if delay_s is None else delay_s
    burn = LaserPulse("burn", sq.burn_ms * 1e-3, d.s_burn, sq.burn_offset_hz)
    readout = LaserPulse("readout-scan", sq.scan_ms * 1e-3, probe_saturation(cfg), 0.0,
                         sq.scan_span_hz, sq.scan_steps)
    erase = LaserPulse("erase-scan", sq.erase_ms * 1e-3, d.s_erase, 0.0,
                       sq.erase_span_hz, sq.scan_steps)
    return PulseSequence(burn, readout, sq.n_burn, sq.wait_ms * 1e-3, delay,
                         erase=erase if with_erase else None,
                         n_average=sq.n_average, noise_sigma=sq.noise_sigma)


def readout_axis(cfg):
    return detuning_axis(cfg.sequence.scan_span_hz, cfg.output.axis_points)


def regime_report(cfg):
    d = cfg.dynamics
    return validate_shb_regime(build_linewidths(cfg), d.t1_spin_s, d.tau_exc_s, d.regime_threshold)
