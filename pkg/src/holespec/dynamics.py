"""
Rate-equation optical pumping of the six-level ion and the pulse-sequence
engine (burn, wait, readout scan, erase scan).

Population vectors are ordered ``(g1, g2, g3, e1, e2, e3)``. Generators act
on column vectors, ``dp/dt = G @ p``, and conserve population (columns sum
to zero).
"""

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .expm import expm_batch
from .levels import N_LEVELS
from .spectro import lorentzian_peak_normalized

N_STATES = 2 * N_LEVELS
THERMAL = np.array([1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0, 0.0, 0.0])
PULSE_KINDS = ("burn", "wait", "readout-scan", "erase-scan")
MIN_SCAN_STEPS = 100
SETTLE_TAUS = 10.0
FLIP_FLOP_RATE_RANGE = (1e-5, 1e-4)


@dataclass(frozen=True)
class RelaxationParams:
    tau_exc: float
    t1_spin: float = np.inf

    def __post_init__(self):
        if not (np.isfinite(self.tau_exc) and self.tau_exc > 0):
            raise ValueError(f"tau_exc must be > 0, got {self.tau_exc!r}")
        if not self.t1_spin > 0:
            raise ValueError(f"t1_spin must be > 0, got {self.t1_spin!r}")


@dataclass(frozen=True)
class LaserPulse:
    """
    One piecewise-constant (or scanned) laser segment.

    ``saturation`` is the on-resonance pump rate in units of 1/tau_exc.
    Scanned pulses sweep ``center +/- span/2`` in ``steps`` sub-steps.
    """

    kind: str
    duration: float
    saturation: float = 0.0
    center: float = 0.0
    span: float = 0.0
    steps: int = MIN_SCAN_STEPS

    def __post_init__(self):
        if self.kind not in PULSE_KINDS:
            raise ValueError(f"pulse kind must be one of {PULSE_KINDS}, got {self.kind!r}")
        if not (np.isfinite(self.duration) and self.duration > 0):
            raise ValueError(f"pulse duration must be > 0, got {self.duration!r}")
        if not (np.isfinite(self.saturation) and self.saturation >= 0):
            raise ValueError(f"saturation must be >= 0, got {self.saturation!r}")
        if not (np.isfinite(self.span) and self.span >= 0):
            raise ValueError(f"span must be >= 0, got {self.span!r}")
        if self.kind == "wait":
            object.__setattr__(self, "saturation", 0.0)
        if self.scanning:
            if self.steps < MIN_SCAN_STEPS:
                raise ValueError(f"scanning pulses need >= {MIN_SCAN_STEPS} sub-steps, got {self.steps}")

    @property
    def scanning(self):
        return self.kind in ("readout-scan", "erase-scan")

    def sub_frequencies(self):
        """Laser frequency of each constant sub-step of a scan."""
        if not self.scanning or self.span == 0:
            return np.array([self.center])
        n = int(self.steps)
        step = self.span / n
        return self.center - 0.5 * self.span + (np.arange(n) + 0.5) * step


def wait(duration):
    return LaserPulse("wait", duration)


@dataclass(frozen=True)
class PulseSequence:
    """
    Burn train, readout delay, readout scan and optional erase.

    The pulse order is: burn, (wait, burn) * (n_burn - 1), wait(readout_delay),
    readout, then erase and a settling wait if an erase pulse is given.
    """

    burn: LaserPulse
    readout: LaserPulse
    n_burn: int = 10
    burn_wait: float = 3e-3
    readout_delay: float = 5e-3
    erase: LaserPulse = None
    settle: float = None
    n_average: int = 1
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.burn.kind != "burn" or self.readout.kind != "readout-scan":
            raise ValueError("sequence needs a 'burn' pulse and a 'readout-scan' pulse")
        if self.erase is not None and self.erase.kind != "erase-scan":
            raise ValueError("erase pulse must be of kind 'erase-scan'")
        if self.n_burn < 1:
            raise ValueError(f"n_burn must be >= 1, got {self.n_burn}")
        if self.readout_delay < 0 or self.burn_wait < 0 or (self.settle or 0.0) < 0:
            raise ValueError("delays must be >= 0")
        if self.n_average < 1:
            raise ValueError(f"n_average must be >= 1, got {self.n_average}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    def burn_train(self):
        out = [self.burn]
        for _ in range(self.n_burn - 1):
            if self.burn_wait > 0:
                out.append(wait(self.burn_wait))
            out.append(self.burn)
        return out

    def pulses(self):
        out = self.burn_train()
        if self.readout_delay > 0:
            out.append(wait(self.readout_delay))
        out.append(self.readout)
        if self.erase is not None:
            out.append(self.erase)
            if self.settle:
                out.append(wait(self.settle))
        return out

    def with_burn(self, **changes):
        return replace(self, burn=replace(self.burn, **changes))


def pump_rate(strength, detuning, saturation, gamma_eff, tau_exc):
    """
    Optical pumping rate (1/s) on one line.

    ``saturation / tau_exc * strength`` on resonance, falling off as a
    peak-normalised Lorentzian of FWHM ``gamma_eff`` with laser detuning.
    """
    if not gamma_eff > 0:
        raise ValueError(f"gamma_eff must be > 0, got {gamma_eff!r}")
    if saturation < 0:
        raise ValueError(f"saturation must be >= 0, got {saturation!r}")
    shape = lorentzian_peak_normalized(detuning, 0.0, gamma_eff)
    return saturation / tau_exc * np.asarray(strength) * shape


def relaxation_generator(table, relax):
    """Laser-independent part: excited decay split by branching plus spin T1."""
    G = np.zeros((N_STATES, N_STATES))
    gamma = 1.0 / relax.tau_exc
    beta = table.branching
    for k in range(N_LEVELS):
        G[N_LEVELS + k, N_LEVELS + k] -= gamma
        for j in range(N_LEVELS):
            G[j, N_LEVELS + k] += beta[k, j] * gamma
    if np.isfinite(relax.t1_spin):
        r = 1.0 / relax.t1_spin
        G[:N_LEVELS, :N_LEVELS] += r * (np.full((N_LEVELS, N_LEVELS), 1.0 / N_LEVELS)
                                        - np.eye(N_LEVELS))
    return G


def pump_rates(class_detunings, table, laser_freq, saturation, gamma_eff, tau_exc):
    """Rates of shape (n_classes, 3, 3) for a fixed laser frequency."""
    det = np.asarray(class_detunings, dtype=float)
    lines = det[:, None, None] + table.offsets[None, :, :]
    return pump_rate(table.strengths[None], laser_freq - lines, saturation, gamma_eff, tau_exc)


def optical_generator(rates):
    """Symmetric absorption/stimulated-emission generator from (n, 3, 3) rates."""
    n = rates.shape[0]
    G = np.zeros((n, N_STATES, N_STATES))
    G[:, N_LEVELS:, :N_LEVELS] = np.swapaxes(rates, 1, 2)  # e_k <- g_j
    G[:, :N_LEVELS, N_LEVELS:] = rates                      # g_j <- e_k
    idx = np.arange(N_LEVELS)
    G[:, idx, idx] -= rates.sum(axis=2)
    G[:, N_LEVELS + idx, N_LEVELS + idx] -= rates.sum(axis=1)
    return G


def rate_generator(class_detunings, table, laser, relax, gamma_eff, averaged=False):
    """
    Full generator for every class under a constant laser.

    For a scanning ``laser`` with ``averaged=True`` the pump rates are the
    mean over the scan sub-steps (fast, repeated sweeps). Otherwise the
    laser sits at ``laser.center``.
    """
    det = np.atleast_1d(np.asarray(class_detunings, dtype=float))
    G = np.broadcast_to(relaxation_generator(table, relax), (det.size, N_STATES, N_STATES)).copy()
    if laser.saturation == 0:
        return G
    if averaged and laser.scanning:
        freqs = laser.sub_frequencies()
        rates = np.zeros((det.size, N_LEVELS, N_LEVELS))
        for f in freqs:
            rates += pump_rates(det, table, f, laser.saturation, gamma_eff, relax.tau_exc)
        rates /= freqs.size
    else:
        rates = pump_rates(det, table, laser.center, laser.saturation, gamma_eff, relax.tau_exc)
    return G + optical_generator(rates)


def thread_count():
    raw = os.environ.get("HOLESPEC_THREADS", "")
    try:
        n = int(raw)
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, min(n, os.cpu_count() or 1))


def _chunks(n, parts):
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def propagators(generators, duration, threads=None):
    """exp(G * duration) for a stack of generators, chunked across threads."""
    G = np.asarray(generators, dtype=float) * duration
    threads = thread_count() if threads is None else threads
    if threads <= 1 or G.shape[0] < 256:
        return expm_batch(G)
    parts = _chunks(G.shape[0], threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        blocks = list(pool.map(lambda sl: expm_batch(G[sl]), parts))
    return np.concatenate(blocks, axis=0)


def check_populations(p, tol_sum=1e-9, tol_neg=1e-12):
    p = np.asarray(p)
    if not np.all(np.isfinite(p)):
        raise FloatingPointError("population propagation produced non-finite values")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol_sum):
        raise FloatingPointError(f"population not conserved (max error {np.abs(sums - 1).max():.3g})")
    if np.any(p < -tol_neg):
        raise FloatingPointError(f"negative population {p.min():.3g}")
    return p


def evolve(state, generator, duration, threads=None):
    """
    Propagate populations through a constant generator.

    ``state`` is (6,) or (n, 6); ``generator`` is (6, 6) or (n, 6, 6).
    """
    if duration < 0:
        raise ValueError(f"duration must be >= 0, got {duration!r}")
    state = np.asarray(state, dtype=float)
    if duration == 0:
        return state.copy()
    single = state.ndim == 1
    P = np.atleast_2d(state)
    G = np.asarray(generator, dtype=float)
    if G.ndim == 2:
        U = expm_batch(G * duration)
        out = P @ U.T
    else:
        U = propagators(G, duration, threads)
        out = np.einsum("nij,nj->ni", U, P)
    check_populations(out)
    return out[0] if single else out


def thermal_state(n_classes):
    return np.tile(THERMAL, (n_classes, 1))


def apply_pulse(state, pulse, det, table, relax, gamma_eff, record=False, threads=None):
    """
    Run one pulse on all classes of one isotope.

    Readout scans are stepped through their sub-frequencies; with
    ``record=True`` the population at the start of each sub-step is returned
    as well, shape (steps, n_classes, 6). Erase scans use the sweep-averaged
    generator.
    """
    if pulse.kind == "readout-scan":
        freqs = pulse.sub_frequencies()
        dt = pulse.duration / freqs.size
        snaps = np.empty((freqs.size,) + state.shape) if record else None
        for i, f in enumerate(freqs):
            if record:
                snaps[i] = state
            if pulse.saturation > 0:
                step = replace(pulse, kind="burn", center=f, span=0.0, duration=dt)
                G = rate_generator(det, table, step, relax, gamma_eff)
                state = evolve(state, G, dt, threads)
            else:
                state = evolve(state, relaxation_generator(table, relax), dt)
        return state, snaps
    G = rate_generator(det, table, pulse, relax, gamma_eff, averaged=pulse.kind == "erase-scan")
    return evolve(state, G, pulse.duration, threads), None


@dataclass
class SequenceResult:
    """
    Per-isotope population snapshots, each (n_classes, 6).

    ``readout`` holds (steps, n_classes, 6) populations seen by each readout
    sub-step; with a non-invasive readout every step holds the frozen state.
    """

    readout_freqs: np.ndarray
    initial: list
    after_burn: list
    before_readout: list
    readout: list
    final: list
    erase_report: object = None
    meta: dict = field(default_factory=dict)


def run_pulse_sequence(ensemble, relax, sequence, gamma_eff, initial=None,
                       noninvasive=False, threads=None):
    """
    Execute ``sequence`` on every isotope/class of ``ensemble``.

    ``initial`` is an optional list (one per isotope) of (n_classes, 6)
    starting populations; the default is the thermal state.
    """
    det = ensemble.classes.detunings
    n = det.size
    results = {k: [] for k in ("initial", "after_burn", "before_readout", "readout", "final")}
    report = None
    for iso_idx, iso in enumerate(ensemble.isotopes):
        table = iso.table
        state = thermal_state(n) if initial is None else np.array(initial[iso_idx], dtype=float)
        results["initial"].append(state.copy())
        for pulse in sequence.burn_train():
            state, _ = apply_pulse(state, pulse, det, table, relax, gamma_eff, threads=threads)
        results["after_burn"].append(state.copy())
        if sequence.readout_delay > 0:
            state, _ = apply_pulse(state, wait(sequence.readout_delay), det, table, relax,
                                   gamma_eff, threads=threads)
        results["before_readout"].append(state.copy())
        if noninvasive:
            steps = sequence.readout.sub_frequencies().size
            results["readout"].append(np.broadcast_to(state, (steps,) + state.shape).copy())
        else:
            state, snaps = apply_pulse(state, sequence.readout, det, table, relax, gamma_eff,
                                       record=True, threads=threads)
            results["readout"].append(snaps)
        if sequence.erase is not None:
            state, rep = erase(state, sequence.erase, det, table, relax, gamma_eff,
                               settle=sequence.settle, threads=threads)
            report = rep if report is None else report.merge(rep)
        results["final"].append(state)
    return SequenceResult(sequence.readout.sub_frequencies(), erase_report=report, **results)


@dataclass
class EraseReport:
    status: str
    max_deviation: float
    n_addressed: int
    n_partial: int
    messages: list = field(default_factory=list)

    def merge(self, other):
        return EraseReport(
            "partial" if "partial" in (self.status, other.status) else self.status,
            max(self.max_deviation, other.max_deviation),
            self.n_addressed + other.n_addressed,
            self.n_partial + other.n_partial,
            self.messages + other.messages,
        )


def fully_addressed(det, table, pulse, gamma_eff=0.0):
    """
    Classes whose every ground level has a non-zero line inside the scan
    (widened by half a linewidth on each side).
    """
    lo = pulse.center - 0.5 * pulse.span - 0.5 * gamma_eff
    hi = pulse.center + 0.5 * pulse.span + 0.5 * gamma_eff
    lines = np.asarray(det)[:, None, None] + table.offsets[None]
    inside = (lines >= lo) & (lines <= hi) & (table.strengths[None] > 0)
    return inside.any(axis=2).all(axis=1)


def erase(state, pulse, det, table, relax, gamma_eff, settle=None, threads=None):
    """
    High-power scan followed by a settling wait (default 10 tau_exc).

    Returns the new populations and an :class:`EraseReport`. The thermal
    check covers only classes whose three ground levels are all addressed
    by the scan; a scan narrower than the largest ground splitting is
    reported as a partial erase.
    """
    if pulse.kind != "erase-scan":
        raise ValueError("erase needs an 'erase-scan' pulse")
    settle = SETTLE_TAUS * relax.tau_exc if settle is None else settle
    state = np.atleast_2d(np.asarray(state, dtype=float))
    det = np.atleast_1d(det)
    G = rate_generator(det, table, pulse, relax, gamma_eff, averaged=True)
    state = evolve(state, G, pulse.duration, threads)
    if settle > 0:
        state = evolve(state, relaxation_generator(table, relax), settle)
    mask = fully_addressed(det, table, pulse, gamma_eff)
    ground = state[:, :N_LEVELS]
    dev = float(np.abs(ground[mask] - 1.0 / 3).max()) if mask.any() else 0.0
    messages = []
    status = "ok"
    if pulse.span < table.ground.max_splitting:
        status = "partial"
        msg = (f"erase span {pulse.span:g} Hz is smaller than the largest ground "
               f"splitting {table.ground.max_splitting:g} Hz")
        messages.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return state, EraseReport(status, dev, int(mask.sum()), int((~mask).sum()), messages)


@dataclass
class RegimeReport:
    """Pass/fail for the three hole-burning conditions with their ratios."""

    inhomogeneous_ratio: float
    laser_ratio: float
    storage_ratio: float
    threshold: float = 10.0
    flip_flop_rate_range: tuple = FLIP_FLOP_RATE_RANGE
    spin_relaxation_rate: float = float("nan")

    @property
    def inhomogeneous_ok(self):
        return self.inhomogeneous_ratio >= self.threshold

    @property
    def laser_ok(self):
        return self.laser_ratio >= self.threshold

    @property
    def storage_ok(self):
        return self.storage_ratio >= self.threshold

    @property
    def passed(self):
        return self.inhomogeneous_ok and self.laser_ok and self.storage_ok

    @property
    def flip_flop_limited(self):
        """True if the expected flip-flop rate could explain the spin relaxation."""
        return self.flip_flop_rate_range[1] >= 0.1 * self.spin_relaxation_rate

    def rows(self):
        return [
            ("inhomogeneous", self.inhomogeneous_ratio, self.inhomogeneous_ok),
            ("laser", self.laser_ratio, self.laser_ok),
            ("storage", self.storage_ratio, self.storage_ok),
        ]


def validate_shb_regime(linewidths, t1_spin, tau_exc, threshold=10.0):
    """
    Check gamma_inh >> gamma_h, gamma_h >> gamma_laser and that the hole
    storage time (spin T1) outlives the excited state, each by ``threshold``.
    """
    gl = linewidths.gamma_laser
    return RegimeReport(
        inhomogeneous_ratio=linewidths.gamma_inh / linewidths.gamma_h if linewidths.gamma_h > 0 else np.inf,
        laser_ratio=linewidths.gamma_h / gl if gl > 0 else np.inf,
        storage_ratio=t1_spin / tau_exc,
        threshold=threshold,
        spin_relaxation_rate=1.0 / t1_spin,
    )
