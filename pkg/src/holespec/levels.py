"""
Hyperfine level structure, optical transition table and the discretised
inhomogeneous ensemble.

Each ion has three doubly degenerate ground sublevels (+-1/2, +-3/2, +-5/2)
and three excited ones. A ground sublevel j couples to every excited
sublevel k, giving nine optical lines per ion at ``delta + offset[j, k]``.
"""

from dataclasses import dataclass, field

import numpy as np

from .spectro import gaussian

N_LEVELS = 3
DEFAULT_GROUND_OFFSETS = (0.0, 30e6, 70e6)
DEFAULT_EXCITED_OFFSETS = (0.0, 40e6, 90e6)
PLAUSIBLE_GAP = (1e6, 200e6)


@dataclass(frozen=True)
class HyperfineManifold:
    """Three sublevel energies (Hz), stored sorted ascending."""

    offsets: tuple
    label: str = "ground"
    gap_window: tuple = PLAUSIBLE_GAP

    def __post_init__(self):
        if self.label not in ("ground", "excited"):
            raise ValueError(f"label must be 'ground' or 'excited', got {self.label!r}")
        offs = np.asarray(self.offsets, dtype=float)
        if offs.shape != (N_LEVELS,) or not np.all(np.isfinite(offs)):
            raise ValueError(f"{self.label} manifold needs three finite offsets, got {self.offsets!r}")
        offs = np.sort(offs)
        lo, hi = self.gap_window
        gaps = np.diff(offs)
        # an all-zero manifold is allowed as a degenerate test case
        if np.any(gaps != 0.0):
            pairwise = np.abs(offs[:, None] - offs[None, :])[np.triu_indices(N_LEVELS, 1)]
            if np.any(pairwise < lo) or np.any(pairwise > hi):
                raise ValueError(
                    f"{self.label} splittings {pairwise.tolist()} Hz outside "
                    f"plausibility window [{lo:g}, {hi:g}] Hz")
        object.__setattr__(self, "offsets", tuple(float(o) for o in offs))

    @property
    def array(self):
        return np.array(self.offsets)

    @property
    def max_splitting(self):
        return self.offsets[-1] - self.offsets[0]


@dataclass(frozen=True)
class TransitionTable:
    """
    Nine optical lines of one ion.

    ``offsets[j, k]`` is the line position of ground j -> excited k relative
    to the class detuning, ``strengths[j, k]`` its relative strength (max 1),
    and ``branching[k, j]`` the probability that excited k decays to ground j.
    """

    ground: HyperfineManifold
    excited: HyperfineManifold
    strengths: np.ndarray
    branching: np.ndarray

    @property
    def offsets(self):
        return self.excited.array[None, :] - self.ground.array[:, None]

    def lines(self):
        """Iterate ``(j, k, offset, strength)`` over the nine lines."""
        offs = self.offsets
        for j in range(N_LEVELS):
            for k in range(N_LEVELS):
                yield j, k, offs[j, k], self.strengths[j, k]

    @property
    def span(self):
        """Half-range of line offsets measured from zero."""
        return float(np.max(np.abs(self.offsets)))


def build_transition_table(ground, excited, strengths=None, branching=None, tol=1e-9):
    """
    Assemble the nine-line table from two manifolds.

    Defaults: all strengths 1 and uniform branching 1/3. Supplied strengths
    are rescaled so the largest is 1.
    """
    if ground.label != "ground" or excited.label != "excited":
        raise ValueError("build_transition_table expects (ground, excited) manifolds")
    if strengths is None:
        s = np.ones((N_LEVELS, N_LEVELS))
    else:
        s = np.array(strengths, dtype=float)
        if s.shape != (N_LEVELS, N_LEVELS) or not np.all(np.isfinite(s)):
            raise ValueError(f"strengths must be a finite 3x3 array, got shape {s.shape}")
        if np.any(s < 0):
            raise ValueError("transition strengths must be >= 0")
        if s.max() <= 0:
            raise ValueError("at least one transition strength must be > 0")
        s = s / s.max()
    if branching is None:
        b = np.full((N_LEVELS, N_LEVELS), 1.0 / N_LEVELS)
    else:
        b = np.array(branching, dtype=float)
        if b.shape != (N_LEVELS, N_LEVELS) or not np.all(np.isfinite(b)):
            raise ValueError(f"branching must be a finite 3x3 array, got shape {b.shape}")
        if np.any(b < 0):
            raise ValueError("branching ratios must be >= 0")
        rows = b.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > tol):
            raise ValueError(f"branching rows must sum to 1, got {rows.tolist()}")
        # exact row-stochasticity after a passing tolerance check
        b = b / rows[:, None]
    s.setflags(write=False)
    b.setflags(write=False)
    return TransitionTable(ground, excited, s, b)


@dataclass(frozen=True)
class GaussianComponent:
    center: float
    fwhm: float
    weight: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.center) and self.fwhm > 0 and self.weight > 0):
            raise ValueError(f"invalid Gaussian component {self!r}")


@dataclass(frozen=True)
class InhomogeneousProfile:
    """Weighted Gaussian mixture. No components means a flat profile."""

    components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @classmethod
    def single(cls, fwhm, center=0.0):
        return cls((GaussianComponent(center, fwhm, 1.0),))

    @classmethod
    def flat(cls):
        return cls(())

    @property
    def is_flat(self):
        return not self.components

    def shifted(self, shift):
        return InhomogeneousProfile(tuple(
            GaussianComponent(c.center + shift, c.fwhm, c.weight) for c in self.components))


def inhomogeneous_density(profile, delta):
    """
    Probability density (1/Hz) of finding an ion at detuning ``delta``.

    A flat profile has no normalisable density; it returns ones.
    """
    delta = np.asarray(delta, dtype=float)
    if profile.is_flat:
        return np.ones_like(delta) if delta.ndim else 1.0
    total = sum(c.weight for c in profile.components)
    out = sum(c.weight * gaussian(delta, c.center, c.fwhm) for c in profile.components)
    return out / total


@dataclass(frozen=True)
class EnsembleClasses:
    detunings: np.ndarray
    weights: np.ndarray
    bin_width: float

    def __len__(self):
        return self.detunings.size

    @property
    def bounds(self):
        half = 0.5 * self.bin_width
        return self.detunings[0] - half, self.detunings[-1] + half

    def shifted(self, shift):
        return EnsembleClasses(self.detunings + shift, self.weights, self.bin_width)


def discretize_ensemble(profile, span, n_classes, center=0.0):
    """
    Split ``center +/- span/2`` into ``n_classes`` equal bins and weight
    each class by the profile density at its centre (weights sum to 1).
    """
    if not (np.isfinite(span) and span > 0):
        raise ValueError(f"span must be > 0, got {span!r}")
    n_classes = int(n_classes)
    if n_classes < 3:
        raise ValueError(f"need at least 3 classes, got {n_classes}")
    bin_width = span / n_classes
    det = center + (np.arange(n_classes) - 0.5 * (n_classes - 1)) * bin_width
    dens = np.asarray(inhomogeneous_density(profile, det), dtype=float)
    if profile.is_flat:
        dens = np.ones(n_classes)
    total = dens.sum()
    if not total > 0:
        raise ValueError("profile has no weight inside the discretised span")
    w = dens / total
    det.setflags(write=False)
    w.setflags(write=False)
    return EnsembleClasses(det, w, bin_width)


@dataclass(frozen=True)
class Isotope:
    abundance: float
    table: TransitionTable
    name: str = ""


@dataclass(frozen=True)
class EnsembleModel:
    """Discretised ensemble plus one or two isotope species."""

    profile: InhomogeneousProfile
    classes: EnsembleClasses
    isotopes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        isos = tuple(self.isotopes)
        if not 1 <= len(isos) <= 2:
            raise ValueError(f"ensemble needs one or two isotopes, got {len(isos)}")
        ab = np.array([i.abundance for i in isos])
        if np.any(ab <= 0) or abs(ab.sum() - 1.0) > 1e-9:
            raise ValueError(f"isotope abundances must be > 0 and sum to 1, got {ab.tolist()}")
        if abs(self.classes.weights.sum() - 1.0) > 1e-9:
            raise ValueError("class weights must sum to 1")
        object.__setattr__(self, "isotopes", isos)

    @property
    def max_line_offset(self):
        return max(i.table.span for i in self.isotopes)


def single_isotope_ensemble(profile, span, n_classes, table, center=0.0):
    classes = discretize_ensemble(profile, span, n_classes, center)
    return EnsembleModel(profile, classes, (Isotope(1.0, table),))
