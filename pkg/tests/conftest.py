import numpy as np
import pytest

from holespec.config import (
    build_ensemble, build_linewidths, build_relaxation, build_sequence, parse_config,
    readout_axis,
)
from holespec.levels import (
    DEFAULT_EXCITED_OFFSETS, DEFAULT_GROUND_OFFSETS, HyperfineManifold, InhomogeneousProfile,
    build_transition_table, single_isotope_ensemble,
)
from holespec.readout import SHBExperiment, hole_decay_series

DECAY_DELAYS = np.array([5, 10, 20, 50, 100, 200, 500, 1000]) * 1e-3


@pytest.fixture(scope="session")
def ref_cfg():
    return parse_config("paper.cfg")


def make_experiment(cfg, **kw):
    return SHBExperiment(build_ensemble(cfg), build_relaxation(cfg), build_linewidths(cfg),
                         build_sequence(cfg), readout_axis(cfg), cfg.output.alpha0,
                         cfg.output.transmission, **kw)


@pytest.fixture(scope="session")
def ref_experiment(ref_cfg):
    return make_experiment(ref_cfg)


@pytest.fixture(scope="session")
def ref_run(ref_experiment):
    return ref_experiment.run()


@pytest.fixture(scope="session")
def ref_decay(ref_experiment):
    return hole_decay_series(ref_experiment, DECAY_DELAYS)


@pytest.fixture(scope="session")
def default_table():
    return build_transition_table(HyperfineManifold(DEFAULT_GROUND_OFFSETS, "ground"),
                                  HyperfineManifold(DEFAULT_EXCITED_OFFSETS, "excited"))


@pytest.fixture
def small_ensemble(default_table):
    return single_isotope_ensemble(InhomogeneousProfile.single(50e9), 2e9, 101, default_table)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
