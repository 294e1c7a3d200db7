import numpy as np
import pytest

from torusflow.ceiling import assemble_phi
from torusflow.config import ExperimentConfig
from torusflow.pairgen import GrowthLaw, build_pair


def _desk_parts():
    cfg = ExperimentConfig.bundled("desk")
    pair = build_pair(cfg.law(), cfg["pair"]["levels"], seed=cfg.pair_seed())
    c = cfg["ceiling"]
    return cfg, pair, c


@pytest.fixture(scope="session")
def desk_config():
    return ExperimentConfig.bundled("desk")


@pytest.fixture(scope="session")
def desk_pair():
    return _desk_parts()[1]


@pytest.fixture(scope="session")
def desk_spec(tmp_path_factory):
    """The bundled desk ceiling, assembled once per session."""
    _, pair, c = _desk_parts()
    return assemble_phi(pair, radii=c["radii"], taper=c["taper"], eps_budget=c["eps_budget"])


@pytest.fixture(scope="session")
def unit_spec():
    """phi = 1: a pair with no usable level."""
    pair = build_pair(GrowthLaw.power(2, 50), 1)
    return assemble_phi(pair)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_pair():
    """The desk seed with only level 3 built."""
    return build_pair(GrowthLaw.explicit([31, 32]), 1, seed=((0, 1, 1, 1), (0, 1, 1)))


@pytest.fixture(scope="session")
def small_spec(small_pair):
    return assemble_phi(small_pair, radii=[(32, 64)])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
