import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from h2oformer.model import H2OFormer, ModelConfig  # noqa: E402
from h2oformer.topology import load_topology, topology_from_dict  # noqa: E402

ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def micro6():
    return load_topology("micro6")


@pytest.fixture(scope="session")
def imigue22():
    return load_topology("imigue22")


@pytest.fixture(scope="session")
def smg25():
    return load_topology("smg25")


@pytest.fixture(scope="session")
def quad4():
    """4-joint path with two 2-joint hyperedges."""
    return topology_from_dict({"name": "quad4", "num_vertices": 4, "bones": [[0, 1], [1, 2], [2, 3]],
                               "hyperedges": [[0, 1], [2, 3]], "root": 0})


def micro_config(**kw) -> ModelConfig:
    base = dict(num_joints=6, d_model=12, temporal_len=8, num_heads=2, encoder_blocks=2, decoder_blocks=1,
                topology="micro6", dtype="float64")
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def micro_model(micro6):
    return H2OFormer(micro_config(), micro6, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
