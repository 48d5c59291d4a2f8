from __future__ import annotations

import logging
import os
from unittest.mock import patch

import numpy as np
import pytest

from neural_tomography._povm import SicSearchConfig, build_sic
from neural_tomography._sampler import DatasetConfig, generate_dataset


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run full-size acceptance tests"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="full-size run, use --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# Common fixtures
# ===============
@pytest.fixture(scope="session", autouse=True)
def set_terminal_properties():
    with patch.dict(os.environ, {"COLUMNS": "100", "TERM": "xterm-256color"}):
        yield


@pytest.fixture(autouse=True)
def package_log_level():
    # the CLI tests install a handler and change the level of the package logger
    logger = logging.getLogger("neural_tomography")
    level, handlers = logger.level, list(logger.handlers)
    yield
    logger.setLevel(level)
    logger.handlers[:] = handlers


@pytest.fixture()
def rng():
    return np.random.default_rng(20240501)


# Measurement fixtures
# ====================
@pytest.fixture(scope="session")
def sic2():
    return build_sic(SicSearchConfig(dim=2))


@pytest.fixture(scope="session")
def sic6():
    return build_sic(SicSearchConfig(dim=6))


@pytest.fixture(scope="session")
def gouy_dataset(sic6):
    """60 Gouy-corrupted records with 2000 shots each."""
    return generate_dataset(DatasetConfig(n_states=60, shots=2000, spam="gouy", seed=3), sic6)
