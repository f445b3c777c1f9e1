"""Pytest configuration and fixtures for hiergap tests."""

import tempfile
from collections.abc import Iterator
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from loguru import logger

from hiergap.config import ExperimentConfig, apply_overrides
from hiergap.lattice import HierLattice, build_covariance_decomposition

# The loguru mock below is autouse and function-scoped; hypothesis tests do not depend on it.
settings.register_profile("hiergap", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("hiergap")


@pytest.fixture(autouse=True)
def mock_loguru_logger():
    """Mock loguru.logger to prevent log output during tests."""
    with (
        patch.object(logger, "debug") as mock_debug,
        patch.object(logger, "info") as mock_info,
        patch.object(logger, "warning") as mock_warning,
        patch.object(logger, "error") as mock_error,
        patch.object(logger, "exception") as mock_exception,
    ):
        yield {
            "debug": mock_debug,
            "info": mock_info,
            "warning": mock_warning,
            "error": mock_error,
            "exception": mock_exception,
        }


@pytest.fixture
def temp_dir() -> Iterator[Path]:
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_lattice() -> HierLattice:
    """L=2, d=2, N=2: sixteen sites, small enough for every dense oracle."""
    return HierLattice(L=2, N=2, d=2)


@pytest.fixture
def massive_decomp(small_lattice):
    return build_covariance_decomposition(small_lattice, "massive", m2=0.1)


@pytest.fixture
def sine_gordon_decomp(small_lattice):
    return build_covariance_decomposition(small_lattice, "sine-gordon", beta=0.3)


@pytest.fixture
def sg_config(temp_dir) -> ExperimentConfig:
    """Small Sine-Gordon experiment writing into the temporary directory."""
    return apply_overrides(
        ExperimentConfig(),
        [
            "lattice.N=2",
            "model.beta=0.2",
            "model.q_max=32",
            f'output_dir="{temp_dir.as_posix()}"',
        ],
    )
