"""Test suite for hiergap package structure."""

import pytest

import hiergap


@pytest.mark.unit
def test_version():
    """Verify package exposes version."""
    assert isinstance(hiergap.__version__, str)
    assert hiergap.__version__


@pytest.mark.unit
def test_package_exports():
    assert isinstance(hiergap.__all__, list)
    for name in hiergap.__all__:
        assert hasattr(hiergap, name), name
    assert callable(hiergap.run_flow)
    assert issubclass(hiergap.HierGapError, Exception)


@pytest.mark.unit
def test_submodules():
    """Test that submodules can be imported."""
    from hiergap import certificate, cli, config, dynamics, errors, experiment, lattice, oracle, potentials, rg

    assert cli.main
    for module in (certificate, config, dynamics, errors, experiment, lattice, oracle, potentials, rg):
        assert module.__doc__
