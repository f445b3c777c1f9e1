# this_file: src/hiergap/__init__.py
"""Renormalisation-group spectral-gap bounds for hierarchical spin systems."""

from hiergap.__version__ import __version__
from hiergap.certificate import BLCertificate, GapBounds, build_certificate, certificate_deltas
from hiergap.config import ExperimentConfig, load_config
from hiergap.errors import HierGapError
from hiergap.experiment import run_experiment, run_model_flow, tune_critical_nu
from hiergap.lattice import CovarianceDecomposition, HierLattice, build_covariance_decomposition
from hiergap.rg import rg_step, run_flow

__all__ = [
    "BLCertificate",
    "CovarianceDecomposition",
    "ExperimentConfig",
    "GapBounds",
    "HierGapError",
    "HierLattice",
    "__version__",
    "build_certificate",
    "build_covariance_decomposition",
    "certificate_deltas",
    "load_config",
    "rg_step",
    "run_experiment",
    "run_flow",
    "run_model_flow",
    "tune_critical_nu",
]
