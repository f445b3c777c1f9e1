# this_file: src/hiergap/certificate.py
"""Recursive Brascamp-Lieb certificate and the spectral-gap bounds built on it.

Everything here is band arithmetic: Q_j and P_j commute, so D_j, the covariances and
the bound D_0 <= sum_k delta_k lambda_k Q_k are diagonal in the bands {P_1..P_N, Q_N}.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from hiergap.errors import CertificateInvalidError, NumericalError, ParameterError
from hiergap.lattice import CovarianceDecomposition, HierarchicalOperator, HierLattice, weighted_block_sum
from hiergap.potentials import dg_effective_potential, dg_uniform_constant
from hiergap.rg import RGFlowState, final_curvature, scale_states


class BLCertificate(BaseModel):
    """Per-scale epsilons, accumulated deltas and the resulting D_0 band values."""

    model_config = ConfigDict(ser_json_inf_nan="null")

    epsilons: list[float]
    deltas: list[float]
    band_eigenvalues: list[float]
    gap_lower_bound: float
    valid: bool
    start_scale: int = 0

    def d0_operator(self, lattice: HierLattice) -> HierarchicalOperator:
        return HierarchicalOperator(lattice, np.array(self.band_eigenvalues))

    def write(self, path: Path, config_hash: str | None = None) -> Path:
        document = json.loads(self.model_dump_json())
        if config_hash is not None:
            document["config_hash"] = config_hash
        path.write_text(json.dumps(document, indent=2), encoding="utf-8")
        return path


def recurrence_step(
    d_plus: np.ndarray | float,
    lam: float,
    epsilon: float,
    identity_bands: np.ndarray | None = None,
) -> np.ndarray | float:
    """D = lambda/(1 - eps) on the bands where Q_j is the identity, plus D_+/(1 - eps)^2."""
    if not 0.0 <= epsilon < 1.0:
        msg = f"recursion step needs 0 <= epsilon < 1, got {epsilon}"
        raise CertificateInvalidError(msg)
    factor = 1.0 / (1.0 - epsilon)
    identity = 1.0 if identity_bands is None else np.asarray(identity_bands, dtype=float)
    return lam * factor * identity + d_plus * factor**2


def certificate_deltas(epsilons: Sequence[float]) -> np.ndarray:
    """delta_k = (1 - eps_k)^-1 prod_{l<k} (1 - eps_l)^-2."""
    eps = np.asarray(epsilons, dtype=float)
    previous = np.concatenate([[1.0], np.cumprod((1.0 - eps[:-1]) ** -2)])
    return previous / (1.0 - eps)


def delta_exp_bound(epsilons: Sequence[float]) -> np.ndarray:
    """exp(2 sum_{l<=k} eps_l + 4 sum_{l<=k} eps_l^2), an upper bound for delta_k when eps_l <= 1/4."""
    eps = np.asarray(epsilons, dtype=float)
    return np.exp(2.0 * np.cumsum(eps) + 4.0 * np.cumsum(eps**2))


def build_certificate(
    decomp: CovarianceDecomposition,
    epsilons: Sequence[float],
    start_scale: int = 0,
) -> BLCertificate:
    """Assemble the certificate for scales start_scale..N.

    Invalid inputs (some eps_k >= 1) give ``valid=False`` and a zero bound rather than an
    exception so that sweeps can record the invalid region.
    """
    lattice = decomp.lattice
    eps = np.asarray(epsilons, dtype=float)
    if eps.shape != (lattice.N + 1,):
        msg = f"expected {lattice.N + 1} epsilons, got {eps.size}"
        raise ParameterError(msg)
    if np.any(eps < 0):
        msg = "epsilons must be nonnegative"
        raise ParameterError(msg)
    lambdas = np.where(np.arange(lattice.N + 1) >= start_scale, decomp.lambdas, 0.0)
    if np.any(eps >= 1.0):
        logger.warning("certificate invalid: max epsilon {:.4g}", float(eps.max()))
        infinite = [float("inf")] * (lattice.N + 1)
        return BLCertificate(
            epsilons=eps.tolist(),
            deltas=infinite,
            band_eigenvalues=infinite,
            gap_lower_bound=0.0,
            valid=False,
            start_scale=start_scale,
        )
    deltas = certificate_deltas(eps)
    bands = weighted_block_sum(lattice, deltas * lambdas).bands
    recursed: np.ndarray | float = 0.0
    for scale in range(lattice.N, start_scale - 1, -1):
        identity = (np.arange(lattice.N + 1) >= scale).astype(float)
        recursed = recurrence_step(recursed, float(lambdas[scale]), float(eps[scale]), identity)
    recursed = np.asarray(recursed)
    if start_scale == 0 and not np.allclose(recursed, bands, rtol=1e-10, atol=0.0):
        msg = f"band recursion and product formula disagree: {recursed} vs {bands}"
        raise NumericalError(msg)
    return BLCertificate(
        epsilons=eps.tolist(),
        deltas=deltas.tolist(),
        band_eigenvalues=bands.tolist(),
        gap_lower_bound=float(1.0 / bands.max()),
        valid=True,
        start_scale=start_scale,
    )


def certificate_from_flow(
    states: Sequence[RGFlowState],
    decomp: CovarianceDecomposition,
) -> BLCertificate:
    """Certificate from the epsilons recorded along a flow; scales before the flow start get 0."""
    per_scale = scale_states(states)
    start = per_scale[0].scale
    epsilons = np.zeros(decomp.lattice.N + 1)
    for state in per_scale:
        epsilons[state.scale] = state.diagnostics.epsilon
    return build_certificate(decomp, epsilons, start_scale=start)


class GapBounds(BaseModel):
    """Lower (certificate) and upper (variance test function) bounds on the spectral gap."""

    model_config = ConfigDict(ser_json_inf_nan="null")

    lower: float
    upper: float
    valid: bool
    variance_per_site: float
    final_curvature: float
    certificate: BLCertificate


def variance_per_site(states: Sequence[RGFlowState], decomp: CovarianceDecomposition) -> float:
    """var(sum_x phi_x) / |Lambda| = S - W''_{N,N}(0) S^2 / |Lambda| with S = sum_j lambda_j."""
    constant = decomp.constant_band_variance()
    return constant - final_curvature(states) * constant**2 / decomp.lattice.volume


def sg_gap_bounds(states: Sequence[RGFlowState], decomp: CovarianceDecomposition) -> GapBounds:
    """Certificate lower bound and |Lambda| / var(F) upper bound for F = sum_x phi_x.

    Applies to both the Sine-Gordon flow and the phi^4 flow; for the free field both bounds
    equal the constant-mode mass.
    """
    certificate = certificate_from_flow(states, decomp)
    variance = variance_per_site(states, decomp)
    upper = 1.0 / variance if variance > 0 else float("inf")
    if not certificate.valid:
        logger.warning("gap lower bound unavailable: certificate invalid")
    return GapBounds(
        lower=certificate.gap_lower_bound,
        upper=upper,
        valid=certificate.valid,
        variance_per_site=variance,
        final_curvature=final_curvature(states),
        certificate=certificate,
    )


phi4_gap_bounds = sg_gap_bounds


class DGGapBounds(GapBounds):
    single_site_constant: float
    site_variance_sup: float


def dg_gap_bounds(states: Sequence[RGFlowState], decomp: CovarianceDecomposition) -> DGGapBounds:
    """Discrete Gaussian sandwich through the Sine-Gordon reduction.

    ``states`` is the flow of W_1 = L^d V_DG started at scale 1. The lower bound is
    1 / (c (1 + D_r beta^2 v)) with c the uniform single-site constant, v the largest
    single-site variance and D_r = sum_{k >= 1} delta_k lambda_k.
    """
    if decomp.beta is None:
        msg = "Discrete Gaussian bounds need a sine-gordon decomposition"
        raise ParameterError(msg)
    beta = decomp.beta
    bounds = sg_gap_bounds(states, decomp)
    constant = dg_uniform_constant(beta)
    spread = dg_effective_potential(beta).site_variance_sup()
    if bounds.valid:
        remainder = bounds.certificate.band_eigenvalues[-1]
        lower = 1.0 / (constant * (1.0 + remainder * beta**2 * spread))
    else:
        lower = 0.0
    return DGGapBounds(
        lower=lower,
        upper=bounds.upper,
        valid=bounds.valid,
        variance_per_site=bounds.variance_per_site,
        final_curvature=bounds.final_curvature,
        certificate=bounds.certificate,
        single_site_constant=constant,
        site_variance_sup=spread,
    )
