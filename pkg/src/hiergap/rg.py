# this_file: src/hiergap/rg.py
"""Renormalised-potential flow in per-block scalar form.

One step maps the scale-j block function W_j to

    W_{j+1}(phi) = -L^d log E[exp(-W_j(phi + zeta))],   zeta ~ N(0, s^2 I_n),

with s^2 = lambda_j L^{-dj}. The last step at j = N integrates the constant mode without
reblocking (factor 1). Radial potentials are integrated with Gauss-Hermite quadrature
(times generalised Gauss-Laguerre for the transverse radius when n >= 2); Fourier
potentials are smoothed exactly with the heat kernel in coefficient space.
"""

from __future__ import annotations

import json
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from loguru import logger
from numpy.polynomial.hermite_e import hermegauss
from pydantic import BaseModel
from scipy import stats
from scipy.special import gammaln, logsumexp, roots_genlaguerre

from hiergap.errors import ParameterError, QuadratureError, ResolutionError
from hiergap.lattice import CovarianceDecomposition
from hiergap.potentials import (
    ALIAS_TOLERANCE,
    FourierPotential,
    RadialPotential,
    aliasing_energy,
    coefficients_from_samples,
    fourier_norm,
    fourier_second_derivative_sup,
    min_hessian_eigenvalue,
    potential_to_json,
    radial_hessian_bounds,
)

QUADRATURE_START = 64
QUADRATURE_MAX_1D = 1024
QUADRATURE_MAX_2D = 256
QUADRATURE_TOL = 1e-10
CONTRACTION_GUARD = 0.2
CHUNK_ENTRIES = 1 << 22

PotentialRep = RadialPotential | FourierPotential


@lru_cache(maxsize=16)
def hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Probabilists' Gauss-Hermite nodes with weights normalised to a probability."""
    nodes, weights = hermegauss(order)
    return nodes, weights / math.sqrt(2.0 * math.pi)


@lru_cache(maxsize=16)
def laguerre_rule(order: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalised Gauss-Laguerre rule for the Gamma(alpha + 1) law."""
    nodes, weights = roots_genlaguerre(order, alpha)
    return nodes, weights * math.exp(-gammaln(alpha + 1.0))


def _converged(previous: np.ndarray, current: np.ndarray, tol: float) -> bool:
    scale = np.maximum(1.0, np.abs(current))
    return bool(np.all(np.abs(current - previous) <= tol * scale))


def _tilt(points: np.ndarray, centres: np.ndarray, std: float, nodes: np.ndarray) -> np.ndarray:
    """log of N(z - c) / N(z) with c = (point - centre) / std, shape (points, nodes)."""
    shift = (points - centres) / std
    return shift[:, None] * nodes[None, :] - 0.5 * shift[:, None] ** 2


def laplace_centres(pot: RadialPotential, points: np.ndarray, variance: float) -> np.ndarray:
    """Knot x minimising W(|x|) + (x - r)^2 / (2 variance) for every r in ``points``.

    Gauss rules are recentred there; far from the origin the mass of e^{-W(r + zeta)} sits
    many standard deviations away from r.
    """
    knots = np.concatenate([-pot.grid[:0:-1], pot.grid])
    values = np.concatenate([pot.values[:0:-1], pot.values])
    out = np.empty(points.size)
    step = max(1, CHUNK_ENTRIES // knots.size)
    for start in range(0, points.size, step):
        chunk = points[start : start + step]
        penalty = values[None, :] + (knots[None, :] - chunk[:, None]) ** 2 / (2.0 * variance)
        out[start : start + step] = knots[np.argmin(penalty, axis=1)]
    return out


def _log_average_1d(
    func: Callable[[np.ndarray], np.ndarray],
    points: np.ndarray,
    std: float,
    order: int,
    centres: np.ndarray | None = None,
) -> np.ndarray:
    nodes, weights = hermite_rule(order)
    centres = points if centres is None else centres
    out = np.empty(points.size)
    step = max(1, CHUNK_ENTRIES // order)
    for start in range(0, points.size, step):
        chunk, centre = points[start : start + step], centres[start : start + step]
        exponent = -func(centre[:, None] + std * nodes[None, :]) + _tilt(chunk, centre, std, nodes)
        out[start : start + step] = logsumexp(exponent, axis=1, b=weights[None, :])
    return out


def _log_average_radial(
    pot: RadialPotential, n: int, radii: np.ndarray, std: float, order: int, centres: np.ndarray
) -> np.ndarray:
    h_nodes, h_weights = hermite_rule(order)
    l_nodes, l_weights = laguerre_rule(order, 0.5 * (n - 3))
    transverse_sq = 2.0 * std**2 * l_nodes
    weights = (h_weights[:, None] * l_weights[None, :]).reshape(-1)
    out = np.empty(radii.size)
    step = max(1, CHUNK_ENTRIES // (order * order))
    for start in range(0, radii.size, step):
        chunk, centre = radii[start : start + step], centres[start : start + step]
        shifted = (centre[:, None] + std * h_nodes[None, :]) ** 2
        radius = np.sqrt(shifted[:, :, None] + transverse_sq[None, None, :])
        exponent = -pot.radial(radius) + _tilt(chunk, centre, std, h_nodes)[:, :, None]
        out[start : start + step] = logsumexp(exponent.reshape(chunk.size, -1), axis=1, b=weights[None, :])
    return out


def log_gaussian_average(
    evaluate: Callable[[int], np.ndarray],
    max_order: int,
    tol: float = QUADRATURE_TOL,
) -> np.ndarray:
    """Escalate the quadrature order from 64 by doubling until successive results agree."""
    order = QUADRATURE_START
    previous = evaluate(order)
    while order < max_order:
        order *= 2
        current = evaluate(order)
        if _converged(previous, current, tol):
            logger.debug("quadrature converged at order {}", order)
            return current
        previous = current
    msg = f"Gaussian quadrature did not converge to {tol:g} by order {max_order}"
    raise QuadratureError(msg)


def rg_step_scalar(
    potential: Callable[[np.ndarray], np.ndarray],
    variance: float,
    reblock: int,
    points: np.ndarray,
    tol: float = QUADRATURE_TOL,
    centres: np.ndarray | None = None,
) -> np.ndarray:
    """W_+(phi) = -reblock * log E[exp(-W(phi + zeta))] for a scalar field, at ``points``.

    ``centres`` moves the Gauss-Hermite rule for each point; the tilt keeps the average exact.
    """
    if variance < 0:
        msg = f"fluctuation variance must be >= 0, got {variance}"
        raise ParameterError(msg)
    points = np.asarray(points, dtype=float)
    if variance == 0:
        return reblock * potential(points)
    std = math.sqrt(variance)
    averaged = log_gaussian_average(
        lambda order: _log_average_1d(potential, points, std, order, centres), QUADRATURE_MAX_1D, tol
    )
    return -reblock * averaged


def rg_step_radial(
    pot: RadialPotential,
    variance: float,
    L: int,
    d: int,
    n: int | None = None,
    out_grid: np.ndarray | None = None,
    last_step: bool = False,
    tol: float = QUADRATURE_TOL,
) -> RadialPotential:
    """One renormalisation step for an O(n)-invariant block potential.

    The output lives on ``out_grid``; by default the input grid contracted by L^{-d/4}, the
    ratio of consecutive large-field scales (1/L at d = 4). The last step keeps the grid.
    """
    components = pot.n if n is None else n
    reblock = 1 if last_step else L**d
    if out_grid is None:
        out_grid = pot.grid if last_step else pot.grid * float(L) ** (-d / 4)
    if variance < 0:
        msg = f"fluctuation variance must be >= 0, got {variance}"
        raise ParameterError(msg)
    if variance == 0:
        values = reblock * pot.radial(out_grid)
    elif components == 1:
        centres = laplace_centres(pot, out_grid, variance)
        values = rg_step_scalar(pot.radial, variance, reblock, out_grid, tol, centres)
    else:
        std = math.sqrt(variance)
        centres = laplace_centres(pot, out_grid, variance)
        averaged = log_gaussian_average(
            lambda order: _log_average_radial(pot, components, out_grid, std, order, centres), QUADRATURE_MAX_2D, tol
        )
        values = -reblock * averaged
    return RadialPotential(components, out_grid, values, pot.block_volume * reblock)


def gaussian_smoothing(pot: FourierPotential, variance: float) -> FourierPotential:
    """Coefficients of E[F(. + zeta)]: F(q) exp(-variance q^2 / 2)."""
    q = np.arange(pot.q_max + 1)
    return FourierPotential(pot.coeffs * np.exp(-0.5 * variance * q**2))


def in_contraction_domain(pot: FourierPotential) -> bool:
    return fourier_norm(pot) <= CONTRACTION_GUARD


def rg_step_fourier(
    pot: FourierPotential,
    beta: float,
    L: int,
    last_step: bool = False,
    scale: int = 1,
    d: int = 2,
    variance: float | None = None,
) -> FourierPotential:
    """One Sine-Gordon step on a 4 Q_max circle grid.

    The default variance is 1/beta at scale 0 and sigma/beta afterwards, the per-site
    variance of the sine-gordon decomposition at d = 2. Callers running other dimensions
    pass ``variance`` explicitly.
    """
    if variance is None:
        variance = 1.0 / beta if scale == 0 else (1.0 - L**-2) / beta
    if not in_contraction_domain(pot):
        logger.warning("Sine-Gordon step outside the contraction domain: norm {:.4g}", fourier_norm(pot))
    reblock = 1 if last_step else L**d
    points = 4 * pot.q_max
    samples = pot.sample(points)
    shift = float(samples.min())
    weights = np.exp(-(samples - shift))
    if aliasing_energy(weights) > ALIAS_TOLERANCE:
        msg = f"e^-V is not resolved by {points} circle points"
        raise ResolutionError(msg)
    spectrum = np.fft.rfft(weights)
    q = np.arange(spectrum.size)
    smoothed = np.fft.irfft(spectrum * np.exp(-0.5 * variance * q**2), n=points)
    renormalised = reblock * (shift - np.log(smoothed))
    if aliasing_energy(renormalised) > ALIAS_TOLERANCE:
        msg = "renormalised potential is not resolved on the circle grid"
        raise ResolutionError(msg)
    return FourierPotential(coefficients_from_samples(renormalised, pot.q_max))


class CouplingFit(NamedTuple):
    g: float
    nu: float
    u: float
    residual: float


def fit_couplings(pot: RadialPotential, window: float) -> CouplingFit:
    """Least-squares fit of W/|B| = g r^4 / 4 + nu r^2 / 2 + u on 0 <= r <= window."""
    if window > pot.r_max:
        msg = f"fit window {window:.3g} exceeds grid radius {pot.r_max:.3g}"
        raise ResolutionError(msg)
    mask = pot.grid <= window
    if int(mask.sum()) < 4:
        msg = f"fit window {window:.3g} holds fewer than 4 knots"
        raise ResolutionError(msg)
    r = pot.grid[mask]
    target = pot.per_site()[mask]
    design = np.column_stack([0.25 * r**4, 0.5 * r**2, np.ones_like(r)])
    (g, nu, u), *_ = np.linalg.lstsq(design, target, rcond=None)
    misfit = target - design @ np.array([g, nu, u])
    spread = float(np.sqrt(np.mean((target - target.mean()) ** 2)))
    residual = float(np.sqrt(np.mean(misfit**2))) / spread if spread > 0 else float(np.sqrt(np.mean(misfit**2)))
    return CouplingFit(float(g), float(nu), float(u), residual)


class FlowDiagnostics(BaseModel):
    """Per-scale record of a flow state; serialised one line per scale."""

    scale: int
    final: bool = False
    block_volume: int
    lambda_j: float
    site_variance: float
    covariance_factor: float
    norm: float | None = None
    in_contraction_domain: bool | None = None
    curvature_grid_sup: float | None = None
    g: float | None = None
    nu: float | None = None
    fit_residual: float | None = None
    fluctuation_scale: float | None = None
    large_field_scale: float | None = None
    large_field_convexity: float | None = None
    s_neg: float = 0.0
    argmin_r: float = 0.0
    epsilon: float = 0.0
    valid: bool = True
    theta: float | None = None


@dataclass(frozen=True, eq=False)
class RGFlowState:
    scale: int
    potential: PotentialRep
    decomp: CovarianceDecomposition
    diagnostics: FlowDiagnostics

    def to_record(self) -> dict[str, Any]:
        record = self.diagnostics.model_dump()
        record["potential"] = json.loads(potential_to_json(self.potential))
        return record


class EpsilonResult(NamedTuple):
    epsilon: float
    valid: bool


def compute_epsilon(state: RGFlowState) -> EpsilonResult:
    """epsilon_j = lambda_j * s_neg,j; valid when below 1."""
    epsilon = float(state.decomp.lambdas[state.scale]) * state.diagnostics.s_neg
    return EpsilonResult(epsilon, epsilon < 1.0)


def _negative_curvature(pot: PotentialRep, block_volume: int) -> tuple[float, float, float | None]:
    if isinstance(pot, RadialPotential):
        bound = radial_hessian_bounds(pot)
        return bound.s_neg, bound.argmin_r, None
    curvature = fourier_second_derivative_sup(pot)
    return curvature.bound / block_volume, 0.0, curvature.grid_sup


def diagnose(
    pot: PotentialRep,
    decomp: CovarianceDecomposition,
    scale: int,
    block_volume: int,
    final: bool = False,
) -> RGFlowState:
    """Build the flow state at ``scale`` with all curvature and coupling diagnostics."""
    lattice = decomp.lattice
    lam = float(decomp.lambdas[scale])
    s_neg, argmin_r, grid_sup = _negative_curvature(pot, block_volume)
    diagnostics = FlowDiagnostics(
        scale=scale,
        final=final,
        block_volume=block_volume,
        lambda_j=lam,
        site_variance=decomp.site_variance(scale),
        covariance_factor=lam * float(lattice.L) ** (-2 * scale),
        s_neg=s_neg,
        argmin_r=argmin_r,
        curvature_grid_sup=grid_sup,
        theta=None if decomp.theta is None else float(decomp.theta[scale]),
    )
    if isinstance(pot, FourierPotential):
        diagnostics.norm = fourier_norm(pot)
        diagnostics.in_contraction_domain = in_contraction_domain(pot)
    else:
        ell = min(float(lattice.L) ** (-(lattice.d - 2) * scale / 2), 0.5 * pot.r_max)
        fit = fit_couplings(pot, ell)
        diagnostics.g, diagnostics.nu, diagnostics.fit_residual = fit.g, fit.nu, fit.residual
        diagnostics.fluctuation_scale = ell
        if fit.g > 0:
            h = float(lattice.L) ** (-lattice.d * scale / 4) * fit.g**-0.25
            diagnostics.large_field_scale = h
            diagnostics.large_field_convexity = float(lattice.L) ** (2 * scale) * min_hessian_eigenvalue(pot, h)
    state = RGFlowState(scale, pot, decomp, diagnostics)
    if not final:
        epsilon, valid = compute_epsilon(state)
        diagnostics.epsilon, diagnostics.valid = epsilon, valid
        if not valid:
            logger.warning("epsilon_{} = {:.4g} >= 1: certificate invalid at this scale", scale, epsilon)
    return state


def rg_step(
    pot: PotentialRep,
    decomp: CovarianceDecomposition,
    scale: int,
    last_step: bool = False,
    tol: float = QUADRATURE_TOL,
) -> PotentialRep:
    """Dispatch one step to the backend matching the potential's representation."""
    lattice = decomp.lattice
    variance = decomp.site_variance(scale)
    if isinstance(pot, RadialPotential):
        return rg_step_radial(pot, variance, lattice.L, lattice.d, out_grid=None, last_step=last_step, tol=tol)
    beta = decomp.beta if decomp.beta is not None else 1.0
    return rg_step_fourier(pot, beta, lattice.L, last_step=last_step, scale=scale, d=lattice.d, variance=variance)


def run_flow(
    initial: PotentialRep,
    decomp: CovarianceDecomposition,
    start_scale: int = 0,
    final_step: bool = True,
    tol: float = QUADRATURE_TOL,
) -> list[RGFlowState]:
    """Iterate the renormalisation map from ``start_scale`` to N.

    Returns one state per scale plus, when ``final_step`` is set, the state holding
    W_{N,N} after the no-reblocking last step (``diagnostics.final``).
    """
    lattice = decomp.lattice
    lattice.check_scale(start_scale)
    logger.info(
        "running {} flow L={} N={} d={} from scale {}", decomp.mode, lattice.L, lattice.N, lattice.d, start_scale
    )
    states: list[RGFlowState] = []
    pot = initial
    for scale in range(start_scale, lattice.N + 1):
        states.append(diagnose(pot, decomp, scale, lattice.block_volume(scale)))
        if scale < lattice.N:
            pot = rg_step(pot, decomp, scale, tol=tol)
    if final_step:
        last = rg_step(pot, decomp, lattice.N, last_step=True, tol=tol)
        states.append(diagnose(last, decomp, lattice.N, lattice.volume, final=True))
    return states


def scale_states(states: Sequence[RGFlowState]) -> list[RGFlowState]:
    """The per-scale states without the final W_{N,N} entry."""
    return [state for state in states if not state.diagnostics.final]


def final_curvature(states: Sequence[RGFlowState]) -> float:
    """W''_{N,N}(0) along the first spin component."""
    final = states[-1]
    if not final.diagnostics.final:
        msg = "flow was run without its final step"
        raise ParameterError(msg)
    pot = final.potential
    if isinstance(pot, RadialPotential):
        return float(pot.radial(np.array([0.0]), 2)[0])
    return float(pot.scalar(np.array([0.0]), 2)[0])


def contraction_ratios(states: Sequence[RGFlowState]) -> np.ndarray:
    norms = np.array([state.diagnostics.norm for state in scale_states(states)], dtype=float)
    return norms[1:] / norms[:-1]


def fit_contraction(states: Sequence[RGFlowState]) -> float:
    """Geometric decay rate kappa fitted to log norms against scale."""
    kept = [state for state in scale_states(states) if state.diagnostics.norm and state.diagnostics.norm > 0]
    scales = [state.scale for state in kept]
    logs = [math.log(state.diagnostics.norm) for state in kept]
    return math.exp(stats.linregress(scales, logs).slope)


def fit_convexity_recursion(values: Sequence[float]) -> float:
    """Smallest c >= 0 with values[j+1] >= values[j] - c values[j]^2 for every j."""
    worst = 0.0
    for current, following in zip(values[:-1], values[1:], strict=True):
        if current > 0:
            worst = max(worst, (current - following) / current**2)
    return worst


def write_flow_jsonl(states: Sequence[RGFlowState], path: Path, config_hash: str | None = None) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for state in states:
            record = state.to_record()
            if config_hash is not None:
                record["config_hash"] = config_hash
            handle.write(json.dumps(record) + "\n")
    return path


def read_flow_jsonl(path: Path) -> list[dict[str, Any]]:
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]

