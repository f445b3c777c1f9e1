# this_file: src/hiergap/oracle.py
"""Brute-force reference computations.

Dense matrices built from block membership, exact one-dimensional generator spectra,
the single-site Discrete Gaussian variational problem, and tensor-grid quadrature for
Gibbs measures with at most two degrees of freedom. Nothing here goes through the
band-diagonal or quadrature code paths it is used to check.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from loguru import logger
from scipy import linalg
from scipy.integrate import trapezoid
from scipy.special import logsumexp

from hiergap.errors import CapacityError, ParameterError, QuadratureError, ResolutionError, TruncationError
from hiergap.lattice import DENSE_LIMIT, CovarianceDecomposition, HierLattice
from hiergap.potentials import dg_effective_potential, dg_site_gap, dg_truncation

SYMMETRY_TOL = 1e-12
EDGE_ENERGY = 30.0
EXTRAPOLATION_TOL = 0.01
CHAIN_CUTOFF = 1e-12

Energy = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Explicit symmetric matrix."""

    matrix: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            msg = f"dense operator {self.name!r} must be square, got shape {matrix.shape}"
            raise ParameterError(msg)
        asymmetry = float(np.max(np.abs(matrix - matrix.T))) if matrix.size else 0.0
        if asymmetry > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(matrix)))):
            msg = f"dense operator {self.name!r} is not symmetric (max deviation {asymmetry:.2e})"
            raise ParameterError(msg)
        object.__setattr__(self, "matrix", matrix)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return linalg.eigvalsh(self.matrix)


class DenseHierOperators(NamedTuple):
    laplacian: DenseOperator
    averages: list[DenseOperator]
    target: DenseOperator | None
    covariance: DenseOperator | None


def _check_capacity(size: int) -> None:
    if size > DENSE_LIMIT:
        msg = f"dense assembly needs at most {DENSE_LIMIT} rows, got {size}"
        raise CapacityError(msg)


def block_labels(lattice: HierLattice, scale: int) -> np.ndarray:
    """Scale-j block index of every site, from the base-L^d digits of the site index."""
    digits = np.arange(lattice.volume)
    for _ in range(scale):
        digits = digits // (lattice.L**lattice.d)
    return digits


def dense_block_averages(lattice: HierLattice) -> list[DenseOperator]:
    averages = []
    for scale in range(lattice.N + 1):
        labels = block_labels(lattice, scale)
        same = np.equal.outer(labels, labels).astype(float)
        averages.append(DenseOperator(same / same.sum(axis=1, keepdims=True), name=f"Q_{scale}"))
    return averages


def dense_hier_operators(lattice: HierLattice, decomp: CovarianceDecomposition | None = None) -> DenseHierOperators:
    """-Delta_H, every Q_j and, with a decomposition, M and M^-1 as explicit matrices."""
    _check_capacity(lattice.volume)
    averages = dense_block_averages(lattice)
    laplacian = np.zeros((lattice.volume, lattice.volume))
    for scale in range(1, lattice.N + 1):
        laplacian += float(lattice.L) ** (-2 * (scale - 1)) * (averages[scale - 1].matrix - averages[scale].matrix)
    target = covariance = None
    if decomp is not None:
        if decomp.mode == "massive":
            matrix = laplacian + float(decomp.m2) * np.eye(lattice.volume)
        else:
            mass = float(decomp.beta) * float(lattice.L) ** (-2 * lattice.N)
            matrix = float(decomp.beta) * laplacian + mass * averages[-1].matrix
        inverse = linalg.inv(matrix)
        target = DenseOperator(matrix, name="M")
        covariance = DenseOperator(0.5 * (inverse + inverse.T), name="M^-1")
    return DenseHierOperators(DenseOperator(laplacian, name="-Delta_H"), averages, target, covariance)


def dense_block_sum(averages: Sequence[DenseOperator], weights: Sequence[float]) -> DenseOperator:
    """sum_k weights[k] Q_k assembled densely."""
    if len(averages) != len(weights):
        msg = f"{len(weights)} weights for {len(averages)} block averages"
        raise ParameterError(msg)
    matrix = sum(float(w) * q.matrix for w, q in zip(weights, averages, strict=True))
    return DenseOperator(matrix, name="sum w_k Q_k")


def _symmetric_generator(energies: np.ndarray, dx: float) -> tuple[np.ndarray, np.ndarray]:
    """Tridiagonal ground-state transform of -F'' + H'F' with reflecting ends."""
    up = np.exp(-0.5 * (energies[1:] - energies[:-1]))
    down = np.exp(-0.5 * (energies[:-1] - energies[1:]))
    diagonal = np.zeros(energies.size)
    diagonal[:-1] += up
    diagonal[1:] += down
    return diagonal / dx**2, np.full(energies.size - 1, -1.0 / dx**2)


def resolve_bounds(energy: Energy, start: float = 5.0, max_expansions: int = 40) -> tuple[float, float]:
    """Symmetric interval whose ends sit EDGE_ENERGY above the minimum of ``energy``."""
    half = start
    for _ in range(max_expansions):
        grid = np.linspace(-half, half, 2001)
        values = energy(grid)
        lowest = float(values.min())
        if values[0] - lowest > EDGE_ENERGY and values[-1] - lowest > EDGE_ENERGY:
            return -half, half
        half *= 1.5
    msg = "energy does not confine the measure within the search range"
    raise ResolutionError(msg)


def _gap_on_grid(energy: Energy, bounds: tuple[float, float], points: int) -> float:
    grid = np.linspace(bounds[0], bounds[1], points)
    diagonal, off = _symmetric_generator(energy(grid), float(grid[1] - grid[0]))
    lowest = linalg.eigh_tridiagonal(diagonal, off, eigvals_only=True, select="i", select_range=(0, 1))
    return float(lowest[1])


def generator_gap_1d(
    energy: Energy,
    mobility: float = 1.0,
    bounds: tuple[float, float] | None = None,
    points: int = 2001,
) -> float:
    """Spectral gap of ``mobility * (-F'' + H'F')`` in L^2(e^{-H}).

    Second-order finite differences on two grids, combined by Richardson extrapolation.
    """
    bounds = resolve_bounds(energy) if bounds is None else bounds
    coarse = _gap_on_grid(energy, bounds, points)
    fine = _gap_on_grid(energy, bounds, 2 * points - 1)
    extrapolated = (4.0 * fine - coarse) / 3.0
    if abs(extrapolated - fine) > EXTRAPOLATION_TOL * abs(extrapolated):
        msg = f"generator gap not converged: {coarse:.6g} -> {fine:.6g}"
        raise ResolutionError(msg)
    logger.debug("generator gap {:.8g} on {} points over {}", extrapolated, points, bounds)
    return mobility * extrapolated


def bakry_emery_bound(lambda_min: float, convexity: float = 0.0) -> float:
    """gamma >= lambda + c when Hess H >= M + c with M >= lambda."""
    return lambda_min + convexity


class DGGap(NamedTuple):
    gap: float
    raw_gap: float
    path_constant: float
    path_bound: float


def _dg_weights(beta: float, psi: float, K: int) -> np.ndarray:
    states = np.arange(-K, K + 1)
    reduced = math.remainder(psi, 2.0 * math.pi)
    log_weights = -0.5 * beta * (2.0 * np.pi * states - reduced) ** 2
    weights = np.exp(log_weights - logsumexp(log_weights))
    if weights[0] + weights[-1] > 1e-12:
        msg = f"truncation K={K} leaves mass {weights[0] + weights[-1]:.2e} at the edges for psi={psi}"
        raise TruncationError(msg)
    return weights


def dg_exact_gap(beta: float, psi: float = 0.0, K: int | None = None) -> DGGap:
    """Single-site Discrete Gaussian gap for the +-2 pi Dirichlet form, from the generator.

    The chain on n in Z with conductances mu_i + mu_{i+1} is a birth-death process; its raw
    gap is the second eigenvalue of the symmetrised tridiagonal generator. States lighter than
    ``CHAIN_CUTOFF`` times the heaviest are dropped to keep the symmetrised entries bounded.
    ``gap`` rescales to the form normalised by 1 / (2 (2 pi)^2); the path constant bounds
    1 / raw_gap and ``path_bound`` bounds 1 / gap.
    """
    if not beta > 0:
        msg = f"Discrete Gaussian needs beta > 0, got {beta}"
        raise ParameterError(msg)
    truncation = dg_truncation(beta) if K is None else K
    _check_capacity(2 * truncation + 1)
    weights = _dg_weights(beta, psi, truncation)
    mu = weights[weights > CHAIN_CUTOFF * weights.max()]
    mu = mu / mu.sum()
    if mu.size < 2:
        msg = f"fewer than two states carry weight at beta={beta}, psi={psi}"
        raise ResolutionError(msg)
    edge = mu[:-1] + mu[1:]
    degree = np.zeros(mu.size)
    degree[:-1] += edge
    degree[1:] += edge
    diagonal = degree / mu
    off_diagonal = -edge / np.sqrt(mu[:-1] * mu[1:])
    spectrum = linalg.eigh_tridiagonal(diagonal, off_diagonal, eigvals_only=True, select="i", select_range=(1, 1))
    raw_gap = float(spectrum[0])
    normalisation = 2.0 * (2.0 * math.pi) ** 2
    path_bound = dg_site_gap(dg_effective_potential(beta, truncation), psi).path_bound
    return DGGap(
        gap=raw_gap / normalisation,
        raw_gap=raw_gap,
        path_constant=path_bound / normalisation,
        path_bound=path_bound,
    )


@dataclass(frozen=True)
class GibbsModel:
    """Density proportional to exp(-energy) on R^dim, dim <= 2."""

    energy: Energy
    dim: int = 1
    half_width: float | None = None
    hessian: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.dim not in (1, 2):
            msg = f"tensor quadrature handles 1 or 2 degrees of freedom, got {self.dim}"
            raise ParameterError(msg)


class GibbsMoments(NamedTuple):
    log_normalizer: float
    mean: np.ndarray
    covariance: np.ndarray
    inverse_hessian: np.ndarray | None

    def variance_of(self, a: np.ndarray) -> float:
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return float(a @ self.covariance @ a)

    def bl_rhs(self, a: np.ndarray) -> float:
        """E (a, Hess^-1 a)."""
        if self.inverse_hessian is None:
            msg = "model has no Hessian"
            raise ParameterError(msg)
        a = np.atleast_1d(np.asarray(a, dtype=float))
        return float(a @ self.inverse_hessian @ a)


def _tensor_grid(dim: int, half_width: float, points: int) -> tuple[np.ndarray, np.ndarray]:
    axis = np.linspace(-half_width, half_width, points)
    rule = np.full(points, axis[1] - axis[0])
    rule[[0, -1]] *= 0.5
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1)
    weights = rule if dim == 1 else np.multiply.outer(rule, rule)
    return mesh, weights


def _confining_width(model: GibbsModel) -> float:
    if model.half_width is not None:
        return model.half_width
    widths = []
    for axis in range(model.dim):

        def along_axis(x: np.ndarray, axis: int = axis) -> np.ndarray:
            phi = np.zeros((*np.shape(x), model.dim))
            phi[..., axis] = x
            return model.energy(phi)

        widths.append(-resolve_bounds(along_axis)[0])
    return max(widths)


def _moments_on_grid(model: GibbsModel, half_width: float, points: int) -> GibbsMoments:
    mesh, rule = _tensor_grid(model.dim, half_width, points)
    log_density = -model.energy(mesh)
    log_z = float(logsumexp(log_density, b=rule))
    probabilities = rule * np.exp(log_density - log_z)
    flat = mesh.reshape(-1, model.dim)
    p = probabilities.reshape(-1)
    mean = p @ flat
    centred = flat - mean
    covariance = (centred * p[:, None]).T @ centred
    inverse_hessian = None
    if model.hessian is not None:
        hessians = np.asarray(model.hessian(mesh)).reshape(-1, model.dim, model.dim)
        inverse_hessian = np.einsum("k,kij->ij", p, np.linalg.inv(hessians))
    return GibbsMoments(log_z, mean, covariance, inverse_hessian)


def gibbs_exact_moments(
    model: GibbsModel,
    points: int | None = None,
    tol: float = 1e-10,
    max_points: int | None = None,
) -> GibbsMoments:
    """Normaliser, mean, covariance and E Hess^-1 by tensor trapezoid quadrature.

    The grid is refined (points -> 2 points - 1) until log Z and the covariance agree
    to ``tol`` between refinements.
    """
    half_width = _confining_width(model)
    current_points = points or (401 if model.dim == 1 else 161)
    cap = max_points or (25601 if model.dim == 1 else 1281)
    previous = _moments_on_grid(model, half_width, current_points)
    while current_points < cap:
        current_points = 2 * current_points - 1
        current = _moments_on_grid(model, half_width, current_points)
        scale = max(1.0, abs(current.log_normalizer))
        drift = abs(current.log_normalizer - previous.log_normalizer) / scale
        spread = float(np.max(np.abs(current.covariance - previous.covariance)))
        if drift <= tol and spread <= tol * max(1.0, float(np.max(np.abs(current.covariance)))):
            return current
        previous = current
    msg = f"Gibbs quadrature did not converge to {tol:g} with {cap} points per axis"
    raise QuadratureError(msg)


class ExponentialCheck(NamedTuple):
    log_moment: float
    bound: float


def bl_exponential_check(model: GibbsModel, a: np.ndarray) -> ExponentialCheck:
    """log E e^{(a, phi)} - (a, E phi) against (1/2) sup_phi (a, Hess^-1(phi) a)."""
    if model.hessian is None:
        msg = "exponential Brascamp-Lieb check needs a Hessian"
        raise ParameterError(msg)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    base = gibbs_exact_moments(model)
    tilted = GibbsModel(lambda phi: model.energy(phi) - phi @ a, model.dim, model.half_width)
    log_moment = gibbs_exact_moments(tilted).log_normalizer - base.log_normalizer - float(a @ base.mean)
    mesh, _ = _tensor_grid(model.dim, _confining_width(model), 201 if model.dim == 1 else 81)
    inverse = np.linalg.inv(np.asarray(model.hessian(mesh)).reshape(-1, model.dim, model.dim))
    bound = 0.5 * float(np.max(np.einsum("i,kij,j->k", a, inverse, a)))
    return ExponentialCheck(log_moment, bound)


def convolution_oracle(
    energy: Energy,
    variance: float,
    phi: np.ndarray,
    reblock: int = 1,
    dim: int = 1,
    points: int | None = None,
) -> np.ndarray:
    """-reblock * log E exp(-energy(phi + zeta)), zeta ~ N(0, variance I_dim), by trapezoid rule.

    ``phi`` has shape (k,) for dim = 1 and (k, 2) for dim = 2.
    """
    std = math.sqrt(variance)
    half = 14.0 * std
    mesh, rule = _tensor_grid(dim, half, points or (6001 if dim == 1 else 701))
    offsets = mesh.reshape(-1, dim)
    log_gauss = -0.5 * np.sum(offsets**2, axis=1) / variance - 0.5 * dim * math.log(2.0 * math.pi * variance)
    log_rule = np.log(rule.reshape(-1))
    phi = np.asarray(phi, dtype=float).reshape(-1, dim)
    out = np.empty(phi.shape[0])
    for index, point in enumerate(phi):
        shifted = point[None, :] + offsets
        argument = shifted[:, 0] if dim == 1 else shifted
        out[index] = logsumexp(log_gauss + log_rule - energy(argument))
    return -reblock * out


def helffer_sjostrand_covariance(
    energy: Energy,
    energy_curvature: Energy,
    grad_f: Energy,
    grad_g: Energy,
    bounds: tuple[float, float] | None = None,
    points: int = 4001,
) -> float:
    """cov(F, G) = E[F' u] with (H'' + L) u = G' on one site, L = -d^2 + H' d.

    Solved in the ground-state frame, where L becomes the tridiagonal matrix used by
    :func:`generator_gap_1d`.
    """
    bounds = resolve_bounds(energy) if bounds is None else bounds
    grid = np.linspace(bounds[0], bounds[1], points)
    dx = float(grid[1] - grid[0])
    energies = energy(grid)
    diagonal, off = _symmetric_generator(energies, dx)
    diagonal = diagonal + energy_curvature(grid)
    log_mass = -energies + math.log(dx)
    root_mass = np.exp(0.5 * (log_mass - logsumexp(log_mass)))
    banded = np.zeros((3, points))
    banded[0, 1:] = off
    banded[1] = diagonal
    banded[2, :-1] = off
    solution = linalg.solve_banded((1, 1), banded, root_mass * grad_g(grid))
    return float(np.sum(root_mass * grad_f(grid) * solution))


def brascamp_lieb_bound(
    energy: Energy,
    energy_curvature: Energy,
    grad_f: Energy,
    bounds: tuple[float, float] | None = None,
    points: int = 4001,
) -> float:
    """E[F'^2 / H''] on one site; requires H'' > 0 on the grid."""
    bounds = resolve_bounds(energy) if bounds is None else bounds
    grid = np.linspace(bounds[0], bounds[1], points)
    curvature = energy_curvature(grid)
    if np.any(curvature <= 0):
        msg = "Brascamp-Lieb bound needs a strictly convex energy"
        raise ParameterError(msg)
    density = np.exp(-(energy(grid) - energy(grid).min()))
    return float(trapezoid(density * grad_f(grid) ** 2 / curvature, grid) / trapezoid(density, grid))
