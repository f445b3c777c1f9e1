# this_file: src/hiergap/lattice.py
"""Hierarchical lattice geometry, block projections and covariance decompositions.

Sites are the integers ``0 .. L**(d*N) - 1`` in hierarchical order: the scale-``j`` block
containing site ``s`` is ``s // L**(d*j)``. Every projector below is therefore a reshape
followed by a mean, and no Euclidean geometry is ever needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from loguru import logger
from scipy import linalg, stats

from hiergap.errors import CapacityError, ParameterError, RangeError

DENSE_LIMIT = 4096

DecompositionMode = Literal["massive", "sine-gordon"]


@dataclass(frozen=True)
class HierLattice:
    """Hierarchical lattice with block side ``L``, depth ``N``, dimension ``d`` and ``n`` spin components."""

    L: int
    N: int
    d: int = 1
    n: int = 1

    def __post_init__(self) -> None:
        if self.L < 2:
            msg = f"block side L must be >= 2, got {self.L}"
            raise ParameterError(msg)
        if self.N < 1:
            msg = f"depth N must be >= 1, got {self.N}"
            raise ParameterError(msg)
        if self.d < 1 or self.n < 1:
            msg = f"dimension and spin components must be >= 1, got d={self.d}, n={self.n}"
            raise ParameterError(msg)

    @property
    def volume(self) -> int:
        return self.L ** (self.d * self.N)

    @property
    def sigma(self) -> float:
        """The constant 1 - L^-2 shared by both decompositions."""
        return 1.0 - self.L**-2

    def block_volume(self, scale: int) -> int:
        self.check_scale(scale)
        return self.L ** (self.d * scale)

    def block_count(self, scale: int) -> int:
        self.check_scale(scale)
        return self.L ** (self.d * (self.N - scale))

    def block_of(self, site: int, scale: int) -> int:
        return site // self.block_volume(scale)

    def check_scale(self, scale: int, lowest: int = 0) -> None:
        if not lowest <= scale <= self.N:
            msg = f"scale {scale} outside [{lowest}, {self.N}]"
            raise RangeError(msg)

    def band_multiplicity(self, scale: int) -> int:
        """Dimension of range(P_j) over all components; scale 0 stands for range(Q_N)."""
        if scale == 0:
            return self.n
        self.check_scale(scale, lowest=1)
        return self.n * (self.L ** (self.d * (self.N - scale + 1)) - self.L ** (self.d * (self.N - scale)))

    def zeros(self) -> FieldVector:
        return FieldVector(self, np.zeros((self.volume, self.n)))

    def constant(self, value: float) -> FieldVector:
        return FieldVector(self, np.full((self.volume, self.n), float(value)))

    def random_field(self, seed: int) -> FieldVector:
        rng = np.random.default_rng(seed)
        return FieldVector(self, rng.standard_normal((self.volume, self.n)))


@dataclass(frozen=True, eq=False)
class FieldVector:
    """A real field indexed by (site, component)."""

    lattice: HierLattice
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1 and self.lattice.n == 1:
            values = values.reshape(-1, 1)
        expected = (self.lattice.volume, self.lattice.n)
        if values.shape != expected:
            msg = f"field shape {values.shape} does not match lattice shape {expected}"
            raise ParameterError(msg)
        object.__setattr__(self, "values", values)

    def __add__(self, other: FieldVector) -> FieldVector:
        return FieldVector(self.lattice, self.values + other.values)

    def __sub__(self, other: FieldVector) -> FieldVector:
        return FieldVector(self.lattice, self.values - other.values)

    def __mul__(self, scalar: float) -> FieldVector:
        return FieldVector(self.lattice, self.values * scalar)

    __rmul__ = __mul__

    def inner(self, other: FieldVector) -> float:
        return float(np.vdot(self.values, other.values))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def block_means(values: np.ndarray, lattice: HierLattice, scale: int) -> np.ndarray:
    """Return Q_j applied to a raw ``(..., volume, n)`` array."""
    lattice.check_scale(scale)
    if scale == 0:
        return values
    size = lattice.block_volume(scale)
    lead = values.shape[:-2]
    blocks = values.reshape(*lead, lattice.block_count(scale), size, values.shape[-1])
    means = blocks.mean(axis=-2, keepdims=True)
    return np.broadcast_to(means, blocks.shape).reshape(values.shape)


def block_average(field: FieldVector, scale: int) -> FieldVector:
    """Q_j f: replace every site value by its scale-``j`` block mean, per component."""
    return FieldVector(field.lattice, block_means(field.values, field.lattice, scale).copy())


def fluctuation_projection(field: FieldVector, scale: int) -> FieldVector:
    """P_j f = Q_{j-1} f - Q_j f for 1 <= j <= N."""
    field.lattice.check_scale(scale, lowest=1)
    coarse = block_means(field.values, field.lattice, scale)
    fine = block_means(field.values, field.lattice, scale - 1)
    return FieldVector(field.lattice, fine - coarse)


@dataclass(frozen=True, eq=False)
class HierarchicalOperator:
    """Operator diagonal in the band decomposition {P_1, ..., P_N, Q_N}.

    ``bands[j - 1]`` is the eigenvalue on range(P_j) and ``bands[N]`` the eigenvalue on
    the constants. Every operator built from the block projectors (the hierarchical
    Laplacian, both covariance forms, the certificate's D_0) has this shape.
    """

    lattice: HierLattice
    bands: np.ndarray

    def __post_init__(self) -> None:
        bands = np.asarray(self.bands, dtype=float)
        if bands.shape != (self.lattice.N + 1,):
            msg = f"expected {self.lattice.N + 1} band values, got shape {bands.shape}"
            raise ParameterError(msg)
        object.__setattr__(self, "bands", bands)

    @property
    def constant_band(self) -> float:
        return float(self.bands[-1])

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        lattice = self.lattice
        means = [block_means(values, lattice, j) for j in range(lattice.N + 1)]
        out = self.bands[-1] * means[-1]
        for j in range(1, lattice.N + 1):
            coefficient = self.bands[j - 1]
            if coefficient != 0.0:
                out = out + coefficient * (means[j - 1] - means[j])
        return out

    def apply(self, field: FieldVector) -> FieldVector:
        return FieldVector(field.lattice, self.apply_values(field.values))

    def eigenvalues(self) -> list[tuple[float, int]]:
        """Distinct band eigenvalues with their multiplicities, bands P_1..P_N then Q_N."""
        pairs = [(float(self.bands[j - 1]), self.lattice.band_multiplicity(j)) for j in range(1, self.lattice.N + 1)]
        pairs.append((self.constant_band, self.lattice.band_multiplicity(0)))
        return pairs

    def spectrum(self) -> np.ndarray:
        return np.sort(np.concatenate([np.full(mult, value) for value, mult in self.eigenvalues()]))

    def min_eigenvalue(self) -> float:
        return float(self.bands.min())

    def max_eigenvalue(self) -> float:
        return float(self.bands.max())

    def diagonal(self) -> float:
        """The (site, site) entry, identical at every site and component."""
        lattice = self.lattice
        entry = self.bands[-1] / lattice.block_volume(lattice.N)
        for j in range(1, lattice.N + 1):
            entry += self.bands[j - 1] * (1.0 / lattice.block_volume(j - 1) - 1.0 / lattice.block_volume(j))
        return float(entry)

    def inverse(self) -> HierarchicalOperator:
        if np.any(self.bands == 0.0):
            msg = "operator has a zero band and cannot be inverted"
            raise ParameterError(msg)
        return HierarchicalOperator(self.lattice, 1.0 / self.bands)


def hier_laplacian_operator(lattice: HierLattice) -> HierarchicalOperator:
    bands = [float(lattice.L) ** (-2 * (j - 1)) for j in range(1, lattice.N + 1)]
    return HierarchicalOperator(lattice, np.array([*bands, 0.0]))


def massive_operator(lattice: HierLattice, m2: float) -> HierarchicalOperator:
    """M = -Delta_H + m^2."""
    return HierarchicalOperator(lattice, hier_laplacian_operator(lattice).bands + m2)


def sine_gordon_operator(lattice: HierLattice, beta: float) -> HierarchicalOperator:
    """M = -beta Delta_H + epsilon Q_N with epsilon = beta L^-2N."""
    bands = beta * hier_laplacian_operator(lattice).bands
    bands[-1] = beta * float(lattice.L) ** (-2 * lattice.N)
    return HierarchicalOperator(lattice, bands)


def apply_hier_laplacian(field: FieldVector) -> FieldVector:
    """(-Delta_H) f = sum_j L^{-2(j-1)} P_j f."""
    return hier_laplacian_operator(field.lattice).apply(field)


def mass_scale(L: int, m2: float) -> int:
    """j_m = floor(log_L m^-1), clamped at 0."""
    return max(0, math.floor(-0.5 * math.log(m2) / math.log(L)))


def massive_lambdas(L: int, N: int, m2: float) -> np.ndarray:
    lambdas = np.empty(N + 1)
    lambdas[0] = 1.0 / (1.0 + m2)
    for j in range(1, N):
        lambdas[j] = L ** (2 * j) * (1.0 - L**-2) / ((1.0 + m2 * L ** (2 * j)) * (1.0 + m2 * L ** (2 * (j - 1))))
    lambdas[N] = 1.0 / (m2 * (1.0 + m2 * L ** (2 * (N - 1))))
    return lambdas


def sine_gordon_lambdas(L: int, N: int, beta: float) -> np.ndarray:
    sigma = 1.0 - L**-2
    lambdas = np.array([sigma / beta * float(L) ** (2 * j) for j in range(N + 1)])
    lambdas[0] = 1.0 / beta
    return lambdas


@dataclass(frozen=True, eq=False)
class CovarianceDecomposition:
    """Scale coefficients with (M)^-1 = sum_j lambdas[j] Q_j."""

    lattice: HierLattice
    mode: DecompositionMode
    lambdas: np.ndarray
    m2: float | None = None
    beta: float | None = None
    theta: np.ndarray | None = field(default=None)

    @property
    def epsilon(self) -> float:
        """Mass of the constant mode: m^2, or beta L^-2N in sine-gordon mode."""
        if self.mode == "massive":
            return float(self.m2)
        return float(self.beta) * float(self.lattice.L) ** (-2 * self.lattice.N)

    @property
    def mass_scale(self) -> int | None:
        return None if self.m2 is None else mass_scale(self.lattice.L, self.m2)

    def site_variance(self, scale: int) -> float:
        """Per-site variance lambda_j L^{-dj} of the scale-j fluctuation field."""
        return float(self.lambdas[scale]) / self.lattice.block_volume(scale)

    def covariance_operator(self, start_scale: int = 0) -> HierarchicalOperator:
        """sum_{j >= start_scale} lambda_j Q_j in band form."""
        weights = np.where(np.arange(self.lattice.N + 1) >= start_scale, self.lambdas, 0.0)
        return weighted_block_sum(self.lattice, weights)

    def target_operator(self) -> HierarchicalOperator:
        if self.mode == "massive":
            return massive_operator(self.lattice, float(self.m2))
        return sine_gordon_operator(self.lattice, float(self.beta))

    def constant_band_variance(self) -> float:
        return float(self.lambdas.sum())


def weighted_block_sum(lattice: HierLattice, weights: np.ndarray) -> HierarchicalOperator:
    """Band form of sum_k weights[k] Q_k: Q_k acts as the identity on range(P_j) iff k < j."""
    return HierarchicalOperator(lattice, np.cumsum(np.asarray(weights, dtype=float)))


def build_covariance_decomposition(
    lattice: HierLattice,
    mode: DecompositionMode,
    m2: float | None = None,
    beta: float | None = None,
) -> CovarianceDecomposition:
    """Scale decomposition of (-Delta_H + m^2)^-1 or (-beta Delta_H + epsilon Q_N)^-1."""
    if mode == "massive":
        if m2 is None or not m2 > 0:
            msg = f"massive decomposition needs m2 > 0, got {m2}"
            raise ParameterError(msg)
        lambdas = massive_lambdas(lattice.L, lattice.N, m2)
        j_m = mass_scale(lattice.L, m2)
        theta = np.array([2.0 ** -max(0, j - j_m) for j in range(lattice.N + 1)])
        logger.debug("massive decomposition L={} N={} m2={} j_m={}", lattice.L, lattice.N, m2, j_m)
        return CovarianceDecomposition(lattice, mode, lambdas, m2=m2, theta=theta)
    if mode == "sine-gordon":
        if beta is None or not beta > 0:
            msg = f"sine-gordon decomposition needs beta > 0, got {beta}"
            raise ParameterError(msg)
        lambdas = sine_gordon_lambdas(lattice.L, lattice.N, beta)
        return CovarianceDecomposition(lattice, mode, lambdas, beta=beta)
    msg = f"unknown decomposition mode {mode!r}"
    raise ParameterError(msg)


def dense_block_average(lattice: HierLattice, scale: int) -> np.ndarray:
    """Scalar (one component) matrix of Q_j: block-diagonal averaging blocks."""
    size = lattice.block_volume(scale)
    return np.kron(np.eye(lattice.block_count(scale)), np.full((size, size), 1.0 / size))


def verify_decomposition(decomp: CovarianceDecomposition) -> float:
    """Max entrywise gap between sum_j lambda_j Q_j and the dense inverse of M."""
    lattice = decomp.lattice
    if lattice.volume > DENSE_LIMIT:
        msg = f"dense verification needs |Lambda| <= {DENSE_LIMIT}, got {lattice.volume}"
        raise CapacityError(msg)
    averages = [dense_block_average(lattice, j) for j in range(lattice.N + 1)]
    covariance = sum(lam * q for lam, q in zip(decomp.lambdas, averages, strict=True))
    laplacian = sum(
        float(lattice.L) ** (-2 * (j - 1)) * (averages[j - 1] - averages[j]) for j in range(1, lattice.N + 1)
    )
    if decomp.mode == "massive":
        operator = laplacian + float(decomp.m2) * np.eye(lattice.volume)
    else:
        operator = float(decomp.beta) * laplacian + decomp.epsilon * averages[-1]
    error = float(np.max(np.abs(covariance - linalg.inv(operator))))
    logger.debug("decomposition check mode={} |Lambda|={} error={:.3e}", decomp.mode, lattice.volume, error)
    return error


def sample_fluctuation(
    decomp: CovarianceDecomposition,
    scale: int,
    seed: int,
    size: int | None = None,
) -> FieldVector | np.ndarray:
    """Draw zeta in X_j: block-constant, per-block N(0, lambda_j L^{-dj} I_n).

    Each (scale, block) pair owns a Philox stream keyed by the seed, so a block's values do
    not depend on how many other blocks are drawn. With ``size`` the result is an array of
    shape ``(size, volume, n)`` instead of a single field.
    """
    lattice = decomp.lattice
    lattice.check_scale(scale)
    std = math.sqrt(decomp.site_variance(scale))
    count, width = lattice.block_count(scale), lattice.block_volume(scale)
    draws = 1 if size is None else size
    blocks = np.empty((draws, count, lattice.n))
    for block in range(count):
        stream = np.random.SeedSequence(seed, spawn_key=(scale, block))
        blocks[:, block, :] = np.random.Generator(np.random.Philox(stream)).standard_normal((draws, lattice.n))
    values = np.repeat(std * blocks, width, axis=1)
    if size is None:
        return FieldVector(lattice, values[0])
    return values


def green_diagonal(decomp: CovarianceDecomposition) -> float:
    """Diagonal entry of M^-1: sum_j lambda_j L^{-dj}."""
    return float(sum(decomp.site_variance(j) for j in range(decomp.lattice.N + 1)))


def green_growth_slope(L: int, d: int, depths: list[int]) -> float:
    """Per-scale growth of the diagonal Green entry at m^2 = L^{-2N}.

    At d = 2 the hierarchical Green function grows by about sigma per scale.
    """
    values = []
    for depth in depths:
        lattice = HierLattice(L=L, N=depth, d=d)
        decomp = build_covariance_decomposition(lattice, "massive", m2=float(L) ** (-2 * depth))
        values.append(green_diagonal(decomp))
    return float(stats.linregress(depths, values).slope)
