# this_file: src/hiergap/potentials.py
"""Potential representations: O(n)-invariant radial grids, even Fourier series, Discrete Gaussian.

All three families expose ``value``, ``gradient`` and ``hessian`` on field arrays whose last
axis is the spin component, so the RG engine and the dynamics can treat them alike.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Any, NamedTuple

import numpy as np
from loguru import logger
from scipy import linalg
from scipy.interpolate import make_interp_spline
from scipy.special import logsumexp

from hiergap.errors import ParameterError, ResolutionError, TruncationError

DEFAULT_GRID_POINTS = 512
DEFAULT_Q_MAX = 64
SPLINE_ORDER = 5
ALIAS_TOLERANCE = 1e-10


class HessianBound(NamedTuple):
    s_neg: float
    argmin_r: float


class CurvatureBound(NamedTuple):
    bound: float
    grid_sup: float


def _norms(phi: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(np.square(phi), axis=-1))


@dataclass(frozen=True, eq=False)
class RadialPotential:
    """Per-block O(n)-invariant function phi -> W(|phi|) sampled on a radial grid.

    Between knots W is a quintic spline built on the mirrored grid, so W is even and smooth
    through r = 0. Beyond ``grid[-1]`` it continues as a + b r^2 + c r^4, least-squares
    fitted on the last quarter of the grid.
    """

    n: int
    grid: np.ndarray
    values: np.ndarray
    block_volume: int = 1

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape:
            msg = f"grid and values must be matching 1-D arrays, got {grid.shape} and {values.shape}"
            raise ParameterError(msg)
        if grid.size < 8 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
            msg = "radial grid must start at 0, be strictly increasing and hold at least 8 knots"
            raise ParameterError(msg)
        if self.n < 1 or self.block_volume < 1:
            msg = f"invalid n={self.n} or block volume={self.block_volume}"
            raise ParameterError(msg)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def r_max(self) -> float:
        return float(self.grid[-1])

    @cached_property
    def _spline(self) -> Any:
        mirrored_grid = np.concatenate([-self.grid[:0:-1], self.grid])
        mirrored_values = np.concatenate([self.values[:0:-1], self.values])
        return make_interp_spline(mirrored_grid, mirrored_values, k=SPLINE_ORDER)

    @cached_property
    def tail(self) -> np.ndarray:
        """Coefficients (a, b, c) of the tail a + b r^2 + c r^4."""
        start = (3 * self.grid.size) // 4
        r = self.grid[start:]
        design = np.column_stack([np.ones_like(r), r**2, r**4])
        coefficients, *_ = np.linalg.lstsq(design, self.values[start:], rcond=None)
        return coefficients

    def radial(self, r: np.ndarray | float, derivative: int = 0) -> np.ndarray:
        """W or its radial derivatives (order <= 2) at radii r >= 0."""
        r = np.abs(np.asarray(r, dtype=float))
        shape = r.shape
        r = r.reshape(-1)
        inside = r <= self.r_max
        out = np.empty_like(r)
        if np.any(inside):
            out[inside] = self._spline(r[inside], nu=derivative)
        if not np.all(inside):
            a, b, c = self.tail
            outer = r[~inside]
            if derivative == 0:
                out[~inside] = a + b * outer**2 + c * outer**4
            elif derivative == 1:
                out[~inside] = 2 * b * outer + 4 * c * outer**3
            else:
                out[~inside] = 2 * b + 12 * c * outer**2
        return out.reshape(shape)

    def value(self, phi: np.ndarray) -> np.ndarray:
        return self.radial(_norms(np.asarray(phi, dtype=float)))

    def gradient(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        r = _norms(phi)
        slope = self.radial(r, 1)
        safe = np.where(r > 0, r, 1.0)
        return np.where((r > 0)[..., None], (slope / safe)[..., None] * phi, 0.0)

    def hessian(self, phi: np.ndarray) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        r = _norms(phi)
        second = self.radial(r, 2)
        tangential = np.where(r > 0, self.radial(r, 1) / np.where(r > 0, r, 1.0), second)
        unit = np.where((r > 0)[..., None], phi / np.where(r > 0, r, 1.0)[..., None], 0.0)
        outer = unit[..., :, None] * unit[..., None, :]
        eye = np.eye(phi.shape[-1])
        hess = tangential[..., None, None] * (eye - outer) + second[..., None, None] * outer
        at_origin = (r == 0)[..., None, None]
        return np.where(at_origin, second[..., None, None] * eye, hess)

    def per_site(self) -> np.ndarray:
        return self.values / self.block_volume

    def with_values(self, values: np.ndarray, block_volume: int | None = None) -> RadialPotential:
        volume = self.block_volume if block_volume is None else block_volume
        return RadialPotential(self.n, self.grid, values, volume)


def radial_grid(r_max: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, r_max, points + 1)


def phi4_initial(
    g: float,
    nu: float,
    n: int = 1,
    block_volume: int = 1,
    r_max: float | None = None,
    points: int = DEFAULT_GRID_POINTS,
) -> RadialPotential:
    """W(r) = |B| (g r^4 / 4 + nu r^2 / 2) on a uniform grid up to 8 g^-1/4 by default."""
    if not g > 0:
        msg = f"phi4 coupling g must be > 0, got {g}"
        raise ParameterError(msg)
    grid = radial_grid(8.0 * g**-0.25 if r_max is None else r_max, points)
    values = block_volume * (0.25 * g * grid**4 + 0.5 * nu * grid**2)
    return RadialPotential(n, grid, values, block_volume)


def zero_radial(n: int, r_max: float, points: int = DEFAULT_GRID_POINTS, block_volume: int = 1) -> RadialPotential:
    grid = radial_grid(r_max, points)
    return RadialPotential(n, grid, np.zeros_like(grid), block_volume)


def radial_eigenvalues(pot: RadialPotential, r: np.ndarray, n: int | None = None) -> np.ndarray:
    """Smallest Hessian eigenvalue of phi -> W(|phi|) over the sphere |phi| = r."""
    components = pot.n if n is None else n
    second = pot.radial(r, 2)
    if components == 1:
        return second
    tangential = np.where(r > 0, pot.radial(r, 1) / np.where(r > 0, r, 1.0), second)
    return np.minimum(second, tangential)


def radial_hessian_bounds(
    pot: RadialPotential,
    n: int | None = None,
    max_spacing: float | None = None,
) -> HessianBound:
    """Negative-curvature bound s_neg = max(0, -inf_r lambda_min) / |B| and its radius."""
    spacing = float(np.max(np.diff(pot.grid)))
    limit = pot.r_max / 64 if max_spacing is None else max_spacing
    if spacing > limit:
        msg = f"radial knot spacing {spacing:.3g} exceeds curvature tolerance {limit:.3g}"
        raise ResolutionError(msg)
    fine = np.linspace(0.0, pot.r_max, 4 * (pot.grid.size - 1) + 1)
    lowest = radial_eigenvalues(pot, fine, n)
    index = int(np.argmin(lowest))
    return HessianBound(max(0.0, -float(lowest[index])) / pot.block_volume, float(fine[index]))


def min_hessian_eigenvalue(pot: RadialPotential, r_from: float, n: int | None = None) -> float:
    """Per-site minimal Hessian eigenvalue over r_from <= |phi| <= r_max."""
    fine = np.linspace(min(r_from, pot.r_max), pot.r_max, 2 * (pot.grid.size - 1) + 1)
    return float(np.min(radial_eigenvalues(pot, fine, n))) / pot.block_volume


def circle_grid(points: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(points) / points


def coefficients_from_samples(samples: np.ndarray, q_max: int) -> np.ndarray:
    """Real even Fourier coefficients from equispaced samples on [0, 2 pi)."""
    spectrum = np.fft.rfft(samples).real / samples.size
    if spectrum.size <= q_max:
        spectrum = np.concatenate([spectrum, np.zeros(q_max + 1 - spectrum.size)])
    return spectrum[: q_max + 1]


def aliasing_energy(samples: np.ndarray) -> float:
    """Spectral weight in the top quartile of resolved modes, relative to max(1, total weight)."""
    spectrum = np.abs(np.fft.rfft(samples)) / samples.size
    total = float(np.sum(spectrum[1:]))
    if total == 0.0:
        return 0.0
    return float(np.sum(spectrum[(3 * spectrum.size) // 4 :])) / max(total, 1.0)


@dataclass(frozen=True, eq=False)
class FourierPotential:
    """Even 2 pi-periodic V(phi) = c_0 + 2 sum_{q >= 1} c_q cos(q phi)."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 1 or coeffs.size < 1:
            msg = "Fourier coefficients must be a non-empty 1-D array"
            raise ParameterError(msg)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_modes(cls, modes: dict[int, float], q_max: int = DEFAULT_Q_MAX) -> FourierPotential:
        coeffs = np.zeros(q_max + 1)
        for q, amplitude in modes.items():
            coeffs[abs(q)] = amplitude
        return cls(coeffs)

    @classmethod
    def from_samples(cls, samples: np.ndarray, q_max: int) -> FourierPotential:
        return cls(coefficients_from_samples(np.asarray(samples, dtype=float), q_max))

    @property
    def q_max(self) -> int:
        return self.coeffs.size - 1

    @property
    def constant(self) -> float:
        return float(self.coeffs[0])

    def _series(self, phi: np.ndarray, derivative: int) -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        q = np.arange(1, self.coeffs.size)
        angles = phi[..., None] * q
        if derivative == 0:
            return self.coeffs[0] + 2.0 * np.cos(angles) @ self.coeffs[1:]
        if derivative == 1:
            return -2.0 * np.sin(angles) @ (q * self.coeffs[1:])
        return -2.0 * np.cos(angles) @ (q**2 * self.coeffs[1:])

    def scalar(self, phi: np.ndarray, derivative: int = 0) -> np.ndarray:
        return self._series(phi, derivative)

    def value(self, phi: np.ndarray) -> np.ndarray:
        return self._series(np.asarray(phi)[..., 0], 0)

    def gradient(self, phi: np.ndarray) -> np.ndarray:
        return self._series(np.asarray(phi)[..., 0], 1)[..., None]

    def hessian(self, phi: np.ndarray) -> np.ndarray:
        return self._series(np.asarray(phi)[..., 0], 2)[..., None, None]

    def sample(self, points: int | None = None) -> np.ndarray:
        return self._series(circle_grid(4 * self.q_max if points is None else points), 0)

    def shifted(self, constant: float) -> FourierPotential:
        coeffs = self.coeffs.copy()
        coeffs[0] += constant
        return FourierPotential(coeffs)

    def symmetric(self) -> np.ndarray:
        """Coefficients over q = -Q..Q."""
        return np.concatenate([self.coeffs[:0:-1], self.coeffs])


def fourier_weights(q_max: int) -> np.ndarray:
    return (1.0 + np.arange(q_max + 1)) ** 2


def fourier_norm(pot: FourierPotential, subtract_constant: bool = True) -> float:
    """sum_q (1 + |q|)^2 |V(q)| over q in Z, optionally without q = 0."""
    weighted = fourier_weights(pot.q_max) * np.abs(pot.coeffs)
    total = 2.0 * float(np.sum(weighted[1:]))
    return total if subtract_constant else total + float(weighted[0])


def fourier_second_derivative_sup(pot: FourierPotential) -> CurvatureBound:
    """Coefficient bound sum_{q != 0} q^2 |V(q)| and the grid sup of -V''."""
    q = np.arange(pot.q_max + 1)
    bound = 2.0 * float(np.sum(q[1:] ** 2 * np.abs(pot.coeffs[1:])))
    fine = circle_grid(max(64, 16 * (pot.q_max + 1)))
    grid_sup = float(np.max(-pot.scalar(fine, 2)))
    return CurvatureBound(bound, grid_sup)


def fourier_product(first: FourierPotential, second: FourierPotential) -> FourierPotential:
    """Exact product by convolution of the symmetric coefficient arrays."""
    full = np.convolve(first.symmetric(), second.symmetric())
    centre = full.size // 2
    return FourierPotential(full[centre:])


def _pointwise(pot: FourierPotential, func: Any, q_out: int | None) -> FourierPotential:
    q_out = 4 * pot.q_max if q_out is None else q_out
    samples = func(pot.sample(8 * max(q_out, pot.q_max, 4)))
    return FourierPotential(coefficients_from_samples(samples, q_out))


def fourier_exp_minus_one(pot: FourierPotential, q_out: int | None = None) -> FourierPotential:
    """e^{-F} - 1, resolved on a grid and truncated at ``q_out`` modes."""
    return _pointwise(pot, lambda values: np.expm1(-values), q_out)


def fourier_log1p(pot: FourierPotential, q_out: int | None = None) -> FourierPotential:
    if np.any(pot.sample(8 * max(pot.q_max, 4)) <= -1.0):
        msg = "log(1 + F) needs 1 + F > 0 everywhere"
        raise ParameterError(msg)
    return _pointwise(pot, np.log1p, q_out)


class SiteMeasure(NamedTuple):
    states: np.ndarray
    weights: np.ndarray

    def mean(self) -> float:
        return float(self.weights @ self.states)

    def variance(self) -> float:
        return float(self.weights @ (self.states - self.mean()) ** 2)


def dg_truncation(beta: float) -> int:
    return math.ceil(6.0 / math.sqrt(beta)) + 2


@dataclass(frozen=True)
class DGEffectivePotential:
    """e^{-V(psi)} = sum_{n in 2 pi Z, |n| <= 2 pi K} e^{-beta (n - psi)^2 / 2}."""

    beta: float
    K: int

    def __post_init__(self) -> None:
        if not self.beta > 0:
            msg = f"Discrete Gaussian needs beta > 0, got {self.beta}"
            raise ParameterError(msg)
        # worst case: psi at the cell edge, first omitted state at distance 2 pi K - pi
        omitted = -0.5 * self.beta * (2.0 * math.pi * self.K - math.pi) ** 2 + 0.5 * self.beta * math.pi**2
        if self.K < 1 or omitted > math.log(1e-14):
            msg = f"theta truncation K={self.K} too small for beta={self.beta}; need about {dg_truncation(self.beta)}"
            raise TruncationError(msg)

    @property
    def states(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(-self.K, self.K + 1)

    def _log_terms(self, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        reduced = np.mod(np.asarray(psi, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
        return -0.5 * self.beta * (self.states - reduced[..., None]) ** 2, reduced

    def scalar(self, psi: np.ndarray, derivative: int = 0) -> np.ndarray:
        terms, reduced = self._log_terms(psi)
        if derivative == 0:
            return -logsumexp(terms, axis=-1)
        weights = np.exp(terms - logsumexp(terms, axis=-1, keepdims=True))
        mean = weights @ self.states
        if derivative == 1:
            return self.beta * (reduced - mean)
        variance = weights @ self.states**2 - mean**2
        return self.beta - self.beta**2 * variance

    def value(self, psi: np.ndarray) -> np.ndarray:
        return self.scalar(np.asarray(psi)[..., 0], 0)

    def gradient(self, psi: np.ndarray) -> np.ndarray:
        return self.scalar(np.asarray(psi)[..., 0], 1)[..., None]

    def hessian(self, psi: np.ndarray) -> np.ndarray:
        return self.scalar(np.asarray(psi)[..., 0], 2)[..., None, None]

    def weight_coefficients(self, q_max: int, points: int | None = None) -> np.ndarray:
        """Fourier coefficients of e^{-V}, normalised so that the q = 0 coefficient is 1."""
        samples = np.exp(-self.scalar(circle_grid(points or 8 * max(q_max, 8))))
        coeffs = coefficients_from_samples(samples, q_max)
        return coeffs / coeffs[0]

    def site_variance_sup(self, points: int = 256) -> float:
        """sup over psi of var_{mu_psi}(sigma)."""
        return max(dg_site_measure(self, psi).variance() for psi in circle_grid(points))


def dg_effective_potential(beta: float, K: int | None = None) -> DGEffectivePotential:
    return DGEffectivePotential(beta, dg_truncation(beta) if K is None else K)


def dg_fourier(beta: float, q_max: int = DEFAULT_Q_MAX) -> FourierPotential:
    """V_DG as a Fourier series, shifted so that e^{-V} has unit mean over the circle."""
    pot = dg_effective_potential(beta)
    samples = pot.scalar(circle_grid(4 * q_max))
    if aliasing_energy(samples) > ALIAS_TOLERANCE:
        msg = f"Q_max={q_max} does not resolve the Discrete Gaussian potential at beta={beta}"
        raise ResolutionError(msg)
    # mean of e^{-V} over the circle is sqrt(2 pi / beta) / (2 pi)
    shift = 0.5 * math.log(2.0 * math.pi / beta) - math.log(2.0 * math.pi)
    logger.debug("Discrete Gaussian Fourier potential beta={} q_max={}", beta, q_max)
    return FourierPotential.from_samples(samples, q_max).shifted(shift)


def dg_site_measure(pot: DGEffectivePotential, psi: float, mass_tolerance: float = 1e-12) -> SiteMeasure:
    """Normalised weights of mu_psi(n) proportional to e^{-beta (n - psi)^2 / 2} on the truncated states."""
    states = pot.states
    log_weights = -0.5 * pot.beta * (states - psi) ** 2
    weights = np.exp(log_weights - logsumexp(log_weights))
    if weights[0] + weights[-1] > mass_tolerance:
        msg = f"truncation K={pot.K} leaves mass {weights[0] + weights[-1]:.2e} at the edges for psi={psi}"
        raise TruncationError(msg)
    return SiteMeasure(states, weights)


class DGSiteGap(NamedTuple):
    inverse_gap: float
    path_bound: float


def dg_site_gap(pot: DGEffectivePotential, psi: float) -> DGSiteGap:
    """1/gap of mu_psi for the +-2 pi Dirichlet form normalised by 1 / (2 (2 pi)^2).

    With increments g_i = F(i+1) - F(i) the variance is g^T C g with
    C_ik = P(n <= min(i, k)) P(n > max(i, k)) and the raw Dirichlet form is
    sum_i (mu_i + mu_{i+1}) g_i^2, so 1/gap is the top generalised eigenvalue of that pair.
    ``path_bound`` is the Hardy-type path bound on the same quantity.
    """
    measure = dg_site_measure(pot, math.remainder(psi, 2.0 * math.pi))
    kept = measure.weights > 1e-300
    mu = measure.weights[kept] / measure.weights[kept].sum()
    if mu.size < 2:
        msg = f"fewer than two states carry weight at beta={pot.beta}, psi={psi}"
        raise ResolutionError(msg)
    below = np.cumsum(mu)[:-1]
    above = 1.0 - below
    edge = mu[:-1] + mu[1:]
    index = np.arange(mu.size - 1)
    low, high = np.minimum.outer(index, index), np.maximum.outer(index, index)
    inverse_raw = float(linalg.eigh(below[low] * above[high], np.diag(edge), eigvals_only=True)[-1])
    states = np.arange(mu.size, dtype=float)
    first_below = np.cumsum(states * mu)[:-1]
    first_above = float(states @ mu) - first_below
    path_constant = float(np.max((below * first_above - first_below * above) / edge))
    normalisation = 2.0 * (2.0 * math.pi) ** 2
    return DGSiteGap(inverse_gap=normalisation * inverse_raw, path_bound=normalisation * path_constant)


@lru_cache(maxsize=64)
def dg_uniform_constant(beta: float, points: int = 64) -> float:
    """sup over psi of 1/gap; mu_psi depends on psi mod 2 pi and is even in psi."""
    pot = dg_effective_potential(beta)
    return max(dg_site_gap(pot, float(psi)).inverse_gap for psi in np.linspace(0.0, math.pi, points))


def potential_to_json(pot: RadialPotential | FourierPotential | DGEffectivePotential) -> str:
    """Serialise a potential as ``{family, parameters, data}``; floats round-trip exactly."""
    if isinstance(pot, RadialPotential):
        document = {
            "family": "radial",
            "parameters": {"n": pot.n, "block_volume": pot.block_volume},
            "grid": pot.grid.tolist(),
            "values": pot.values.tolist(),
        }
    elif isinstance(pot, FourierPotential):
        document = {"family": "fourier", "parameters": {"q_max": pot.q_max}, "coefficients": pot.coeffs.tolist()}
    else:
        document = {"family": "discrete-gaussian", "parameters": {"beta": pot.beta, "K": pot.K}}
    return json.dumps(document)


def potential_from_json(text: str) -> RadialPotential | FourierPotential | DGEffectivePotential:
    document = json.loads(text)
    family, parameters = document["family"], document["parameters"]
    if family == "radial":
        return RadialPotential(
            parameters["n"], np.array(document["grid"]), np.array(document["values"]), parameters["block_volume"]
        )
    if family == "fourier":
        return FourierPotential(np.array(document["coefficients"]))
    if family == "discrete-gaussian":
        return DGEffectivePotential(parameters["beta"], parameters["K"])
    msg = f"unknown potential family {family!r}"
    raise ParameterError(msg)
