# this_file: src/hiergap/dynamics.py
"""Glauber dynamics simulation and empirical gap and variance estimates.

Continuous spins follow the overdamped Langevin equation

    d phi = -grad H(phi) dt + sqrt(2) dB,   H = (phi, M phi) / 2 + sum_x V(phi_x),

integrated with fixed-step Euler-Maruyama. The Discrete Gaussian runs a continuous-time
Metropolis chain with +-2 pi moves.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, NamedTuple, Protocol

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field
from scipy import stats

from hiergap.errors import InstabilityError, ParameterError
from hiergap.lattice import HierarchicalOperator, HierLattice, block_means, sine_gordon_operator

DIVERGENCE_LIMIT = 1e6
FIT_WINDOW = (0.05, 0.5)
GAP_BATCHES = 16
INCONCLUSIVE_SE = 0.5
MIN_RUN_RELAXATIONS = 50
SEGMENT_RELAXATIONS = 10


class SitePotential(Protocol):
    def gradient(self, phi: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class Phi4SitePotential:
    """V(phi) = g |phi|^4 / 4 + nu |phi|^2 / 2."""

    g: float
    nu: float

    def value(self, phi: np.ndarray) -> np.ndarray:
        r2 = np.sum(phi**2, axis=-1)
        return 0.25 * self.g * r2**2 + 0.5 * self.nu * r2

    def gradient(self, phi: np.ndarray) -> np.ndarray:
        return (self.g * np.sum(phi**2, axis=-1, keepdims=True) + self.nu) * phi

    def curvature_scale(self) -> float:
        return abs(self.nu) + 3.0 * self.g * max(1.0, -self.nu / self.g)


@dataclass(frozen=True, eq=False)
class LangevinModel:
    lattice: HierLattice
    coupling: HierarchicalOperator
    potential: SitePotential | None = None
    curvature: float | None = None

    def drift(self, values: np.ndarray) -> np.ndarray:
        force = self.coupling.apply_values(values)
        if self.potential is not None:
            force = force + self.potential.gradient(values)
        return -force

    def curvature_estimate(self) -> float:
        if self.curvature is not None:
            return self.curvature
        extra = 0.0
        if self.potential is not None:
            scale = getattr(self.potential, "curvature_scale", None)
            extra = scale() if callable(scale) else 1.0
        return self.coupling.max_eigenvalue() + extra

    def default_step(self) -> float:
        return 0.01 / self.curvature_estimate()

    def relaxation_time(self) -> float:
        """1 / (constant-band mass): the relaxation time of F = sum_x phi_x without the potential."""
        return 1.0 / float(self.coupling.bands[-1])


class LangevinParams(BaseModel):
    """Integrator settings; ``h`` defaults to 0.01 / curvature estimate."""

    h: float | None = Field(default=None, gt=0)
    steps: int = Field(gt=0)
    burn_in: int = Field(default=0, ge=0)
    thin: int = Field(default=1, gt=0)
    observables: list[str] = Field(default_factory=lambda: ["F"])


class GlauberParams(BaseModel):
    """Continuous-time settings: run until ``time``, sample every ``interval`` after ``burn_in``."""

    time: float = Field(gt=0)
    burn_in: float = Field(default=0.0, ge=0)
    interval: float = Field(default=1.0, gt=0)


def observable_value(name: str, lattice: HierLattice, values: np.ndarray) -> float:
    """F = sum_x phi_x^1, or P{j} = (P_j phi)_0^1, the site-0 entry of one fluctuation band."""
    if name == "F":
        return float(values[:, 0].sum())
    if name.startswith("P"):
        scale = int(name[1:])
        lattice.check_scale(scale, lowest=1)
        fine = block_means(values, lattice, scale - 1)[0, 0]
        coarse = block_means(values, lattice, scale)[0, 0]
        return float(fine - coarse)
    msg = f"unknown observable {name!r}"
    raise ParameterError(msg)


def observable_gradient_norm(name: str, lattice: HierLattice) -> float:
    """|grad F|^2, constant for the linear observables above."""
    if name == "F":
        return float(lattice.volume)
    scale = int(name[1:])
    return 1.0 / lattice.block_volume(scale - 1) - 1.0 / lattice.block_volume(scale)


@dataclass(eq=False)
class Trajectory:
    """Recorded observable series of one run."""

    lattice: HierLattice
    seed: int
    times: np.ndarray
    series: dict[str, np.ndarray]
    final_state: np.ndarray
    params: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def sample_interval(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def __len__(self) -> int:
        return int(self.times.size)

    def to_csv(self, path: Path) -> Path:
        names = list(self.series)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["time", *names])
            for row, time in enumerate(self.times):
                writer.writerow([repr(float(time)), *(repr(float(self.series[name][row])) for name in names)])
        return path


def _generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def langevin_run(model: LangevinModel, params: LangevinParams, seed: int) -> Trajectory:
    """Euler-Maruyama trajectory; records (steps - burn_in) // thin samples."""
    lattice = model.lattice
    curvature = model.curvature_estimate()
    h = params.h if params.h is not None else model.default_step()
    if h * curvature >= 0.5:
        msg = f"step h={h:g} too large for curvature estimate {curvature:.4g}; need h * curvature < 0.5"
        raise ParameterError(msg)
    for name in params.observables:
        observable_value(name, lattice, np.zeros((lattice.volume, lattice.n)))
    rng = _generator(seed)
    noise = math.sqrt(2.0 * h)
    values = np.zeros((lattice.volume, lattice.n))
    recorded = (params.steps - params.burn_in) // params.thin
    series = {name: np.empty(max(recorded, 0)) for name in params.observables}
    times = np.empty(max(recorded, 0))
    logger.debug("langevin run |Lambda|={} h={:.3g} steps={} seed={}", lattice.volume, h, params.steps, seed)
    row = 0
    for step in range(1, params.steps + 1):
        values = values + h * model.drift(values) + noise * rng.standard_normal(values.shape)
        if not np.all(np.isfinite(values)) or np.max(np.abs(values)) > DIVERGENCE_LIMIT:
            msg = f"Langevin trajectory diverged at step {step}; retry with a smaller h than {h:g}"
            raise InstabilityError(msg)
        if step > params.burn_in and (step - params.burn_in) % params.thin == 0 and row < recorded:
            times[row] = step * h
            for name in params.observables:
                series[name][row] = observable_value(name, lattice, values)
            row += 1
    return Trajectory(
        lattice=lattice,
        seed=seed,
        times=times,
        series=series,
        final_state=values,
        params={**params.model_dump(), "h": h},
    )


def dg_coupling(lattice: HierLattice, beta: float, epsilon: float | None = None) -> HierarchicalOperator:
    """M = -beta Delta_H + epsilon Q_N, epsilon defaulting to beta L^-2N."""
    operator = sine_gordon_operator(lattice, beta)
    if epsilon is None:
        return operator
    bands = operator.bands.copy()
    bands[-1] = epsilon
    return HierarchicalOperator(lattice, bands)


def dg_glauber_run(
    lattice: HierLattice,
    beta: float,
    epsilon: float | None,
    params: GlauberParams,
    seed: int,
    coupling: HierarchicalOperator | None = None,
    external_field: float = 0.0,
) -> Trajectory:
    """Metropolis chain on (2 pi Z)^Lambda with H = (sigma, M sigma) / 2 - h sum_x sigma_x.

    Every site carries two clocks (up and down) of rate 1 / (2 (2 pi)^2); with equal rates
    the next firing clock is uniform, so events are drawn from the superposed Poisson clock.
    Records F = sum_x sigma_x.
    """
    if not beta > 0:
        msg = f"Discrete Gaussian needs beta > 0, got {beta}"
        raise ParameterError(msg)
    operator = coupling if coupling is not None else dg_coupling(lattice, beta, epsilon)
    rng = _generator(seed)
    step = 2.0 * math.pi
    rate = 2.0 * lattice.volume / (2.0 * step**2)
    diagonal = operator.diagonal()
    sigma = np.zeros((lattice.volume, 1))
    force = operator.apply_values(sigma)[:, 0]
    sample_times = params.burn_in + params.interval * np.arange(int((params.time - params.burn_in) / params.interval))
    recorded = np.empty(sample_times.size)
    up_jumps: Counter[int] = Counter()
    down_jumps: Counter[int] = Counter()
    proposals = accepted = 0
    time, row = 0.0, 0
    while row < sample_times.size:
        time += rng.exponential(1.0 / rate)
        while row < sample_times.size and sample_times[row] < time:
            recorded[row] = sigma[:, 0].sum()
            row += 1
        if row == sample_times.size:
            break
        site = int(rng.integers(lattice.volume))
        shift = step if rng.random() < 0.5 else -step
        change = shift * force[site] + 0.5 * shift**2 * diagonal - external_field * shift
        proposals += 1
        if change <= 0 or rng.random() < math.exp(-change):
            state = round(sigma[site, 0] / step)
            (up_jumps if shift > 0 else down_jumps)[state] += 1
            unit = np.zeros((lattice.volume, 1))
            unit[site, 0] = shift
            sigma[site, 0] += shift
            force += operator.apply_values(unit)[:, 0]
            accepted += 1
    acceptance = accepted / proposals if proposals else 0.0
    logger.debug("glauber run beta={} |Lambda|={} acceptance={:.4g}", beta, lattice.volume, acceptance)
    return Trajectory(
        lattice=lattice,
        seed=seed,
        times=sample_times,
        series={"F": recorded},
        final_state=sigma,
        params={**params.model_dump(), "beta": beta, "epsilon": epsilon},
        extras={"acceptance_rate": acceptance, "up_jumps": dict(up_jumps), "down_jumps": dict(down_jumps)},
    )


class GapEstimate(BaseModel):
    """Fitted relaxation rate of one observable."""

    gamma: float
    standard_error: float
    method: Literal["exp-autocorrelation", "variance-ratio", "exact-generator"] = "exp-autocorrelation"
    observable: str = "F"
    inconclusive: bool = False
    variance_ratio: float | None = None


class VarianceEstimate(NamedTuple):
    variance: float
    standard_error: float


def batch_means(values: np.ndarray, batches: int | None = None) -> tuple[float, float]:
    """Mean and its standard error from non-overlapping batch means.

    Default batch size is floor(sqrt(n)).
    """
    values = np.asarray(values, dtype=float)
    if batches is None:
        size = math.isqrt(values.size)
        count = values.size // size if size else 0
    else:
        count = batches
        size = values.size // batches
    if count < 2 or size < 1:
        msg = f"{values.size} samples are too few for batch means"
        raise ParameterError(msg)
    means = values[: count * size].reshape(count, size).mean(axis=1)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(count))


def autocorrelation(series: np.ndarray) -> np.ndarray:
    """Normalised autocorrelation by zero-padded FFT."""
    centred = np.asarray(series, dtype=float) - np.mean(series)
    size = centred.size
    spectrum = np.fft.rfft(centred, n=2 * size)
    raw = np.fft.irfft(np.abs(spectrum) ** 2)[:size]
    return raw / raw[0] if raw[0] > 0 else np.zeros(size)


def _fit_rate(series: np.ndarray, interval: float, window: tuple[float, float]) -> float | None:
    rho = autocorrelation(series)
    low, high = window
    start = int(np.argmax(rho <= high))
    if rho[start] > high:
        return None
    below = np.nonzero(rho[start:] < low)[0]
    stop = start + (int(below[0]) if below.size else rho.size - start)
    if stop - start < 3:
        return None
    lags = np.arange(start, stop)
    fit = stats.linregress(lags * interval, np.log(rho[start:stop]))
    return -float(fit.slope)


def estimate_gap(
    traj: Trajectory,
    observable: str = "F",
    window: tuple[float, float] = FIT_WINDOW,
    batches: int = GAP_BATCHES,
) -> GapEstimate:
    """Rate of the exponential tail of the autocorrelation, fitted where it lies in ``window``.

    The standard error comes from refitting on up to ``batches`` consecutive segments, each
    spanning at least ``SEGMENT_RELAXATIONS`` fitted relaxation times. Runs shorter than
    ``MIN_RUN_RELAXATIONS`` relaxation times are flagged inconclusive.
    """
    series = traj.series[observable]
    interval = traj.sample_interval
    gamma = _fit_rate(series, interval, window)
    if gamma is None or gamma <= 0:
        logger.warning("gap estimate for {} inconclusive: no usable autocorrelation window", observable)
        return GapEstimate(gamma=float("nan"), standard_error=float("inf"), observable=observable, inconclusive=True)
    ratio = float(np.var(series)) * gamma / observable_gradient_norm(observable, traj.lattice)
    relaxations = series.size * interval * gamma
    count = min(batches, int(relaxations // SEGMENT_RELAXATIONS))
    size = series.size // count if count else 0
    rates = [_fit_rate(series[b * size : (b + 1) * size], interval, window) for b in range(count)]
    usable = [rate for rate in rates if rate is not None and rate > 0]
    if len(usable) < 2:
        logger.warning(
            "gap estimate for {} inconclusive: {:.1f} relaxation times leave too few segments", observable, relaxations
        )
        return GapEstimate(
            gamma=gamma,
            standard_error=float("inf"),
            observable=observable,
            inconclusive=True,
            variance_ratio=ratio,
        )
    error = float(np.std(usable, ddof=1) / math.sqrt(len(usable)))
    inconclusive = False
    if relaxations < MIN_RUN_RELAXATIONS:
        logger.warning(
            "gap estimate for {} inconclusive: run spans {:.1f} relaxation times, need {}",
            observable,
            relaxations,
            MIN_RUN_RELAXATIONS,
        )
        inconclusive = True
    if error > INCONCLUSIVE_SE * gamma:
        logger.warning("gap estimate for {} inconclusive: relative SE {:.2f}", observable, error / gamma)
        inconclusive = True
    return GapEstimate(
        gamma=gamma, standard_error=error, observable=observable, inconclusive=inconclusive, variance_ratio=ratio
    )


def estimate_variance(traj: Trajectory, observable: str = "F") -> VarianceEstimate:
    """Stationary variance with a batch-means standard error on the squared deviations."""
    series = traj.series[observable]
    squares = (series - series.mean()) ** 2
    variance, error = batch_means(squares)
    return VarianceEstimate(variance, error)
