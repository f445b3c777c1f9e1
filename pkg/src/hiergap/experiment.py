# this_file: src/hiergap/experiment.py
"""Experiment orchestration: model assembly, critical-point tuning, sweeps and output files."""

from __future__ import annotations

import csv
import itertools
import json
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from loguru import logger
from pydantic import BaseModel
from scipy import stats

from hiergap.certificate import (
    BLCertificate,
    GapBounds,
    build_certificate,
    certificate_deltas,
    dg_gap_bounds,
    phi4_gap_bounds,
    sg_gap_bounds,
)
from hiergap.config import DynamicsConfig, ExperimentConfig, config_hash, set_path, validate_config
from hiergap.dynamics import (
    GapEstimate,
    GlauberParams,
    LangevinModel,
    LangevinParams,
    Phi4SitePotential,
    Trajectory,
    dg_coupling,
    dg_glauber_run,
    estimate_gap,
    estimate_variance,
    langevin_run,
)
from hiergap.errors import ConfigError, HierGapError, TuningError
from hiergap.lattice import (
    CovarianceDecomposition,
    HierLattice,
    build_covariance_decomposition,
    verify_decomposition,
)
from hiergap.oracle import (
    convolution_oracle,
    dense_block_sum,
    dense_hier_operators,
    dg_exact_gap,
    generator_gap_1d,
)
from hiergap.potentials import (
    FourierPotential,
    RadialPotential,
    dg_effective_potential,
    dg_fourier,
    dg_site_gap,
    phi4_initial,
    zero_radial,
)
from hiergap.rg import (
    QUADRATURE_TOL,
    RGFlowState,
    fit_couplings,
    gaussian_smoothing,
    rg_step,
    rg_step_radial,
    run_flow,
    scale_states,
    write_flow_jsonl,
)

RESULT_COLUMNS = [
    "config_hash",
    "seed",
    "family",
    "L",
    "N",
    "d",
    "n",
    "g",
    "nu",
    "t",
    "m2",
    "beta",
    "eps_max",
    "eps_sum",
    "valid",
    "gap_lower",
    "gap_upper",
    "gap_hat",
    "gap_se",
    "var_flow",
    "var_mc",
    "var_se",
    "status",
    "error",
]
FLOW_COLUMNS = ["point", "scale", "norm", "g", "nu", "epsilon", "delta"]
T_GRID = tuple(10.0 ** (-0.5 * k) for k in range(2, 13))
NU_TOL = 1e-8
MASS_TOL = 1e-6
MAX_ITERATIONS = 200


def sine_gordon_initial(amplitude: float, q_max: int = 64) -> FourierPotential:
    """V_0 = 2 c cos(phi) with c chosen so that the norm without the constant is ``amplitude``."""
    return FourierPotential.from_modes({1: amplitude / 8.0}, q_max)


def dg_initial(beta: float, lattice: HierLattice, q_max: int = 64) -> FourierPotential:
    """W_1 = L^d V_DG, the scale-1 block potential of the reduced Sine-Gordon model."""
    return FourierPotential(dg_fourier(beta, q_max).coeffs * lattice.L**lattice.d)


def phi4_flow(
    lattice: HierLattice,
    g: float,
    nu: float,
    m2: float,
    points: int = 512,
    tol: float = QUADRATURE_TOL,
    final_step: bool = True,
) -> tuple[list[RGFlowState], CovarianceDecomposition]:
    """Flow of the phi^4 model with the mass m^2 moved from the potential into the covariance."""
    decomp = build_covariance_decomposition(lattice, "massive", m2=m2)
    initial = phi4_initial(g, nu - m2, n=lattice.n, points=points)
    return run_flow(initial, decomp, final_step=final_step, tol=tol), decomp


def _fitted_nu(lattice: HierLattice, g: float, nu: float, points: int, tol: float) -> float:
    m2 = 1e-8 * float(lattice.L) ** (-2 * lattice.N)
    decomp = build_covariance_decomposition(lattice, "massive", m2=m2)
    pot: RadialPotential | FourierPotential = phi4_initial(g, nu - m2, n=lattice.n, points=points)
    for scale in range(lattice.N):
        pot = rg_step(pot, decomp, scale, tol=tol)
    assert isinstance(pot, RadialPotential)
    window = min(float(lattice.L) ** (-(lattice.d - 2) * lattice.N / 2), 0.5 * pot.r_max)
    return fit_couplings(pot, window).nu


def bisect_critical_nu(g: float, lattice: HierLattice, points: int = 512, tol: float = QUADRATURE_TOL) -> float:
    """nu_c by bisection on the sign of the fitted nu_N at a nearly massless covariance.

    The lower end of the initial bracket [-(n+2) g, (n+2) g] is doubled until the flow
    turns low-temperature.
    """
    width = (lattice.n + 2) * g
    low, high = -width, width
    if _fitted_nu(lattice, g, high, points, tol) <= 0:
        msg = f"nu = {high:.4g} does not flow to the high-temperature side"
        raise TuningError(msg)
    for _ in range(10):
        if _fitted_nu(lattice, g, low, points, tol) < 0:
            break
        low *= 2.0
    else:
        msg = f"no low-temperature bracket end down to nu = {low:.4g}"
        raise TuningError(msg)
    for _ in range(MAX_ITERATIONS):
        if high - low <= NU_TOL * max(abs(low), abs(high)):
            break
        middle = 0.5 * (low + high)
        if _fitted_nu(lattice, g, middle, points, tol) > 0:
            high = middle
        else:
            low = middle
    nu_c = 0.5 * (low + high)
    logger.info("critical nu for g={} n={} N={}: {:.10g}", g, lattice.n, lattice.N, nu_c)
    return nu_c


def matched_mass(
    g: float,
    nu: float,
    lattice: HierLattice,
    points: int = 512,
    tol: float = QUADRATURE_TOL,
) -> tuple[float, list[RGFlowState], CovarianceDecomposition]:
    """Fixed point of m^2 <- |Lambda| / var(F; m^2), where W''_{N,N}(0) vanishes."""
    m2 = float(lattice.L) ** (-2 * lattice.N)
    for _ in range(20):
        states, decomp = phi4_flow(lattice, g, nu, m2, points, tol)
        variance = phi4_gap_bounds(states, decomp).variance_per_site
        if not variance > 0:
            msg = f"flow variance {variance:.4g} is not positive at nu={nu}"
            raise TuningError(msg)
        updated = 1.0 / variance
        if abs(updated - m2) <= MASS_TOL * updated:
            return updated, states, decomp
        m2 = updated
    msg = f"matched mass did not converge at nu={nu}"
    raise TuningError(msg)


class TuningResult(BaseModel):
    nu_c: float
    nu: float
    t: float
    m2: float
    valid: bool
    gap_lower: float


def tune_critical_nu(
    g: float,
    lattice: HierLattice,
    t: float | None = None,
    points: int = 512,
    tol: float = QUADRATURE_TOL,
) -> TuningResult:
    """Locate nu_c, then match m^2 at nu = nu_c + t.

    Without ``t`` the offsets 10^-1 .. 10^-6 are scanned and the smallest matched m^2 with a
    valid certificate is returned.
    """
    if not g > 0:
        msg = f"tuning needs g > 0, got {g}"
        raise ConfigError(msg)
    nu_c = bisect_critical_nu(g, lattice, points, tol)
    offsets = [t] if t is not None else list(T_GRID)
    best: TuningResult | None = None
    for offset in offsets:
        m2, states, decomp = matched_mass(g, nu_c + offset, lattice, points, tol)
        bounds = phi4_gap_bounds(states, decomp)
        result = TuningResult(nu_c=nu_c, nu=nu_c + offset, t=offset, m2=m2, valid=bounds.valid, gap_lower=bounds.lower)
        if t is not None:
            return result
        if result.valid and (best is None or result.m2 < best.m2):
            best = result
    if best is None:
        msg = "no scanned t gives a valid certificate"
        raise TuningError(msg)
    return best


def lattice_of(config: ExperimentConfig) -> HierLattice:
    return HierLattice(L=config.lattice.L, N=config.lattice.N, d=config.lattice.d, n=config.lattice.n)


@dataclass(eq=False)
class FlowRun:
    """States, decomposition and bounds of one configuration."""

    states: list[RGFlowState]
    decomp: CovarianceDecomposition
    bounds: GapBounds
    nu: float | None = None
    m2: float | None = None
    t: float | None = None


def run_model_flow(config: ExperimentConfig) -> FlowRun:
    """Flow and certificate for the configured family."""
    lattice = lattice_of(config)
    model = config.model
    tol = config.flow.quadrature_tol
    if model.family == "phi4":
        assert model.g is not None
        if model.nu is None:
            if model.t is None:
                msg = "phi4 runs need nu or t"
                raise ConfigError(msg)
            tuning = tune_critical_nu(model.g, lattice, model.t, config.flow.grid_points, tol)
            nu, m2 = tuning.nu, tuning.m2
        else:
            nu = model.nu
            grid = config.flow.grid_points
            m2 = model.m2 if model.m2 is not None else matched_mass(model.g, nu, lattice, grid, tol)[0]
        states, decomp = phi4_flow(lattice, model.g, nu, m2, config.flow.grid_points, tol)
        return FlowRun(states, decomp, phi4_gap_bounds(states, decomp), nu=nu, m2=m2, t=model.t)
    if model.family == "free":
        if model.m2 is not None:
            decomp = build_covariance_decomposition(lattice, "massive", m2=model.m2)
            initial: RadialPotential | FourierPotential = zero_radial(lattice.n, 8.0, config.flow.grid_points)
        else:
            decomp = build_covariance_decomposition(lattice, "sine-gordon", beta=model.beta)
            initial = FourierPotential(np.zeros(model.q_max + 1))
        states = run_flow(initial, decomp, tol=tol)
        return FlowRun(states, decomp, sg_gap_bounds(states, decomp), m2=model.m2)
    decomp = build_covariance_decomposition(lattice, "sine-gordon", beta=model.beta)
    if model.family == "sine-gordon":
        states = run_flow(sine_gordon_initial(model.amplitude, model.q_max), decomp, tol=tol)
        return FlowRun(states, decomp, sg_gap_bounds(states, decomp))
    assert model.beta is not None
    states = run_flow(dg_initial(model.beta, lattice, model.q_max), decomp, start_scale=1, tol=tol)
    return FlowRun(states, decomp, dg_gap_bounds(states, decomp))


class SimulationResult(NamedTuple):
    trajectory: Trajectory
    gap: GapEstimate
    variance: float
    variance_se: float


def langevin_schedule(dyn: DynamicsConfig, relaxation: float, h: float) -> tuple[int, int]:
    """(burn_in, steps) for the integrator; unset values are multiples of ``relaxation`` / h."""
    burn_in = dyn.burn_in if dyn.burn_in is not None else math.ceil(dyn.burn_in_relaxations * relaxation / h)
    steps = dyn.steps if dyn.steps is not None else burn_in + math.ceil(dyn.run_relaxations * relaxation / h)
    if steps <= burn_in:
        msg = f"burn-in of {burn_in} steps leaves nothing of a {steps}-step run"
        raise ConfigError(msg)
    return burn_in, steps


def glauber_schedule(dyn: DynamicsConfig, relaxation: float) -> tuple[float, float]:
    """(burn_in_time, time) for the Discrete Gaussian chain."""
    burn_in = dyn.burn_in_time if dyn.burn_in_time is not None else dyn.burn_in_relaxations * relaxation
    time = dyn.time if dyn.time is not None else burn_in + dyn.run_relaxations * relaxation
    if time - burn_in < dyn.interval:
        msg = f"burn-in time {burn_in:g} leaves no samples of a run to time {time:g}"
        raise ConfigError(msg)
    return burn_in, time


def simulate(config: ExperimentConfig, flow: FlowRun | None, seed: int) -> SimulationResult:
    """Glauber dynamics for the configured model and its empirical gap and variance per site."""
    lattice = lattice_of(config)
    model, dyn = config.model, config.dynamics
    if model.family == "discrete-gaussian":
        assert model.beta is not None
        coupling = dg_coupling(lattice, model.beta, model.epsilon)
        burn_in_time, time = glauber_schedule(dyn, 1.0 / float(coupling.bands[-1]))
        params = GlauberParams(time=time, burn_in=burn_in_time, interval=dyn.interval)
        logger.debug("discrete gaussian chain: burn-in {:.4g}, run to {:.4g}", burn_in_time, time)
        trajectory = dg_glauber_run(lattice, model.beta, model.epsilon, params, seed, coupling=coupling)
    else:
        potential: Any = None
        if model.family == "phi4":
            assert flow is not None and flow.nu is not None and flow.m2 is not None and model.g is not None
            decomp = flow.decomp
            potential = Phi4SitePotential(model.g, flow.nu - flow.m2)
        elif model.family == "sine-gordon":
            decomp = build_covariance_decomposition(lattice, "sine-gordon", beta=model.beta)
            potential = sine_gordon_initial(model.amplitude, model.q_max)
        elif model.m2 is not None:
            decomp = build_covariance_decomposition(lattice, "massive", m2=model.m2)
        else:
            decomp = build_covariance_decomposition(lattice, "sine-gordon", beta=model.beta)
        curvature = None
        if isinstance(potential, FourierPotential):
            q = np.arange(potential.q_max + 1)
            curvature = decomp.target_operator().max_eigenvalue() + 2.0 * float(np.sum(q**2 * np.abs(potential.coeffs)))
        langevin = LangevinModel(lattice, decomp.target_operator(), potential, curvature)
        h = dyn.h if dyn.h is not None else langevin.default_step()
        burn_in, steps = langevin_schedule(dyn, langevin.relaxation_time(), h)
        logger.debug("langevin run: h {:.4g}, burn-in {} of {} steps", h, burn_in, steps)
        params = LangevinParams(h=h, steps=steps, burn_in=burn_in, thin=dyn.thin, observables=dyn.observables)
        trajectory = langevin_run(langevin, params, seed)
    gap = estimate_gap(trajectory, "F")
    variance = estimate_variance(trajectory, "F")
    volume = lattice.volume
    return SimulationResult(trajectory, gap, variance.variance / volume, variance.standard_error / volume)


@dataclass(eq=False)
class PointResult:
    index: int
    row: dict[str, Any]
    flow_records: list[dict[str, Any]] = field(default_factory=list)
    certificate: dict[str, Any] | None = None


def _base_row(config: ExperimentConfig, seed: int) -> dict[str, Any]:
    model, lattice = config.model, config.lattice
    row: dict[str, Any] = dict.fromkeys(RESULT_COLUMNS, "")
    row.update(
        config_hash=config_hash(config),
        seed=seed,
        family=model.family,
        L=lattice.L,
        N=lattice.N,
        d=lattice.d,
        n=lattice.n,
        g=model.g,
        nu=model.nu,
        t=model.t,
        m2=model.m2,
        beta=model.beta,
    )
    return {key: "" if value is None else value for key, value in row.items()}


def run_point(config: ExperimentConfig, seed: int, index: int = 0) -> PointResult:
    """Flow, certificate and optional dynamics for one configuration; failures are recorded in the row."""
    row = _base_row(config, seed)
    result = PointResult(index, row)
    try:
        flow = run_model_flow(config)
        certificate = flow.bounds.certificate
        epsilons = np.array(certificate.epsilons)
        row.update(
            nu=row["nu"] if flow.nu is None else flow.nu,
            m2=row["m2"] if flow.m2 is None else flow.m2,
            eps_max=float(epsilons.max()),
            eps_sum=float(epsilons.sum()),
            valid=certificate.valid,
            gap_lower=flow.bounds.lower,
            gap_upper=flow.bounds.upper,
            var_flow=flow.bounds.variance_per_site,
            status="ok" if certificate.valid else "invalid",
        )
        result.flow_records = [{"point": index, "seed": seed, **state.to_record()} for state in flow.states]
        result.certificate = {"point": index, "seed": seed, **json.loads(certificate.model_dump_json())}
        if config.dynamics.enabled:
            simulation = simulate(config, flow, seed)
            row.update(
                gap_hat=simulation.gap.gamma,
                gap_se=simulation.gap.standard_error,
                var_mc=simulation.variance,
                var_se=simulation.variance_se,
            )
            if simulation.gap.inconclusive:
                row["status"] = "inconclusive"
    except HierGapError as e:
        logger.warning("point {} failed: {}", index, e)
        row.update(status="error", error=f"{type(e).__name__}: {e}")
    return result


def expand_sweep(config: ExperimentConfig) -> list[ExperimentConfig]:
    """Cartesian product of the sweep axes, each point a fully validated configuration."""
    axes = config.sweep.axes
    if not axes:
        return [config]
    names = sorted(axes)
    points = []
    for values in itertools.product(*(axes[name] for name in names)):
        document = config.model_dump(mode="json")
        document["sweep"] = {"axes": {}}
        for name, value in zip(names, values, strict=True):
            number = int(value) if float(value).is_integer() and name.startswith("lattice.") else value
            set_path(document, name, number)
        points.append(validate_config(document))
    return points


def _point_task(document: dict[str, Any], seed: int, index: int) -> PointResult:
    return run_point(ExperimentConfig.model_validate(document), seed, index)


def flow_table(states: Sequence[RGFlowState], certificate: BLCertificate, point: int = 0) -> list[dict[str, Any]]:
    """One row per scale: (scale, norm, g_j, nu_j, epsilon_j, delta_j)."""
    deltas = certificate_deltas(certificate.epsilons) if certificate.valid else None
    rows = []
    for state in scale_states(states):
        diagnostics = state.diagnostics
        rows.append(
            {
                "point": point,
                "scale": state.scale,
                "norm": diagnostics.norm,
                "g": diagnostics.g,
                "nu": diagnostics.nu,
                "epsilon": diagnostics.epsilon,
                "delta": None if deltas is None else float(deltas[state.scale]),
            }
        )
    return rows


def write_flow_csv(rows: Sequence[dict[str, Any]], path: Path) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=FLOW_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: "" if row.get(key) is None else row[key] for key in FLOW_COLUMNS})
    return path


def write_results_csv(rows: Sequence[dict[str, Any]], path: Path) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=RESULT_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    return path


def _write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, delimiter="\t")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def write_plot_data(rows: Sequence[dict[str, Any]], directory: Path) -> list[Path]:
    """gap vs t for phi^4 rows; gap L^{2N} vs N for Sine-Gordon and Discrete Gaussian rows."""
    directory.mkdir(parents=True, exist_ok=True)
    good = [row for row in rows if row["status"] != "error"]
    written = []
    phi4 = [row for row in good if row["family"] == "phi4"]
    if phi4:
        table = [[row[key] for key in ("t", "m2", "gap_lower", "gap_upper", "gap_hat", "gap_se")] for row in phi4]
        written.append(
            _write_tsv(directory / "gap_vs_t.tsv", ["t", "m2", "gap_lower", "gap_upper", "gap_hat", "gap_se"], table)
        )
    periodic = [row for row in good if row["family"] in ("sine-gordon", "discrete-gaussian")]
    if periodic:
        table = []
        for row in periodic:
            scale = float(row["L"]) ** (2 * int(row["N"]))
            keys = ("gap_lower", "gap_upper", "gap_hat")
            scaled = [float(row[key]) * scale if row[key] != "" else "" for key in keys]
            table.append([row["N"], row["beta"], row["family"], *scaled])
        header = ["N", "beta", "family", "gap_lower_scaled", "gap_upper_scaled", "gap_hat_scaled"]
        written.append(_write_tsv(directory / "gap_scaled_vs_N.tsv", header, table))
    return written


class ExperimentResult(NamedTuple):
    rows: list[dict[str, Any]]
    output_dir: Path
    files: list[Path]


def run_experiment(
    config: ExperimentConfig,
    output_dir: Path | None = None,
    workers: int | None = None,
    on_point: Callable[[int, int], None] | None = None,
) -> ExperimentResult:
    """Run every sweep point for every seed and write the output bundle.

    Points run in a process pool when ``workers > 1``; all files are written here, in
    point order.
    """
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    points = expand_sweep(config)
    tasks = [(point.model_dump(mode="json"), seed) for point in points for seed in config.seeds]
    count = workers or config.workers
    logger.info("running {} sweep points with {} workers into {}", len(tasks), count, out)
    results: list[PointResult] = []
    if count > 1:
        with ProcessPoolExecutor(max_workers=count) as pool:
            futures = [pool.submit(_point_task, document, seed, index) for index, (document, seed) in enumerate(tasks)]
            for done, future in enumerate(futures, start=1):
                results.append(future.result())
                if on_point is not None:
                    on_point(done, len(tasks))
    else:
        for index, (document, seed) in enumerate(tasks):
            results.append(_point_task(document, seed, index))
            if on_point is not None:
                on_point(index + 1, len(tasks))
    results.sort(key=lambda result: result.index)
    rows = [result.row for result in results]
    files = [write_results_csv(rows, out / "results.csv")]
    with (out / "flow.jsonl").open("w", encoding="utf-8") as handle:
        for result in results:
            for record in result.flow_records:
                handle.write(json.dumps({"config_hash": result.row["config_hash"], **record}) + "\n")
    files.append(out / "flow.jsonl")
    certificates = [
        {"config_hash": result.row["config_hash"], **result.certificate} for result in results if result.certificate
    ]
    (out / "certificate.json").write_text(json.dumps(certificates, indent=2), encoding="utf-8")
    files.append(out / "certificate.json")
    files.extend(write_plot_data(rows, out / "plotdata"))
    logger.info("wrote {} rows to {}", len(rows), out / "results.csv")
    return ExperimentResult(rows, out, files)


def run_flow_bundle(config: ExperimentConfig, output_dir: Path | None = None) -> tuple[FlowRun, list[Path]]:
    """Single-point flow with flow.jsonl, flow.csv and certificate.json."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    flow = run_model_flow(config)
    digest = config_hash(config)
    files = [
        write_flow_jsonl(flow.states, out / "flow.jsonl", digest),
        write_flow_csv(flow_table(flow.states, flow.bounds.certificate), out / "flow.csv"),
        flow.bounds.certificate.write(out / "certificate.json", digest),
    ]
    return flow, files


class LogCorrectionFit(NamedTuple):
    exponent: float
    intercept: float
    r_value: float


def fit_log_correction(t: Sequence[float], gap: Sequence[float]) -> LogCorrectionFit:
    """Fit gap = C t (-log t)^-p by regressing log(gap / t) on log(-log t)."""
    t_values = np.asarray(t, dtype=float)
    gaps = np.asarray(gap, dtype=float)
    if t_values.size < 3 or np.any((t_values <= 0) | (t_values >= 1)) or np.any(gaps <= 0):
        msg = "log-correction fit needs at least 3 points with 0 < t < 1 and positive gaps"
        raise ConfigError(msg)
    fit = stats.linregress(np.log(-np.log(t_values)), np.log(gaps / t_values))
    return LogCorrectionFit(-float(fit.slope), float(fit.intercept), float(fit.rvalue))


class ValidationCheck(NamedTuple):
    name: str
    passed: bool
    detail: str


def _check_decomposition() -> tuple[bool, str]:
    worst = 0.0
    for d in (1, 2):
        for m2 in (1e-2, 1.0):
            lattice = HierLattice(L=2, N=3, d=d)
            worst = max(worst, verify_decomposition(build_covariance_decomposition(lattice, "massive", m2=m2)))
    return worst <= 1e-9, f"max entry error {worst:.2e}"


def _check_projectors() -> tuple[bool, str]:
    lattice = HierLattice(L=2, N=3, d=2)
    averages = dense_hier_operators(lattice).averages
    worst = 0.0
    for j, first in enumerate(averages):
        for k, second in enumerate(averages):
            product = first.matrix @ second.matrix
            worst = max(worst, float(np.max(np.abs(product - averages[max(j, k)].matrix))))
    return worst <= 1e-12, f"max |Q_j Q_k - Q_max(j,k)| {worst:.2e}"


def _check_gaussian_certificate() -> tuple[bool, str]:
    lattice = HierLattice(L=2, N=4, d=1)
    decomp = build_covariance_decomposition(lattice, "massive", m2=1e-2)
    certificate = build_certificate(decomp, np.zeros(lattice.N + 1))
    dense = dense_hier_operators(lattice, decomp)
    assert dense.target is not None
    exact = float(dense.target.eigenvalues().min())
    relative = abs(certificate.gap_lower_bound - exact) / exact
    band_error = float(
        np.max(
            np.abs(
                np.sort(dense_block_sum(dense.averages, decomp.lambdas).eigenvalues())
                - np.sort(certificate.d0_operator(lattice).spectrum())
            )
        )
    )
    return relative <= 1e-10 and band_error <= 1e-10, f"relative gap error {relative:.2e}, band error {band_error:.2e}"


def _check_fourier_smoothing() -> tuple[bool, str]:
    beta, L = 0.2, 2
    pot = FourierPotential(np.exp(-np.arange(17.0)))
    variance = (1.0 - L**-2) / beta
    smoothed = gaussian_smoothing(pot, variance)
    expected = pot.coeffs * np.exp(-0.5 * variance * np.arange(17.0) ** 2)
    error = float(np.max(np.abs(smoothed.coeffs - expected)))
    return error <= 1e-12, f"max coefficient error {error:.2e}"


def _check_radial_step() -> tuple[bool, str]:
    g, nu = 0.1, -0.1
    pot = phi4_initial(g, nu, points=512)
    stepped = rg_step_radial(pot, 0.5, L=2, d=1)
    points = stepped.grid[:: max(1, stepped.grid.size // 20)][:20]
    exact = convolution_oracle(lambda x: 0.25 * g * x**4 + 0.5 * nu * x**2, 0.5, points, reblock=2)
    error = float(np.max(np.abs(stepped.radial(points) - exact) / np.maximum(1.0, np.abs(exact))))
    return error <= 1e-8, f"max relative error {error:.2e}"


def _check_dg_path_bound() -> tuple[bool, str]:
    worst = math.inf
    mismatch = 0.0
    for beta in (0.1, 0.3, 1.0):
        pot = dg_effective_potential(beta)
        for psi in np.linspace(0.0, 2.0 * math.pi, 16, endpoint=False):
            result = dg_exact_gap(beta, float(psi))
            worst = min(worst, result.path_bound * result.gap)
            mismatch = max(mismatch, abs(dg_site_gap(pot, float(psi)).inverse_gap * result.gap - 1.0))
    passed = worst >= 1.0 - 1e-9 and mismatch <= 1e-6
    return passed, f"min path bound * gap {worst:.4f}, generator mismatch {mismatch:.2e}"


def _check_ou_gap() -> tuple[bool, str]:
    curvature = 2.0
    gap = generator_gap_1d(lambda x: 0.5 * curvature * x**2)
    relative = abs(gap - curvature) / curvature
    return relative <= 1e-3, f"relative error {relative:.2e}"


VALIDATION_CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "decomposition identity": _check_decomposition,
    "projector algebra": _check_projectors,
    "gaussian certificate tightness": _check_gaussian_certificate,
    "fourier smoothing identity": _check_fourier_smoothing,
    "radial step vs convolution": _check_radial_step,
    "discrete gaussian path bound": _check_dg_path_bound,
    "ou generator gap": _check_ou_gap,
}


def run_validation_suite(names: Sequence[str] | None = None) -> list[ValidationCheck]:
    """Run the named oracle cross-checks (all by default); numerical errors count as failures."""
    selected = list(VALIDATION_CHECKS) if names is None else list(names)
    checks = []
    for name in selected:
        if name not in VALIDATION_CHECKS:
            msg = f"unknown validation check {name!r}"
            raise ConfigError(msg)
        try:
            passed, detail = VALIDATION_CHECKS[name]()
        except HierGapError as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        logger.info("validation {}: {}", name, "passed" if passed else "FAILED")
        checks.append(ValidationCheck(name, passed, detail))
    return checks
