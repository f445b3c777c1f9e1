# this_file: src/hiergap/cli.py
"""Command-line interface for the hierarchical spectral-gap lab."""

import json
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any, NoReturn, TypeVar

import fire
from loguru import logger
from rich.console import Console
from rich.progress import Progress
from rich.table import Table

from hiergap.config import ExperimentConfig, apply_overrides, config_hash, load_config
from hiergap.errors import HierGapError, NumericalError
from hiergap.experiment import (
    lattice_of,
    run_experiment,
    run_flow_bundle,
    run_validation_suite,
    simulate,
    tune_critical_nu,
)

console = Console()
T = TypeVar("T")


def configure_logging(verbose: bool = False) -> None:
    """Replace loguru's default sink with a single stderr sink."""
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")


def _fail(error: HierGapError) -> NoReturn:
    console.print(f"[red]Error: {error}[/red]")
    sys.exit(error.exit_code)


def _format(value: Any) -> str:
    if value is None or value == "":
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


class HierGapCLI:
    """Renormalisation-group spectral-gap bounds for hierarchical spin systems."""

    def __init__(
        self,
        config: str | None = None,
        out: str | None = None,
        seed: int | None = None,
        workers: int | None = None,
        set: str | list[str] | tuple[str, ...] | None = None,  # noqa: A002
        verbose: bool = False,
    ):
        """Load the experiment configuration.

        Args:
            config: Path to a JSON experiment configuration (defaults apply without one)
            out: Output directory (overrides ``output_dir``)
            seed: Seed for all runs (overrides ``seeds``)
            workers: Worker processes for sweeps
            set: ``key=value`` overrides, comma-separated or repeated, e.g. ``lattice.N=4``
            verbose: Log per-step numerical detail
        """
        configure_logging(verbose)
        self._config_path = config
        self._out = out
        self._seed = seed
        self._workers = workers
        self._overrides = set

    def _load(self) -> ExperimentConfig:
        config = load_config(self._config_path) if self._config_path else ExperimentConfig()
        overrides: list[str] = []
        if isinstance(self._overrides, str):
            overrides.extend(item for item in self._overrides.split(",") if item)
        elif self._overrides:
            overrides.extend(str(item) for item in self._overrides)
        if self._out is not None:
            overrides.append(f"output_dir={json.dumps(self._out)}")
        if self._seed is not None:
            overrides.append(f"seeds=[{int(self._seed)}]")
        if self._workers is not None:
            overrides.append(f"workers={int(self._workers)}")
        return apply_overrides(config, overrides)

    def _run(self, action: Callable[[ExperimentConfig], T]) -> T:
        try:
            return action(self._load())
        except HierGapError as e:
            _fail(e)

    def flow(self):
        """Run the renormalisation flow and print per-scale diagnostics."""

        def action(config: ExperimentConfig) -> None:
            flow, files = run_flow_bundle(config)
            table = Table(title=f"{config.model.family} flow ({config_hash(config)})")
            for column in ("j", "|B_j|", "norm", "g_j", "nu_j", "s_neg", "epsilon_j"):
                table.add_column(column, justify="right")
            for state in flow.states:
                diagnostics = state.diagnostics
                table.add_row(
                    "N,N" if diagnostics.final else str(state.scale),
                    str(diagnostics.block_volume),
                    _format(diagnostics.norm),
                    _format(diagnostics.g),
                    _format(diagnostics.nu),
                    _format(diagnostics.s_neg),
                    "-" if diagnostics.final else _format(diagnostics.epsilon),
                )
            console.print(table)
            console.print(f"[green]Wrote[/green] {', '.join(str(path) for path in files)}")

        self._run(action)

    def certify(self):
        """Build the Brascamp-Lieb certificate and print the gap bounds."""

        def action(config: ExperimentConfig) -> None:
            flow, files = run_flow_bundle(config)
            bounds = flow.bounds
            table = Table(title="Spectral gap bounds")
            table.add_column("quantity", style="cyan")
            table.add_column("value", justify="right", style="green")
            table.add_row("certificate valid", str(bounds.valid))
            table.add_row("gap lower bound", _format(bounds.lower))
            table.add_row("gap upper bound", _format(bounds.upper))
            table.add_row("var(F) / |Lambda|", _format(bounds.variance_per_site))
            table.add_row("max epsilon_j", _format(max(bounds.certificate.epsilons)))
            console.print(table)
            console.print(f"[green]Wrote[/green] {files[-1]}")

        self._run(action)

    def simulate(self):
        """Run the Glauber dynamics and estimate gap and variance."""

        def action(config: ExperimentConfig) -> None:
            out = Path(config.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            flow = None
            if config.model.family == "phi4":
                flow = run_flow_bundle(config, out)[0]
            seed = config.seeds[0]
            with console.status("[bold green]Simulating...", spinner="dots"):
                result = simulate(config, flow, seed)
            result.trajectory.to_csv(out / "trajectory.csv")
            (out / "gap_estimate.json").write_text(result.gap.model_dump_json(indent=2), encoding="utf-8")
            table = Table(title=f"Dynamics (seed {seed})")
            table.add_column("quantity", style="cyan")
            table.add_column("value", justify="right", style="green")
            table.add_row("gap estimate", f"{_format(result.gap.gamma)} +- {_format(result.gap.standard_error)}")
            table.add_row("inconclusive", str(result.gap.inconclusive))
            table.add_row("var(F) / |Lambda|", f"{_format(result.variance)} +- {_format(result.variance_se)}")
            console.print(table)

        self._run(action)

    def tune(self, t: float | None = None):
        """Locate the critical nu and the matched mass for the phi^4 model.

        Args:
            t: Offset nu - nu_c; scans 1e-1 .. 1e-6 when omitted
        """

        def action(config: ExperimentConfig) -> None:
            if config.model.g is None:
                logger.info("config has no phi^4 coupling; tuning phi^4 at g=0.05")
                config = apply_overrides(config, ["model.family=\"phi4\"", "model.g=0.05"])
            with console.status("[bold green]Tuning...", spinner="dots"):
                result = tune_critical_nu(
                    config.model.g, lattice_of(config), t, config.flow.grid_points, config.flow.quadrature_tol
                )
            console.print_json(result.model_dump_json())

        self._run(action)

    def sweep(self):
        """Run every sweep point and write results.csv, flow.jsonl, certificate.json and plot data."""

        def action(config: ExperimentConfig) -> None:
            with Progress(console=console) as progress:
                task = progress.add_task("Sweeping", total=None)

                def advance(done: int, total: int) -> None:
                    progress.update(task, completed=done, total=total)

                result = run_experiment(config, on_point=advance)
            failed = sum(1 for row in result.rows if row["status"] == "error")
            console.print(f"[green]{len(result.rows)} rows[/green], {failed} failed; output in {result.output_dir}")

        self._run(action)

    def validate(self):
        """Run the oracle cross-checks; exits with status 3 when any fails."""
        checks = run_validation_suite()
        table = Table(title="Validation suite")
        table.add_column("check", style="cyan")
        table.add_column("result")
        table.add_column("detail")
        for check in checks:
            table.add_row(check.name, "[green]pass[/green]" if check.passed else "[red]FAIL[/red]", check.detail)
        console.print(table)
        if not all(check.passed for check in checks):
            _fail(NumericalError("validation suite failed"))

    def version(self):
        """Show version information."""
        from hiergap.__version__ import __version__

        console.print(f"hiergap version {__version__}")


def main():
    """Main entry point for the CLI."""
    fire.Fire(HierGapCLI)
