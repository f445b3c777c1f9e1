# this_file: src/hiergap/config.py
"""Experiment configuration: one JSON document, validated by pydantic, with dotted overrides."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from hiergap.errors import ConfigError

ModelFamily = Literal["phi4", "sine-gordon", "discrete-gaussian", "free"]
DYNAMICS_MAX_DEPTH = 8


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeConfig(_Strict):
    L: int = Field(default=2, ge=2)
    N: int = Field(default=3, ge=1)
    d: int = Field(default=2, ge=1)
    n: int = Field(default=1, ge=1)


class ModelConfig(_Strict):
    """Model parameters.

    ``t`` is the offset nu - nu_c for tuned phi^4 runs; ``amplitude`` is the Fourier norm
    of the initial Sine-Gordon potential without its constant term. ``epsilon`` overrides
    the Discrete Gaussian constant-mode mass (default beta L^-2N).
    """

    family: ModelFamily = "sine-gordon"
    g: float | None = None
    nu: float | None = None
    t: float | None = None
    m2: float | None = Field(default=None, gt=0)
    beta: float | None = Field(default=None, gt=0)
    epsilon: float | None = Field(default=None, gt=0)
    amplitude: float = Field(default=0.05, ge=0)
    q_max: int = Field(default=64, ge=4)

    @model_validator(mode="after")
    def _check_family(self) -> ModelConfig:
        if self.family == "phi4" and not (self.g is not None and self.g > 0):
            msg = "phi4 models need g > 0"
            raise ValueError(msg)
        if self.family in ("sine-gordon", "discrete-gaussian") and self.beta is None:
            msg = f"{self.family} models need beta > 0"
            raise ValueError(msg)
        if self.family == "free" and self.m2 is None and self.beta is None:
            msg = "free models need m2 (massive) or beta (sine-gordon covariance)"
            raise ValueError(msg)
        return self


class FlowConfig(_Strict):
    backend: Literal["auto", "radial", "fourier"] = "auto"
    grid_points: int = Field(default=512, ge=64)
    quadrature_tol: float = Field(default=1e-10, gt=0)


class DynamicsConfig(_Strict):
    """Dynamics settings.

    ``steps``, ``burn_in`` and ``thin`` drive the Langevin integrator (in steps); ``time``,
    ``burn_in_time`` and ``interval`` drive the Discrete Gaussian chain. Unset run lengths follow
    the Gaussian relaxation time tau = 1/epsilon (1/m^2 for massive models): the burn-in
    lasts ``burn_in_relaxations`` tau and the recorded run ``run_relaxations`` tau.
    """

    enabled: bool = False
    h: float | None = Field(default=None, gt=0)
    steps: int | None = Field(default=None, gt=0)
    burn_in: int | None = Field(default=None, ge=0)
    thin: int = Field(default=10, gt=0)
    time: float | None = Field(default=None, gt=0)
    burn_in_time: float | None = Field(default=None, ge=0)
    interval: float = Field(default=1.0, gt=0)
    burn_in_relaxations: float = Field(default=10.0, ge=0)
    run_relaxations: float = Field(default=100.0, gt=0)
    observables: list[str] = Field(default_factory=lambda: ["F"])


class SweepConfig(_Strict):
    """Grid axes keyed by dotted config paths, e.g. ``{"lattice.N": [2, 3, 4]}``."""

    axes: dict[str, list[float]] = Field(default_factory=dict)


class ExperimentConfig(_Strict):
    lattice: LatticeConfig = Field(default_factory=LatticeConfig)
    model: ModelConfig = Field(default_factory=lambda: ModelConfig(beta=0.2))
    flow: FlowConfig = Field(default_factory=FlowConfig)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    seeds: list[int] = Field(default_factory=lambda: [0])
    output_dir: Path = Path("runs")
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_dynamics(self) -> ExperimentConfig:
        if self.dynamics.enabled and self.lattice.N > DYNAMICS_MAX_DEPTH:
            msg = f"dynamics runs need N <= {DYNAMICS_MAX_DEPTH}, got {self.lattice.N}"
            raise ValueError(msg)
        if self.model.family in ("sine-gordon", "discrete-gaussian") and self.lattice.n != 1:
            msg = f"{self.model.family} models are scalar (n = 1)"
            raise ValueError(msg)
        periodic = self.model.family in ("sine-gordon", "discrete-gaussian")
        mismatched = (self.flow.backend == "radial" and periodic) or (self.flow.backend == "fourier" and not periodic)
        if self.model.family != "free" and mismatched:
            msg = f"backend {self.flow.backend!r} does not fit the {self.model.family} family"
            raise ValueError(msg)
        return self


def validate_config(document: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as e:
        msg = f"invalid configuration: {e}"
        raise ConfigError(msg) from e


def load_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        msg = f"config file not found: {path}"
        raise ConfigError(msg) from e
    except json.JSONDecodeError as e:
        msg = f"config file {path} is not valid JSON: {e}"
        raise ConfigError(msg) from e
    return validate_config(document)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(document: dict[str, Any], dotted: str, value: Any) -> None:
    """Assign ``value`` at a dotted path, creating intermediate mappings."""
    *parents, leaf = dotted.split(".")
    node = document
    for key in parents:
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            msg = f"cannot set {dotted!r}: {key!r} is not a section"
            raise ConfigError(msg)
        node = child
    node[leaf] = value


def apply_overrides(config: ExperimentConfig, overrides: list[str] | tuple[str, ...] | str | None) -> ExperimentConfig:
    """Apply ``key=value`` overrides; values are parsed as JSON and fall back to strings."""
    if not overrides:
        return config
    if isinstance(overrides, str):
        overrides = [item for item in overrides.split(",") if item]
    document = config.model_dump(mode="json")
    for item in overrides:
        key, sep, raw = str(item).partition("=")
        if not sep or not key:
            msg = f"override {item!r} is not of the form key=value"
            raise ConfigError(msg)
        set_path(document, key.strip(), _parse_value(raw.strip()))
    return validate_config(document)


def config_hash(config: ExperimentConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical JSON form."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
