"""Experiment configuration: YAML files validated into typed records."""
from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; the message lists offending field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SpinBosonModel(_Strict):
    kind: Literal["spin_boson"] = "spin_boson"
    n_modes: int = Field(64, ge=1)
    mode_dim: int = Field(4, ge=2)
    omega_max: float = Field(7.0, gt=0)
    temperature: float = Field(4.0, ge=0)
    coupling_scale: float = Field(1.0, ge=0)


class FermionicModel(_Strict):
    kind: Literal["fermionic"] = "fermionic"
    n_modes: int = Field(128, ge=1)
    omega_min: float = -32.0
    omega_max: float = 32.0
    gamma: float = Field(1.0, ge=0)
    bath_occupied: bool = True

    @model_validator(mode="after")
    def _band(self):
        if not self.omega_max > self.omega_min:
            raise ValueError("omega_max must exceed omega_min")
        return self


class Grid(_Strict):
    dt: float = Field(gt=0)
    t_end: float = Field(gt=0)
    n: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _steps(self):
        steps = round(self.t_end / self.dt)
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("t_end must be an integer multiple of dt")
        if self.n is not None and self.n != steps:
            raise ValueError(f"n={self.n} inconsistent with t_end/dt={steps}")
        return self

    @property
    def steps(self) -> int:
        return self.n if self.n is not None else int(round(self.t_end / self.dt))


class Policy(_Strict):
    epsilon: float = Field(gt=0)
    range_factor: float = Field(1.0, ge=1)
    n_sweeps: int = Field(1, ge=1)
    preselect: bool = False


class Plan(_Strict):
    scheme: Literal["sequential", "sequential_preselect", "tree"] = "tree"
    ordering: Literal["increasing_frequency", "decreasing_frequency", "increasing_coupling",
                      "random", "as_given"] = "increasing_frequency"
    trotter: Literal["first_order", "symmetric_alternating", "symmetric_halfstep"] = \
        "symmetric_alternating"
    seed: Optional[int] = None


class Propagation(_Strict):
    """``H_S / hbar = (sx sigma_x + sz sigma_z) / 2`` in 1/ps; ``sx`` defaults by model
    kind (1 for the spin-boson model, 0 for the number-conserving fermionic model)."""

    sx_coefficient: Optional[float] = None
    sz_coefficient: float = 0.0
    initial_state: Literal["ground", "excited"] = "ground"


class Outputs(_Strict):
    directory: str = "runs/run"
    cache_ptmpo: bool = False
    spectrum: bool = True
    reference: Optional[str] = None


class ExperimentConfig(_Strict):
    schema_version: Literal[1] = 1
    name: str = "run"
    model: Union[SpinBosonModel, FermionicModel] = Field(discriminator="kind")
    grid: Grid
    policy: Policy
    plan: Plan = Plan()
    propagation: Propagation = Propagation()
    outputs: Outputs = Outputs()


def _format_errors(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{path}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>: config must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_errors(err)) from None


def load_config(path) -> ExperimentConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    return parse_config(data)


def merge(base: dict, override: dict) -> dict:
    """Recursive dict update returning a new dict."""
    out = dict(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = val
    return out
