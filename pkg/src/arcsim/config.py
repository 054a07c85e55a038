"""Run configuration: one JSON document, validated before any computation.

Every section rejects unknown keys. Relaxation rows use ``gamma_tau = 0`` for
continuous relaxation and ``gamma_tau = "inf"`` for periodic refresh.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, field_validator, model_validator

from .model import Junction, SystemSpec

EXPERIMENTS = (
    "reference",
    "timeseries",
    "ness",
    "turnover",
    "phase-diagram",
    "optimal",
    "scaling",
    "collapse",
    "osee",
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Strict):
    system: Literal["resonant_level", "uniform_chain"]
    n_modes: PositiveInt
    temperature: float = Field(ge=0)
    bias: float
    onsite: float = 0.5
    system_hopping: float = 0.5
    n_sites: PositiveInt = 3
    reservoir_hopping: PositiveFloat = 1.0
    boundary_coupling: float = Field(1.0, ge=0)

    def system_spec(self) -> SystemSpec:
        if self.system == "resonant_level":
            return SystemSpec.resonant_level(self.onsite, self.system_hopping)
        return SystemSpec.uniform_chain(self.n_sites, self.system_hopping, self.onsite)

    def junction(self, n_modes: int | None = None, temperature: float | None = None) -> Junction:
        return Junction.symmetric(
            self.system_spec(),
            self.n_modes if n_modes is None else n_modes,
            self.temperature if temperature is None else temperature,
            self.bias,
            self.reservoir_hopping,
            self.boundary_coupling,
        )


class ReferenceParams(_Strict):
    epsabs: PositiveFloat = 1e-12
    epsrel: PositiveFloat = 1e-11


class TimeseriesRun(_Strict):
    """One trace. CR needs ``gamma`` (a number or "heuristic"), PR needs ``tau``,
    ARC needs ``gamma_tau`` and ``action``."""

    label: str = Field(pattern=r"^[A-Za-z0-9_.-]+$")
    protocol: Literal["CR", "ARC", "PR"]
    gamma: Union[PositiveFloat, Literal["heuristic"], None] = None
    tau: Optional[PositiveFloat] = None
    gamma_tau: Optional[PositiveFloat] = None
    action: Optional[PositiveFloat] = None

    @model_validator(mode="after")
    def _complete(self) -> TimeseriesRun:
        need = {"CR": ("gamma",), "PR": ("tau",), "ARC": ("gamma_tau", "action")}[self.protocol]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"{self.protocol} run '{self.label}' needs {', '.join(missing)}")
        return self


def _figure_three_runs() -> tuple[TimeseriesRun, ...]:
    return (
        TimeseriesRun(label="cr", protocol="CR", gamma=0.084),
        TimeseriesRun(label="arc-0.1", protocol="ARC", gamma_tau=0.1, action=37.90),
        TimeseriesRun(label="arc-1", protocol="ARC", gamma_tau=1.0, action=37.30),
        TimeseriesRun(label="pr", protocol="PR", tau=64.0),
    )


class TimeseriesParams(_Strict):
    runs: tuple[TimeseriesRun, ...] = Field(default_factory=_figure_three_runs)
    duration: PositiveFloat = 1280.0
    samples_per_cycle: PositiveInt = 16
    continuous_samples: PositiveInt = 2000


class SweepPoint(_Strict):
    gamma_tau: float = Field(ge=0)
    action: PositiveFloat


class NessParams(_Strict):
    points: tuple[SweepPoint, ...] = (
        SweepPoint(gamma_tau=0.0, action=2 / 0.084),
        SweepPoint(gamma_tau=1.0, action=37.30),
        SweepPoint(gamma_tau=math.inf, action=64.0),
    )
    with_osee: bool = True


class TurnoverParams(_Strict):
    gamma_min: PositiveFloat = 1e-3
    gamma_max: PositiveFloat = 10.0
    n_gamma: int = Field(40, ge=2)
    heuristic: bool = True
    shift: Optional[PositiveFloat] = None


class PhaseDiagramParams(_Strict):
    gamma_tau_min: PositiveFloat = 1e-2
    gamma_tau_max: PositiveFloat = 1e3
    n_gamma_tau: PositiveInt = 60
    include_cr: bool = True
    include_pr: bool = True
    action_min: PositiveFloat = 0.1
    action_max: Optional[PositiveFloat] = None  # default 4 tau_W
    n_actions: int = Field(120, ge=2)
    window: Optional[PositiveFloat] = None  # default tau_S
    with_osee: bool = False


class OptimalParams(_Strict):
    gamma_tau: tuple[float, ...] = (0.1, 1.0, 10.0, math.inf)
    action_min: Optional[PositiveFloat] = None  # default tau_W / 8
    action_max: Optional[PositiveFloat] = None  # default 2 tau_W
    n_actions: int = Field(9, ge=2)
    refine: int = Field(4, ge=0)
    window: Optional[PositiveFloat] = None
    with_osee: bool = True

    @field_validator("gamma_tau")
    @classmethod
    def _positive(cls, v):
        if any(not g > 0 for g in v):
            raise ValueError("optimal-action rows need gamma_tau > 0")
        return v


class ScalingParams(_Strict):
    n_modes: tuple[PositiveInt, ...] = (32, 64, 128, 256, 512)
    protocols: tuple[Literal["PR", "CR", "ARC"], ...] = ("PR", "CR", "ARC")
    arc_gamma_tau: PositiveFloat = 1.0
    fit_min_modes: PositiveInt = 128
    window: Optional[PositiveFloat] = None
    with_osee: bool = True


class CollapseParams(_Strict):
    temperatures: tuple[PositiveFloat, ...] = (0.1, 0.05, 0.025)
    x_min: PositiveFloat = 0.5
    x_max: PositiveFloat = 10.0
    n_points: int = Field(12, ge=3)
    window: Optional[PositiveFloat] = None


class OseeParams(_Strict):
    points: tuple[SweepPoint, ...] = NessParams().points
    cut: Optional[int] = Field(None, ge=0)


class RunConfig(_Strict):
    experiment: Literal[EXPERIMENTS]  # type: ignore[valid-type]
    model: ModelConfig
    out: str = "results"
    workers: PositiveInt = 1
    seed: int = 0
    reference: ReferenceParams = ReferenceParams()
    timeseries: TimeseriesParams = TimeseriesParams()
    ness: NessParams = NessParams()
    turnover: TurnoverParams = TurnoverParams()
    phase_diagram: PhaseDiagramParams = Field(PhaseDiagramParams(), alias="phase-diagram")
    optimal: OptimalParams = OptimalParams()
    scaling: ScalingParams = ScalingParams()
    collapse: CollapseParams = CollapseParams()
    osee: OseeParams = OseeParams()

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    def section(self) -> BaseModel:
        return getattr(self, self.experiment.replace("-", "_"))


DEFAULT_MODEL = {"system": "resonant_level", "n_modes": 128, "temperature": 1.0 / 40.0, "bias": 0.5}


def default_document(experiment: str) -> dict[str, Any]:
    return {"experiment": experiment, "model": dict(DEFAULT_MODEL)}


def load_document(path: str | Path) -> dict[str, Any]:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: top level must be a JSON object")
    return doc


def apply_override(doc: dict[str, Any], assignment: str) -> None:
    """Set a dotted path from ``key=value``; the value is parsed as JSON when possible."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ValueError(f"override '{assignment}' is not of the form key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = doc
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ValueError(f"override '{key}': '{part}' is not a section")
        node = child
    node[parts[-1]] = value


def build_config(
    experiment: str,
    path: str | Path | None = None,
    overrides: tuple[str, ...] = (),
    out: str | None = None,
    workers: int | None = None,
) -> RunConfig:
    doc = load_document(path) if path else default_document(experiment)
    doc["experiment"] = experiment
    for item in overrides:
        apply_override(doc, item)
    if out is not None:
        doc["out"] = out
    if workers is not None:
        doc["workers"] = workers
    return RunConfig.model_validate(doc)
