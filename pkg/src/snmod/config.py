"""Strict JSON configuration documents.

Unknown keys are rejected everywhere. ``--set key.path=value`` overrides are
applied to the raw document before validation.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, DomainError
from .params import (
    G_NEWTON,
    HBAR,
    K_B,
    InitialConditions,
    ModulationSchedule,
    PhysicalParams,
)
from .states import CovarianceState, MeanState

_STRICT = ConfigDict(extra="forbid")


class ParamsModel(BaseModel):
    model_config = _STRICT

    M: float = Field(description="oscillator mass [kg]")
    omega: float = Field(description="trap angular frequency [rad/s]")
    gamma_m: float = Field(0.0, description="damping rate [1/s]")
    T_bath: float = Field(0.0, description="bath temperature [K]")
    m_atom: Optional[float] = Field(None, description="constituent atomic mass [kg]")
    delta_x_zp: Optional[float] = Field(None, description="lattice zero-point spread [m]")
    omega_sn: Optional[float] = Field(
        None, description="self-gravity frequency [rad/s]; derived from m_atom, delta_x_zp if absent"
    )
    hbar: Optional[float] = Field(None, description="reduced Planck constant [J s]; 1 in dimensionless mode")
    k_B: Optional[float] = Field(None, description="Boltzmann constant [J/K]; 1 in dimensionless mode")
    G_newton: float = Field(G_NEWTON, description="gravitational constant [m^3/(kg s^2)]")
    unit_mode: Literal["SI", "dimensionless"] = Field("SI", description="SI or dimensionless (hbar=M=omega=1)")

    @model_validator(mode="after")
    def _sn_source(self):
        if self.omega_sn is None:
            missing = [n for n in ("m_atom", "delta_x_zp") if getattr(self, n) is None]
            if missing:
                raise ValueError(
                    "omega_sn cannot be determined: give omega_sn or both m_atom and delta_x_zp "
                    f"(missing: {', '.join(['omega_sn'] + missing)})"
                )
        return self

    def build(self) -> PhysicalParams:
        dimless = self.unit_mode == "dimensionless"
        hbar = self.hbar if self.hbar is not None else (1.0 if dimless else HBAR)
        k_B = self.k_B if self.k_B is not None else (1.0 if dimless else K_B)
        return PhysicalParams(
            M=self.M, omega=self.omega, gamma_m=self.gamma_m, T_bath=self.T_bath,
            m_atom=self.m_atom, delta_x_zp=self.delta_x_zp, omega_sn=self.omega_sn,
            hbar=hbar, k_B=k_B, G_newton=self.G_newton, unit_mode=self.unit_mode,
        )


class ScheduleModel(BaseModel):
    model_config = _STRICT

    alpha: float = Field(description="phase per segment [rad]")
    beta: float = Field(description="ratio of second to first trap frequency [-]")


class CovModel(BaseModel):
    model_config = _STRICT

    v_xx: float = Field(description="position variance [m^2]")
    v_xp: float = Field(description="symmetrised covariance [kg m^2/s]")
    v_pp: float = Field(description="momentum variance [kg^2 m^2/s^2]")


class InitialModel(BaseModel):
    model_config = _STRICT

    mean0: tuple[float, float] = Field((0.0, 0.0), description="initial mean [m, kg m/s]")
    cov0: Optional[CovModel] = Field(None, description="initial covariance; ground state if absent")
    trap_halfwidth: float = Field(1e-3, description="trap half-width [m]")

    def build(self) -> InitialConditions:
        cov = None if self.cov0 is None else CovarianceState(self.cov0.v_xx, self.cov0.v_xp, self.cov0.v_pp)
        return InitialConditions(MeanState(*self.mean0), cov, self.trap_halfwidth)


class RunModel(BaseModel):
    model_config = _STRICT

    output: Optional[str] = Field(None, description="output path prefix; files get .csv/.json suffixes")
    n_cycles: Optional[int] = Field(None, ge=0, description="modulation periods to simulate [-]")
    t_end: Optional[float] = Field(None, ge=0, description="horizon, used when n_cycles is absent [s]")
    substeps: int = Field(64, ge=1, description="samples per segment [-]")
    f_terms: Optional[Literal["exact", "neglected"]] = Field(
        None, description="noise-induced F terms: exact or neglected (command default if absent)"
    )
    alpha_range: tuple[float, float] = Field((0.05, 3.141592653589793), description="map alpha range [rad]")
    beta_range: tuple[float, float] = Field((0.25, 4.0), description="map beta range [-]")
    resolution: int = Field(400, ge=1, description="map cells per axis [-]")
    map_omega_sn: Optional[float] = Field(None, description="map self-gravity frequency [rad/s]; params value if absent")
    map_gamma: Optional[float] = Field(None, description="map damping for the damped variants [1/s]; params value if absent")
    alpha_scan: Optional[list[float]] = Field(None, description="alpha values for asymptotic-delta scans [rad]")
    n_trajectories: int = Field(10000, ge=100, description="Monte Carlo trajectories [-]")
    dt: Optional[float] = Field(None, gt=0, description="Monte Carlo step bound [s]; min(t1,t2)/2000 if absent")
    seed: int = Field(0, ge=0, description="Monte Carlo seed [-]")
    outputs_per_segment: int = Field(8, ge=1, description="Monte Carlo outputs per segment [-]")
    t_max: float = Field(60.0, gt=0, description="trap-exit search horizon [s]")


class RunConfig(BaseModel):
    model_config = _STRICT

    params: ParamsModel
    schedule: Optional[ScheduleModel] = None
    initial: InitialModel = InitialModel()
    run: RunModel = RunModel()


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``key.path=value`` strings; values are parsed as JSON when possible."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.strip().split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {p!r} is not an object")
        node[parts[-1]] = value
    return doc


def parse_config(doc: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    try:
        cfg.params.build()
        cfg.initial.build()
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path=None, overrides=None) -> RunConfig:
    doc = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(apply_overrides(doc, overrides))


def load_params(path) -> PhysicalParams:
    """Parameters from a JSON document holding exactly the parameter fields."""
    try:
        doc = json.loads(Path(path).read_text())
        return ParamsModel.model_validate(doc).build()
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from None
    except DomainError as exc:
        raise ConfigError(str(exc)) from None


def schedule_from(cfg: RunConfig, params: PhysicalParams) -> ModulationSchedule:
    if cfg.schedule is None:
        raise ConfigError("schedule: field required for this command")
    try:
        return ModulationSchedule.for_params(cfg.schedule.alpha, cfg.schedule.beta, params)
    except DomainError as exc:
        raise ConfigError(f"schedule: {exc}") from None


def describe_keys() -> str:
    """One line per configuration key with its unit, for ``--help``."""
    lines = []
    for section, model in (
        ("params", ParamsModel),
        ("schedule", ScheduleModel),
        ("initial", InitialModel),
        ("initial.cov0", CovModel),
        ("run", RunModel),
    ):
        for name, f in model.model_fields.items():
            lines.append(f"  {section}.{name}: {f.description}")
    return "\n".join(lines)
