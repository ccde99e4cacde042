"""Run configuration schema (YAML or JSON) and its translation to runtime objects."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .costs import ConeLimit, Power, QuadraticLimit, Relativistic
from .energies import Entropy, Indicator, PowerEnergy, doubly_nonlinear_energy
from .grid import GridSpec
from .jko import EvolutionConfig, InitialCondition
from .pd import PDConfig


class ConfigError(ValueError):
    """Unreadable or invalid run configuration."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSection(_Strict):
    d: int = Field(1, ge=1)
    a: list[float]
    b: list[float]
    n: list[int]

    @model_validator(mode="after")
    def _lengths(self):
        if not (len(self.a) == len(self.b) == len(self.n) == self.d):
            raise ValueError("grid.a, grid.b and grid.n must all have length grid.d")
        if any(lo >= hi for lo, hi in zip(self.a, self.b)):
            raise ValueError("grid needs a < b on every axis")
        if any(k < 2 for k in self.n):
            raise ValueError("grid needs at least 2 cells per axis")
        return self


class PowerCost(_Strict):
    variant: Literal["power"]
    q: float = Field(gt=1)


class RelativisticCost(_Strict):
    variant: Literal["relativistic"]
    alpha: float = Field(gt=0)
    k: float = Field(gt=0)


class ConeCost(_Strict):
    variant: Literal["cone"]
    k: float = Field(gt=0)


class QuadraticCost(_Strict):
    variant: Literal["quadratic"]
    alpha: float = Field(gt=0)


CostSection = Union[PowerCost, RelativisticCost, ConeCost, QuadraticCost]


class MP(_Strict):
    m: float = Field(gt=0)
    p: float = Field(gt=1)


class EnergySection(_Strict):
    variant: Literal["entropy", "power", "indicator", "m_p"]
    eta: float | None = None
    kappa: float = Field(1.0, gt=0)
    m_p: MP | None = None

    @model_validator(mode="after")
    def _fields(self):
        if self.variant == "power" and self.eta is None:
            raise ValueError("energy.variant 'power' needs energy.eta")
        if self.variant == "m_p" and self.m_p is None:
            raise ValueError("energy.variant 'm_p' needs energy.m_p {m, p}")
        return self


class SchemeSection(_Strict):
    algorithm: Literal["yan", "condat-vu"] = "yan"
    formulation: Literal["joint", "separate"] = "joint"
    sigma: float | Literal["auto"] = "auto"
    # ``lambda`` is a keyword, so the field carries an alias
    lam: float | Literal["auto"] = Field("auto", alias="lambda")
    lam_rule: Literal["balanced", "capped"] = "capped"
    lam_cap: float = Field(1.0, gt=0)
    lam_scale: float = Field(1.0, gt=0)
    tol: float = Field(1e-6, gt=0)
    tol_feas: float = Field(1e-2, ge=0)
    max_iter: int = Field(50_000, ge=1)
    delta: float | Literal["auto"] = "auto"
    warm_start: bool = True
    dual_init: Literal["zero", "energy"] = "zero"
    rho_floor: float = Field(1e-10, gt=0)
    lipschitz_floor: float | None = Field(None, gt=0)
    boundary_continuity: bool = True
    compare_cold: bool = False

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @field_validator("sigma", "lam", "delta")
    @classmethod
    def _positive(cls, v):
        if v != "auto" and not v >= 0:
            raise ValueError("must be 'auto' or a nonnegative number")
        return v


class TimeSection(_Strict):
    T: float = Field(gt=0)
    schedule: list[tuple[float, float]]
    snapshots: list[float] = Field(default_factory=list)


class InitialSection(_Strict):
    family: Literal["constant", "gaussian", "tanh", "barenblatt", "two_bump", "two_hump"]
    params: dict[str, Any] = Field(default_factory=dict)
    renormalize: bool = False


class OutputSection(_Strict):
    dir: str = "out"
    precision: int = Field(17, ge=1, le=17)


class RunConfig(_Strict):
    grid: GridSection
    cost: CostSection = Field(discriminator="variant")
    energy: EnergySection
    scheme: SchemeSection = Field(default_factory=SchemeSection)
    time: TimeSection
    initial: InitialSection
    output: OutputSection = Field(default_factory=OutputSection)

    def echo(self) -> dict:
        """Plain-data copy that re-parses to an equal config."""
        return self.model_dump(mode="json", by_alias=True)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        lines = [f"  {'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()]
        raise ConfigError("invalid run configuration:\n" + "\n".join(lines)) from None


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML (or JSON) run configuration."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return parse_config(data)


def build_cost(sec):
    if sec.variant == "power":
        return Power(sec.q)
    if sec.variant == "relativistic":
        return Relativistic(sec.alpha, sec.k)
    if sec.variant == "cone":
        return ConeLimit(sec.k)
    return QuadraticLimit(sec.alpha)


def build_energy(sec: EnergySection):
    if sec.variant == "entropy":
        return Entropy(sec.kappa)
    if sec.variant == "power":
        return PowerEnergy(sec.eta, sec.kappa)
    if sec.variant == "indicator":
        return Indicator()
    return doubly_nonlinear_energy(sec.m_p.m, sec.m_p.p)


def build_pd(sec: SchemeSection, seed: int = 0) -> PDConfig:
    return PDConfig(
        algorithm=sec.algorithm, formulation=sec.formulation,
        sigma=None if sec.sigma == "auto" else float(sec.sigma),
        lam=None if sec.lam == "auto" else float(sec.lam),
        tol=sec.tol, tol_feas=sec.tol_feas, max_iter=sec.max_iter, warm_start=sec.warm_start,
        rho_floor=sec.rho_floor, lam_rule=sec.lam_rule, lam_cap=sec.lam_cap,
        lam_scale=sec.lam_scale, seed=seed, dual_init=sec.dual_init,
        lipschitz_floor=sec.lipschitz_floor)


def to_evolution(cfg: RunConfig, seed: int = 0) -> EvolutionConfig:
    """Runtime configuration for :func:`gradflow.jko.run_evolution`."""
    g = cfg.grid
    grid = GridSpec(tuple(g.a), tuple(g.b), tuple(g.n))
    sch = cfg.scheme
    return EvolutionConfig(
        grid=grid, cost=build_cost(cfg.cost), energy=build_energy(cfg.energy),
        initial=InitialCondition(cfg.initial.family, dict(cfg.initial.params), cfg.initial.renormalize),
        T=cfg.time.T, schedule=tuple((float(u), float(d)) for u, d in cfg.time.schedule),
        pd=build_pd(sch, seed), snapshots=tuple(cfg.time.snapshots),
        delta=None if sch.delta == "auto" else float(sch.delta),
        boundary_continuity=sch.boundary_continuity, compare_cold=sch.compare_cold)
