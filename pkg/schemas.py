"""Pydantic models for every JSON document the lab reads or writes."""

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config import config
from errors import ConfigurationError

EXPERIMENTS = ("ground-state", "evolve", "stability", "instability",
               "scaling-law", "identities", "inequalities", "second-moment")

ExperimentName = Literal["ground-state", "evolve", "stability", "instability",
                         "scaling-law", "identities", "inequalities", "second-moment"]
IndexName = Literal["d2", "2pm1", "0m1"]


class FunctionalRecord(BaseModel):
    """Flat record of the scalar functionals of one phase-space point."""

    mass: float
    kinetic: float
    potential: float
    S: float
    E: float
    C: float
    L: float
    K_d2: float
    K_2pm1: float
    K_0m1: float
    T_d2: Optional[float] = None
    T_2pm1: Optional[float] = None
    T_0m1: Optional[float] = None

    def consistent(self, params, tol: float = 1e-12) -> bool:
        """Recompute K and T from the three norms and compare."""
        from functionals import recompute_record_fields

        scale = max(self.mass + self.kinetic + self.potential, 1e-300)
        for key, value in recompute_record_fields(self, params).items():
            stored = getattr(self, key)
            if (value is None) != (stored is None):
                return False
            if value is not None and abs(value - stored) > tol * scale:
                return False
        return True


class Verdict(BaseModel):
    kind: Literal["GlobalBounded", "BlowUp", "Undecided"]
    t_star: Optional[float] = None
    trigger: Optional[Literal["h1_factor", "amplitude", "non_finite"]] = None
    sup_h1: Optional[float] = None
    t_end: Optional[float] = None

    @model_validator(mode="after")
    def _blowup_has_trigger(self):
        if self.kind == "BlowUp" and (self.trigger is None or self.t_star is None):
            raise ValueError("BlowUp verdict requires trigger and t_star")
        if self.kind != "BlowUp" and self.trigger is not None:
            raise ValueError("only BlowUp verdicts carry a trigger")
        return self


class CheckResult(BaseModel):
    name: str
    status: Literal["pass", "fail", "info"]
    worst_t: Optional[float] = None
    worst_value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: Optional[str] = None

    @classmethod
    def bound(cls, name: str, value: float, tolerance: float, worst_t: Optional[float] = None,
              detail: Optional[str] = None) -> "CheckResult":
        """Pass when value ≤ tolerance."""
        status = "pass" if value <= tolerance else "fail"
        return cls(name=name, status=status, worst_t=worst_t, worst_value=float(value),
                   tolerance=tolerance, detail=detail)


class AuditReport(BaseModel):
    name: str
    checks: List[CheckResult] = Field(default_factory=list)
    constants: Dict[str, Optional[float]] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


class ExperimentReport(BaseModel):
    experiment: str
    exercises: str
    params: Dict[str, Any] = Field(default_factory=dict)
    tolerances: Dict[str, float] = Field(default_factory=dict)
    conditional_regime: bool = False
    checks: List[CheckResult] = Field(default_factory=list)
    runs: List[Dict[str, Any]] = Field(default_factory=list)
    audits: List[AuditReport] = Field(default_factory=list)
    constants: Dict[str, Optional[float]] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
    retried: bool = False

    @property
    def passed(self) -> bool:
        return (all(c.status != "fail" for c in self.checks)
                and all(a.passed for a in self.audits))

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.model_dump_json(indent=2))


class ParamsBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = 3
    p: float = 3.0
    gamma: float = 1.0
    omega: Union[float, Literal["omega_c"]] = 0.0


class GridBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r_max: float = Field(default_factory=lambda: config.R_MAX, gt=0)
    n: int = Field(default_factory=lambda: config.N, ge=16)


class EvolutionBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    t_end: float = Field(default_factory=lambda: config.T_END, gt=0)
    cfl: float = Field(default_factory=lambda: config.CFL, gt=0, lt=1)
    sample_spacing: float = Field(default_factory=lambda: config.SAMPLE_SPACING, gt=0)
    blowup_h1_factor: float = Field(default_factory=lambda: config.BLOWUP_H1_FACTOR, gt=1)
    blowup_amp: float = Field(default_factory=lambda: config.BLOWUP_AMP, gt=0)
    growth_factor: float = Field(default_factory=lambda: config.GROWTH_FACTOR, gt=1)


class SweepBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambdas: List[float] = Field(default_factory=lambda: [1.05])
    deltas: List[float] = Field(default_factory=lambda: [1e-2])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    omegas: List[float] = Field(default_factory=lambda: [0.0, 0.2, 0.5, 0.8])
    radii: List[float] = Field(default_factory=lambda: [5.0, 10.0])
    indices: List[IndexName] = Field(default_factory=lambda: ["d2", "2pm1", "0m1"])
    epsilon: float = 5e-2
    corpus_size: int = 100


class ExperimentConfig(BaseModel):
    """Complete, schema-validated description of one experiment."""

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    params: ParamsBlock = Field(default_factory=ParamsBlock)
    grid: GridBlock = Field(default_factory=GridBlock)
    evolution: EvolutionBlock = Field(default_factory=EvolutionBlock)
    sweep: SweepBlock = Field(default_factory=SweepBlock)
    out_dir: str = Field(default_factory=lambda: config.OUT_DIR)
    seed: int = Field(default_factory=lambda: config.SEED)
    method: Literal["shoot", "minimize"] = "shoot"
    index: IndexName = "0m1"
    workers: int = Field(default_factory=lambda: config.WORKERS, ge=1)

    @classmethod
    def load(cls, experiment: Optional[str] = None, path: Optional[Union[str, Path]] = None,
             overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        """Build a config with precedence override > file > environment defaults."""
        data: Dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as e:
                raise ConfigurationError(f"cannot read config {path}: {e}") from e
        if experiment is not None:
            data["experiment"] = experiment
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            target = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                target = target.setdefault(key, {})
            target[leaf] = value
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(str(e)) from e

    def key(self) -> str:
        return self.model_dump_json()


class GridMeta(BaseModel):
    d: int
    h: float
    r_max: float
    n: int


class GroundStateMeta(BaseModel):
    params: Dict[str, Any]
    amplitude: float
    residual: float
    truncation_residual: Optional[float] = None
    r_level: float
    method: str
    grid: GridMeta
    tolerances: Dict[str, float] = Field(default_factory=dict)
    checks: Dict[str, Any] = Field(default_factory=dict)
