"""Run configuration: pydantic schema, parsing and canonical hashing."""

import hashlib
import json
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainConfig(_Strict):
    kind: Literal["torus", "patch"] = "torus"
    n: Literal[1, 2] = 1
    N: int = Field(64, ge=8, le=1024, description="sites per real axis")
    extent: float = Field(1.0, gt=0, description="torus side length or patch span")


class QConfig(_Strict):
    kind: Literal["constant", "linear"] = "constant"
    value: Union[float, List[float]] = 1.0

    @field_validator("value")
    @classmethod
    def _pair(cls, v):
        if isinstance(v, list) and len(v) != 2:
            raise ValueError("complex values are written as [re, im]")
        return v

    @property
    def complex_value(self):
        return complex(*self.value) if isinstance(self.value, list) else complex(self.value)


class HiggsConfig(_Strict):
    preset: Literal["diagonal", "hitchin-section", "custom-dump"] = "diagonal"
    rank: int = Field(2, ge=2, le=4)
    eigenvalues: Optional[List[float]] = None
    q: QConfig = Field(default_factory=QConfig)
    path: Optional[str] = None

    @model_validator(mode="after")
    def _preset_params(self):
        if self.preset == "hitchin-section" and self.rank != 2:
            raise ValueError("hitchin-section is a rank-two preset")
        if self.preset == "custom-dump" and not self.path:
            raise ValueError("custom-dump needs a path")
        if self.preset == "diagonal":
            if self.eigenvalues is None:
                self.eigenvalues = [float(self.rank - 1 - 2 * i) for i in range(self.rank)]
            if len(self.eigenvalues) != self.rank:
                raise ValueError("need one eigenvalue per rank")
        return self


class SolverConfig(_Strict):
    step: float = Field(1.0, gt=0, le=1.0)
    tol: Optional[float] = Field(None, gt=0)
    max_iter: int = Field(500, ge=1)
    sl_mode: bool = False
    boundary: Literal["decoupled", "identity"] = "decoupled"
    init: Literal["auto", "identity", "decoupled"] = "auto"
    init_perturbation: float = Field(0.0, ge=0, le=1.0)
    refresh: int = Field(20, ge=1)


class ExperimentConfig(_Strict):
    t_list: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0, 8.0])
    probes: Optional[List[List[float]]] = None
    tolerances: dict = Field(default_factory=lambda: {"energy": 1e-8, "kappa": 1e-10, "z2": 1e-8})
    sl2: bool = False

    @field_validator("t_list")
    @classmethod
    def _increasing(cls, v):
        if any(t <= 0 for t in v):
            raise ValueError("scale parameters must be positive")
        if any(b <= a for a, b in zip(v[:-1], v[1:])):
            raise ValueError("must be strictly increasing")
        return v


class RunConfig(_Strict):
    domain: DomainConfig = Field(default_factory=DomainConfig)
    higgs: HiggsConfig = Field(default_factory=HiggsConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    experiment: ExperimentConfig = Field(default_factory=ExperimentConfig)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _default_probes(self):
        if self.experiment.probes is None:
            pad = [0.0] * (2 * self.domain.n - 1)
            self.experiment.probes = [[r] + pad for r in (0.2, 0.3, 0.4)]
        return self

    def canonical_json(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def digest(self):
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _cross_check(cfg):
    if cfg.experiment.sl2 and cfg.higgs.rank != 2:
        raise ConfigError("higgs.rank", "sl2 experiments need rank 2")
    for i, p in enumerate(cfg.experiment.probes):
        if len(p) != 2 * cfg.domain.n:
            raise ConfigError(f"experiment.probes.{i}", f"need {2 * cfg.domain.n} coordinates")


def validate_config(data):
    """Validate a config mapping; raise :class:`ConfigError` with a dotted field path."""
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = ".".join(str(x) for x in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        raise ConfigError(path, msg) from None
    _cross_check(cfg)
    return cfg


def parse_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError("", f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"{path}: malformed JSON ({exc.msg}, line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError("", f"{path}: top level must be an object")
    return validate_config(data)
