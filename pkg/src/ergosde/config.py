"""Experiment configuration: one flat JSON object per experiment.

Unknown keys are rejected by name; defaults are filled in on load.  See
``configs/`` for complete examples.
"""

import hashlib
import json
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

MODELS = ("ou", "double_well", "gradient2d")


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # model
    model: Literal["ou", "double_well", "gradient2d"]
    theta: Optional[float] = Field(None, gt=0)
    sigma: Union[float, List[List[float]]] = 1.4142135623730951
    dim: int = Field(1, ge=1)
    x0: Optional[List[float]] = None

    # integrator and training data
    delta: float = Field(0.01, gt=0)
    n_steps: int = Field(100_000, ge=2)
    burn_in: Optional[int] = Field(None, ge=0)
    stride: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)

    # estimator
    estimator: Literal["spectral", "rff"] = "spectral"
    kernel: Literal["constant", "poly1", "rbf"] = "poly1"
    bandwidth: float = Field(1.0, gt=0)
    offset: float = Field(1.0, gt=0)
    M: Optional[int] = Field(None, ge=1)
    D: Optional[float] = Field(None, ge=1)
    ridge: float = Field(0.0, ge=0)
    extension: Literal["zero", "linear"] = "zero"
    benchmark: bool = True

    # statistics
    observables: List[str] = ["x0", "x0^2"]
    max_lag: int = Field(50, ge=0)
    sim_delta: Optional[float] = Field(None, gt=0)
    sim_n_steps: Optional[int] = Field(None, ge=2)
    ensemble: bool = False

    # sweep
    family: Optional[Literal["shift", "damp"]] = None
    eps_grid: Optional[List[float]] = None
    sweep_observable: str = "x0"
    sweep_lag_observables: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.model == "ou" and self.theta is None:
            raise ValueError("model 'ou' requires 'theta'")
        if self.burn_in is not None and self.burn_in >= self.n_steps:
            raise ValueError("burn_in must be smaller than n_steps")
        if self.eps_grid is not None:
            g = self.eps_grid
            if not g or any(e <= 0 for e in g) or any(b <= a for a, b in zip(g, g[1:])):
                raise ValueError("eps_grid must be positive and strictly increasing")
        if self.family is not None and self.model != "ou":
            raise ValueError("perturbation families are defined for model 'ou' only")
        return self

    # resolved values ---------------------------------------------------------

    @property
    def burn_in_steps(self):
        return self.n_steps // 10 if self.burn_in is None else self.burn_in

    @property
    def order(self):
        if self.M is not None:
            return self.M
        return 2 if self.estimator == "spectral" else 32

    @property
    def model_params(self):
        p = {"sigma": self.sigma}
        if self.model == "ou":
            p.update(theta=self.theta, d=self.dim)
        return p

    def kernel_params(self):
        return {"rbf": {"bandwidth": self.bandwidth}, "poly1": {"offset": self.offset}, "constant": {}}[self.kernel]

    def canonical_json(self):
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _describe(err):
    msgs = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "config"
        if e["type"] == "extra_forbidden":
            msgs.append(f"unknown key '{loc}'")
        elif e["type"] == "missing":
            msgs.append(f"missing required key '{loc}'")
        else:
            msgs.append(f"{loc}: {e['msg']}")
    return "; ".join(msgs)


def config_from_dict(data, **overrides):
    data = dict(data)
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**data)
    except ValidationError as err:
        raise ConfigError(_describe(err)) from None


def parse_config(path, **overrides):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return config_from_dict(data, **overrides)
