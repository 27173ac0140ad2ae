"""Run configuration: one structured YAML file describing a whole run.

The same models validate service request payloads, so a config file and a
request body are interchangeable.  ``normalize_config`` re-emits a config
with every default made explicit; loading the normalized form yields an
identical model, which keeps runs self-documenting.
"""

from __future__ import annotations

from typing import Annotated, Literal, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError

__all__ = [
    "LinearControllerConfig",
    "CanonicalControllerConfig",
    "LinearPlantConfig",
    "PolynomialPlantConfig",
    "ReferenceConfig",
    "FixedPointConfig",
    "CryptoConfig",
    "RunSettings",
    "RunConfig",
    "load_config",
    "parse_config",
    "normalize_config",
]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LinearControllerConfig(_Model):
    type: Literal["linear"] = "linear"
    A: list[list[float]]
    B: list[list[float]]
    C: list[float]
    D: list[float] | None = None
    x0: list[float] | None = None


class CanonicalControllerConfig(_Model):
    """Triangular canonical form; one state equation per line group."""

    type: Literal["canonical"] = "canonical"
    p: int = 1
    equations: list[str]
    z0: list[float] | None = None
    feedthrough: list[float] | None = None
    monomial_budget: int = 20000

    @field_validator("equations")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("need at least one state equation")
        return v


ControllerConfig = Annotated[
    Union[LinearControllerConfig, CanonicalControllerConfig],
    Field(discriminator="type"),
]


class LinearPlantConfig(_Model):
    type: Literal["linear"] = "linear"
    A: list[list[float]]
    B: list[float]
    C: list[list[float]]
    x0: list[float]


class PolynomialPlantConfig(_Model):
    type: Literal["polynomial"] = "polynomial"
    state: list[str]
    output: list[str]
    x0: list[float]


PlantConfig = Annotated[
    Union[LinearPlantConfig, PolynomialPlantConfig],
    Field(discriminator="type"),
]


class ReferenceConfig(_Model):
    kind: Literal["zero", "constant", "step", "sine"] = "zero"
    amplitude: float = 0.0
    period: float = 100.0
    step_at: int = 0


class FixedPointConfig(_Model):
    r: float
    M: float
    s: float | None = None


class CryptoConfig(_Model):
    backend: Literal["lwe", "leveled"] = "lwe"
    n: int = 128
    plaintext_modulus: int | Literal["auto"] = "auto"
    noise_bound: int = 16
    depth_cap: int = 1
    seed: int | str = 0
    allow_uncertified: bool = False


class RunSettings(_Model):
    mode: Literal["nominal", "quantized", "encrypted"] = "encrypted"
    steps: int = 1000
    timing: bool = False
    assert_exact: bool = False


class RunConfig(_Model):
    controller: ControllerConfig
    plant: PlantConfig
    fixedpoint: FixedPointConfig
    reference: ReferenceConfig = ReferenceConfig()
    crypto: CryptoConfig = CryptoConfig()
    run: RunSettings = RunSettings()


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(str(err)) from err


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot load config {path}: {err}") from err
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return parse_config(data)


def normalize_config(cfg: RunConfig) -> str:
    """YAML with every default explicit; reloading reproduces the model."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=True)
