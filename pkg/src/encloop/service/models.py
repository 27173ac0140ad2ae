"""Request/response schemas for the service endpoints.

Large integers (plaintext bounds, moduli) travel as strings: they routinely
exceed the 2^53 range that survives JSON number round-trips.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict

from ..config import RunConfig

Status = Literal["ok", "certification_failed", "runtime_failure"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ErrorInfo(_Model):
    kind: str
    message: str
    step: int | None = None


class ConversionOut(_Model):
    controller_kind: str
    n_states: int
    n_prime: int
    dropped_states: int
    m: int
    p: int
    cond_T: float | None
    warnings: list[str]
    realization: str
    u_init: list[float]
    y_init: list[list[float]]
    current_input: bool
    encoded: str
    L: float
    r: float
    s: float
    M: float
    d_max: int
    input_box: int
    plaintext_bound: str
    required_modulus: str
    error_bound: float
    capability_required: str


class CertificationOut(_Model):
    ok: bool
    backend: str
    configured_modulus: str
    required_modulus: str
    plaintext_ok: bool
    plaintext_margin_bits: float
    capability_required: str
    capability_offered: str
    capability_ok: bool
    noise_ok: bool | None
    noise_worst: str | None
    noise_margin_bits: float | None
    messages: list[str]


class ConvertRequest(_Model):
    config: RunConfig


class ConvertResponse(_Model):
    status: Status
    conversion: ConversionOut
    certification: CertificationOut
    normalized_config: str


class CertifyRequest(_Model):
    config: RunConfig


class CertifyResponse(_Model):
    status: Status
    conversion: ConversionOut
    certification: CertificationOut


class SimulateRequest(_Model):
    config: RunConfig
    mode: Literal["nominal", "quantized", "encrypted"] | None = None
    steps: int | None = None
    seed: int | str | None = None
    assert_exact: bool | None = None
    timing: bool | None = None
    include_trace: bool = True


class SimulateResponse(_Model):
    status: Status
    conversion: ConversionOut
    certification: CertificationOut
    summary: dict | None = None
    trace_csv: str | None = None
    error: ErrorInfo | None = None


class SweepRequest(_Model):
    config: RunConfig
    r_values: list[float]
    steps: int | None = None
    mode: Literal["quantized", "encrypted"] = "quantized"


class SweepRowOut(_Model):
    r: float
    s: float
    max_abs_err: float | None
    status: Literal["ok", "aborted"]
    abort_step: int | None = None
    reason: str | None = None


class SweepResponse(_Model):
    status: Status
    conversion: ConversionOut
    certification: CertificationOut
    rows: list[SweepRowOut]
    csv: str


class CompareRequest(_Model):
    trace_csv_a: str
    trace_csv_b: str
    channel: str = "u"


class CompareResponse(_Model):
    status: Status
    channel: str
    steps: int
    max_abs_err: float
    argmax_step: int
