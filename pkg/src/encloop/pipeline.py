"""End-to-end orchestration: config -> realization -> encoding -> certified run.

The conversion chain is: reduce the controller to its observable canonical
form (linear) or validate the supplied canonical form (polynomial), extract
the input-output recursion, encode it over integers, size the plaintext
modulus, and certify the parameter set (plaintext range, backend capability,
worst-case evaluation noise) before anything is allowed to run encrypted.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .capability import Capability
from .config import (
    CanonicalControllerConfig,
    LinearControllerConfig,
    LinearPlantConfig,
    PolynomialPlantConfig,
    RunConfig,
)
from .errors import CertificationFailure, ConfigError
from .fixedpoint import (
    FixedPointParams,
    encode_polynomial,
    format_polynomial,
    parse_plant_polynomial,
    parse_state_polynomial,
    required_plaintext_modulus,
)
from .homcrypt import LeveledBackend, LweBackend, LweParams, certify_noise
from .realization import (
    CanonicalSystem,
    LinearController,
    back_substitute,
    io_coefficients,
    observable_decomposition,
)
from .simloop import (
    LinearPlant,
    LoopSpec,
    PolynomialPlant,
    Reference,
    Trace,
    simulate,
    sweep,
)

__all__ = [
    "ConversionReport",
    "CertificationReport",
    "BuiltLoop",
    "build_loop",
    "run_simulation",
    "run_sweep",
    "coerce_seed_int",
    "next_pow2",
]


def next_pow2(n: int) -> int:
    return 1 << (max(int(n), 2) - 1).bit_length()


def coerce_seed_int(seed) -> int:
    """Config seeds may be ints, decimal/hex strings or phrases; normalize."""
    if isinstance(seed, int):
        return seed
    text = str(seed)
    try:
        return int(text, 10)
    except ValueError:
        pass
    try:
        return int.from_bytes(bytes.fromhex(text), "little")
    except ValueError:
        return int.from_bytes(hashlib.sha256(text.encode()).digest(), "little")


@dataclass
class ConversionReport:
    """What the realization and encoding stages produced."""

    controller_kind: str
    n_states: int
    n_prime: int
    dropped_states: int
    m: int
    p: int
    cond_T: float | None
    warnings: list
    realization_text: str
    u_init: list
    y_init: list
    current_input: bool
    encoded_text: str
    L: float
    r: float
    s: float
    M: float
    d_max: int
    input_box: int
    plaintext_bound: int
    required_modulus: int
    error_bound: float
    capability_required: str

    def to_dict(self) -> dict:
        return {
            "controller_kind": self.controller_kind,
            "n_states": self.n_states,
            "n_prime": self.n_prime,
            "dropped_states": self.dropped_states,
            "m": self.m,
            "p": self.p,
            "cond_T": self.cond_T,
            "warnings": list(self.warnings),
            "realization": self.realization_text,
            "u_init": list(self.u_init),
            "y_init": [list(v) for v in self.y_init],
            "current_input": self.current_input,
            "encoded": self.encoded_text,
            "L": self.L,
            "r": self.r,
            "s": self.s,
            "M": self.M,
            "d_max": self.d_max,
            "input_box": self.input_box,
            "plaintext_bound": str(self.plaintext_bound),
            "required_modulus": str(self.required_modulus),
            "error_bound": self.error_bound,
            "capability_required": self.capability_required,
        }


@dataclass
class CertificationReport:
    """Pre-deployment verdict for the configured parameter set."""

    ok: bool
    backend: str
    configured_modulus: int
    required_modulus: int
    plaintext_ok: bool
    plaintext_margin_bits: float
    capability_required: str
    capability_offered: str
    capability_ok: bool
    noise_ok: bool | None = None
    noise_worst: int | None = None
    noise_margin_bits: float | None = None
    messages: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "backend": self.backend,
            "configured_modulus": str(self.configured_modulus),
            "required_modulus": str(self.required_modulus),
            "plaintext_ok": self.plaintext_ok,
            "plaintext_margin_bits": self.plaintext_margin_bits,
            "capability_required": self.capability_required,
            "capability_offered": self.capability_offered,
            "capability_ok": self.capability_ok,
            "noise_ok": self.noise_ok,
            "noise_worst": None if self.noise_worst is None else str(self.noise_worst),
            "noise_margin_bits": self.noise_margin_bits,
            "messages": list(self.messages),
        }


@dataclass
class BuiltLoop:
    spec: LoopSpec
    conversion: ConversionReport
    certification: CertificationReport
    backend_kind: str
    seed_int: int


def _realize(cfg: RunConfig):
    ctrl_cfg = cfg.controller
    if isinstance(ctrl_cfg, LinearControllerConfig):
        ctrl = LinearController(
            A=ctrl_cfg.A, B=ctrl_cfg.B, C=ctrl_cfg.C, x0=ctrl_cfg.x0, D=ctrl_cfg.D
        )
        dec = observable_decomposition(ctrl)
        io = io_coefficients(dec)
        return io, {
            "kind": "linear",
            "n_states": ctrl.n,
            "n_prime": dec.n_prime,
            "cond_T": dec.cond_T,
            "warnings": list(dec.warnings),
        }
    assert isinstance(ctrl_cfg, CanonicalControllerConfig)
    g_list = [parse_state_polynomial(eq) for eq in ctrl_cfg.equations]
    n_prime = len(g_list)
    z0 = ctrl_cfg.z0 if ctrl_cfg.z0 is not None else [0.0] * n_prime
    sys = CanonicalSystem(
        n_prime=n_prime,
        p=ctrl_cfg.p,
        g_list=g_list,
        z0=np.asarray(z0, dtype=float),
        feedthrough=ctrl_cfg.feedthrough,
    )
    io = back_substitute(sys, budget=ctrl_cfg.monomial_budget)
    return io, {
        "kind": "canonical",
        "n_states": n_prime,
        "n_prime": n_prime,
        "cond_T": None,
        "warnings": [],
    }


def _build_plant(cfg: RunConfig):
    plant_cfg = cfg.plant
    if isinstance(plant_cfg, LinearPlantConfig):
        return LinearPlant(A=plant_cfg.A, B=plant_cfg.B, C=plant_cfg.C, x0=plant_cfg.x0)
    assert isinstance(plant_cfg, PolynomialPlantConfig)
    return PolynomialPlant(
        state_polys=[parse_plant_polynomial(s) for s in plant_cfg.state],
        output_polys=[parse_plant_polynomial(s) for s in plant_cfg.output],
        x0=plant_cfg.x0,
    )


def _certify(cfg: RunConfig, enc, configured_n: int) -> CertificationReport:
    required_n = required_plaintext_modulus(enc)
    plaintext_ok = enc.plaintext_bound < configured_n / 2
    plaintext_margin = float(
        np.log2(configured_n / 2) - np.log2(max(enc.plaintext_bound, 1))
    )
    if cfg.crypto.backend == "lwe":
        offered = Capability(1)
    else:
        offered = Capability(cfg.crypto.depth_cap + 1)
    capability_ok = offered.covers(enc.required_capability)
    messages = []
    if not plaintext_ok:
        messages.append(
            f"plaintext bound {enc.plaintext_bound} reaches N/2 (N={configured_n}); "
            "increase N, decrease M, or coarsen r"
        )
    if not capability_ok:
        messages.append(
            f"controller needs {enc.required_capability} but backend offers {offered}; "
            "use the leveled backend or raise depth_cap"
        )
    noise_ok = noise_worst = noise_margin = None
    if cfg.crypto.backend == "lwe":
        noise_ok = False
        try:
            params = LweParams(
                n=cfg.crypto.n,
                N=configured_n,
                noise_bound=cfg.crypto.noise_bound,
                seed=coerce_seed_int(cfg.crypto.seed),
            )
        except ValueError as err:
            messages.append(f"invalid LWE parameters: {err}")
        else:
            cert = certify_noise(
                [c for key, c in enc.int_poly.items() if key], params
            )
            noise_ok, noise_worst, noise_margin = cert.ok, cert.worst_noise, cert.margin_bits
            if not cert.ok:
                messages.append(
                    f"worst-case evaluation noise {cert.worst_noise} reaches Delta/2 "
                    f"= {cert.threshold}; increase N headroom or lower noise_bound"
                )
    ok = plaintext_ok and capability_ok and (noise_ok is not False)
    return CertificationReport(
        ok=ok,
        backend=cfg.crypto.backend,
        configured_modulus=configured_n,
        required_modulus=required_n,
        plaintext_ok=plaintext_ok,
        plaintext_margin_bits=plaintext_margin,
        capability_required=str(enc.required_capability),
        capability_offered=str(offered),
        capability_ok=capability_ok,
        noise_ok=noise_ok,
        noise_worst=noise_worst,
        noise_margin_bits=noise_margin,
        messages=messages,
    )


def build_loop(
    cfg: RunConfig,
    r_override: float | None = None,
    seed_override=None,
) -> BuiltLoop:
    """Run the whole conversion chain for one parameter point."""
    io, realize_info = _realize(cfg)
    plant = _build_plant(cfg)
    r = cfg.fixedpoint.r if r_override is None else float(r_override)
    s = cfg.fixedpoint.s if r_override is None else float(r_override)
    params = FixedPointParams(r=r, M=cfg.fixedpoint.M, s=s)
    enc = encode_polynomial(io.g, params)
    required_n = required_plaintext_modulus(enc)
    if cfg.crypto.plaintext_modulus == "auto":
        configured_n = next_pow2(required_n)
    else:
        configured_n = int(cfg.crypto.plaintext_modulus)

    certification = _certify(cfg, enc, configured_n)

    seed_int = coerce_seed_int(cfg.crypto.seed if seed_override is None else seed_override)
    if cfg.crypto.backend == "lwe":
        def make_backend(_n=configured_n, _seed=seed_int):
            return LweBackend(
                LweParams(
                    n=cfg.crypto.n,
                    N=_n,
                    noise_bound=cfg.crypto.noise_bound,
                    seed=_seed,
                )
            )
    else:
        def make_backend(_n=configured_n, _seed=seed_int):
            return LeveledBackend(N=_n, depth_cap=cfg.crypto.depth_cap, seed=_seed)

    reference = Reference(
        kind=cfg.reference.kind,
        amplitude=cfg.reference.amplitude,
        period=cfg.reference.period,
        step_at=cfg.reference.step_at,
    )
    spec = LoopSpec(
        plant=plant,
        reference=reference,
        io=io,
        M=cfg.fixedpoint.M,
        enc=enc,
        N=configured_n,
        make_backend=make_backend,
    )
    conversion = ConversionReport(
        controller_kind=realize_info["kind"],
        n_states=realize_info["n_states"],
        n_prime=realize_info["n_prime"],
        dropped_states=realize_info["n_states"] - realize_info["n_prime"],
        m=io.m,
        p=io.p,
        cond_T=realize_info["cond_T"],
        warnings=realize_info["warnings"],
        realization_text=format_polynomial(io.g.poly, io.p),
        u_init=io.u_init,
        y_init=io.y_init,
        current_input=io.g.current_input,
        encoded_text=format_polynomial(enc.int_poly, enc.p),
        L=enc.L,
        r=enc.r,
        s=enc.s,
        M=enc.M,
        d_max=enc.d_max,
        input_box=enc.input_box,
        plaintext_bound=enc.plaintext_bound,
        required_modulus=required_n,
        error_bound=enc.error_bound,
        capability_required=str(enc.required_capability),
    )
    return BuiltLoop(
        spec=spec,
        conversion=conversion,
        certification=certification,
        backend_kind=cfg.crypto.backend,
        seed_int=seed_int,
    )


def _gate_certification(cfg: RunConfig, built: BuiltLoop, mode: str):
    if mode == "encrypted" and not built.certification.ok and not cfg.crypto.allow_uncertified:
        raise CertificationFailure(
            "; ".join(built.certification.messages) or "parameter set rejected"
        )


def run_simulation(
    cfg: RunConfig,
    mode: str | None = None,
    steps: int | None = None,
    seed=None,
    assert_exact: bool | None = None,
    timing: bool | None = None,
) -> tuple[Trace, BuiltLoop]:
    """Build, certify and simulate; overrides beat the config's run section."""
    mode = mode or cfg.run.mode
    steps = cfg.run.steps if steps is None else int(steps)
    assert_exact = cfg.run.assert_exact if assert_exact is None else assert_exact
    timing = cfg.run.timing if timing is None else timing
    built = build_loop(cfg, seed_override=seed)
    _gate_certification(cfg, built, mode)
    trace = simulate(
        built.spec, mode, steps, record_timing=timing, assert_exact=assert_exact
    )
    return trace, built


def run_sweep(
    cfg: RunConfig,
    r_values,
    steps: int | None = None,
    mode: str = "quantized",
) -> tuple[list, BuiltLoop]:
    """One run per r with s = r, each row compared against the nominal loop."""
    if not r_values:
        raise ConfigError("sweep needs at least one r value")
    values = [float(r) for r in r_values]
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ConfigError("sweep r values must be strictly decreasing")
    steps = cfg.run.steps if steps is None else int(steps)
    base_seed = coerce_seed_int(cfg.crypto.seed)
    base_built = build_loop(cfg)  # reports describe the config's own r

    def build(r: float) -> LoopSpec:
        row_seed = base_seed ^ values.index(r)  # independent stream per row
        built = build_loop(cfg, r_override=r, seed_override=row_seed)
        _gate_certification(cfg, built, mode)
        return built.spec

    rows = sweep(build, values, steps, mode=mode)
    return rows, base_built
