"""Shared closed-loop fixtures: a stable linear loop and a quadratic loop."""

import numpy as np
import pytest

from encloop.fixedpoint import (
    FixedPointParams,
    encode_polynomial,
    parse_state_polynomial,
    required_plaintext_modulus,
)
from encloop.homcrypt import LeveledBackend, LweBackend, LweParams
from encloop.realization import (
    CanonicalSystem,
    LinearController,
    back_substitute,
    io_coefficients,
    observable_decomposition,
)
from encloop.simloop import LinearPlant, LoopSpec, Reference


def next_pow2(n: int) -> int:
    return 1 << (max(n, 2) - 1).bit_length()


# Double-integrator-style plant stabilized by an observer-based 2-state
# controller (poles placed at {0.75, 0.8} / {0.5, 0.55}); closed-loop
# spectral radius ~0.80, |u| <= 5.8 and |y| <= 0.6 under the sine reference.
PLANT_A = [[1.0, 0.1], [0.0, 1.0]]
PLANT_B = [0.005, 0.1]
PLANT_C = [[1.0, 0.0]]
PLANT_X0 = [0.4, 0.0]

CTRL_A = [[0.025, 0.0787], [-2.75, 0.575]]
CTRL_B = [[0.95], [2.25]]
CTRL_C = [-5.0, -4.25]

SINE_REF = Reference(kind="sine", amplitude=0.5, period=40.0)


def stable_linear_io(x0=None):
    ctrl = LinearController(A=CTRL_A, B=CTRL_B, C=CTRL_C, x0=x0)
    return io_coefficients(observable_decomposition(ctrl))


def stable_linear_spec(
    r: float,
    s: float | None = None,
    M: float = 8.0,
    backend: str | None = "lwe",
    n: int = 64,
    noise_bound: int = 16,
    seed: int = 1234,
    reference: Reference = SINE_REF,
) -> LoopSpec:
    plant = LinearPlant(A=PLANT_A, B=PLANT_B, C=PLANT_C, x0=PLANT_X0)
    io = stable_linear_io()
    enc = encode_polynomial(io.g, FixedPointParams(r=r, M=M, s=s))
    N = next_pow2(required_plaintext_modulus(enc))
    make_backend = None
    if backend == "lwe":
        params = LweParams(n=n, N=N, noise_bound=noise_bound, seed=seed)
        make_backend = lambda: LweBackend(params)  # noqa: E731
    elif backend == "leveled":
        make_backend = lambda: LeveledBackend(N=N, depth_cap=1, seed=seed)  # noqa: E731
    return LoopSpec(
        plant=plant,
        reference=reference,
        io=io,
        M=M,
        enc=enc,
        N=N,
        make_backend=make_backend,
    )


# Quadratic canonical controller u(t) = 0.3 u(t-1)^2 - 0.2 u(t-2) + y(t-2)
# around a contractive scalar plant; signals stay below ~0.9 for the sine
# reference, so M = 2 leaves margin.
def quadratic_canonical(z0=(0.0, 0.0)) -> CanonicalSystem:
    g1 = parse_state_polynomial("-0.2 * z[2]\n1.0 * y[1]")
    g2 = parse_state_polynomial("1.0 * z[1]\n0.3 * z[2]^2")
    return CanonicalSystem(n_prime=2, p=1, g_list=[g1, g2], z0=np.asarray(z0, dtype=float))


def quadratic_spec(
    r: float,
    s: float | None = None,
    M: float = 2.0,
    depth_cap: int = 1,
    seed: int = 77,
    z0=(0.0, 0.0),
) -> LoopSpec:
    plant = LinearPlant(A=[[0.6]], B=[0.3], C=[[0.8]], x0=[0.5])
    io = back_substitute(quadratic_canonical(z0))
    enc = encode_polynomial(io.g, FixedPointParams(r=r, M=M, s=s))
    N = next_pow2(required_plaintext_modulus(enc))
    return LoopSpec(
        plant=plant,
        reference=Reference(kind="sine", amplitude=0.4, period=60.0),
        io=io,
        M=M,
        enc=enc,
        N=N,
        make_backend=lambda: LeveledBackend(N=N, depth_cap=depth_cap, seed=seed),
    )


@pytest.fixture()
def linear_spec():
    return stable_linear_spec(r=1e-3)


@pytest.fixture()
def quad_spec():
    return quadratic_spec(r=1e-3)
