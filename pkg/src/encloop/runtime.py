"""Controller execution over integers and over ciphertexts.

The quantized controller evaluates the encoded integer polynomial exactly on
ring buffers of quantized signals; the encrypted controller evaluates the same
polynomial homomorphically on buffers of fresh ciphertexts and never sees the
secret key.  The actuator closes the loop: it decrypts the controller output,
rescales it to the real command, re-quantizes and re-encrypts it, so every
buffer entry of the next step is a newly encrypted message and the scheme only
ever has to be homomorphic for one evaluation at a time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import PlaintextOverflow, SignalBoundViolated
from .fixedpoint import EncodedController, quantize
from .homcrypt import Ciphertext, SecretKey

__all__ = [
    "QuantizedController",
    "EncryptedController",
    "Sensor",
    "Actuator",
    "SensorMessage",
    "CommandMessage",
    "FeedbackMessage",
    "quantized_step",
    "feedback",
    "encrypted_step",
    "actuator_process",
]


def _check_box(value: int, box: int, what: str):
    if abs(value) > box:
        raise SignalBoundViolated(
            f"{what} = {value} outside admissible box [-{box}, {box}]; the loop exceeded M"
        )


# Field order in these structs is stable: a future wire protocol serializes
# them in declaration order.


@dataclass(frozen=True)
class SensorMessage:
    """Sensor -> controller: the freshly encrypted measurement components."""

    step: int
    y_cts: tuple


@dataclass(frozen=True)
class CommandMessage:
    """Controller -> actuator: the evaluated (non-fresh) command ciphertext."""

    step: int
    u_ct: Ciphertext


@dataclass(frozen=True)
class FeedbackMessage:
    """Actuator -> controller: the re-encrypted quantized command."""

    step: int
    u_ct: Ciphertext


@dataclass
class QuantizedController:
    """Integer recursion state: ring buffers of quantized signals."""

    enc: EncodedController
    N: int
    u_hist: list = field(default_factory=list)
    y_hist: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def from_history(cls, enc: EncodedController, N: int, u_init, y_init) -> "QuantizedController":
        """Quantize a real initial history {u(-i)}, {y(-i)} into the buffers."""
        u_hist = [quantize([u], enc.r)[0] for u in u_init]
        y_hist = [quantize(y, enc.r) for y in y_init]
        state = cls(enc=enc, N=N, u_hist=u_hist, y_hist=y_hist)
        for u in u_hist:
            _check_box(u, enc.input_box, "initial u")
        for y in y_hist:
            for comp in y:
                _check_box(comp, enc.input_box, "initial y")
        return state

    def step(self, y_now=None) -> tuple[int, float]:
        """Evaluate the integer polynomial; returns (ubar_prime, u_q)."""
        ubar_prime = self.enc.evaluate(self.u_hist, self.y_hist, y_now)
        if not -self.N // 2 <= ubar_prime < self.N // 2:
            raise PlaintextOverflow(
                f"controller output {ubar_prime} outside Z_N (N={self.N}); "
                "M or N was mis-sized"
            )
        return ubar_prime, self.enc.L * ubar_prime

    def feedback(self, u_q: float, y_bar_new: list) -> None:
        """Re-quantize the command and push (u(t), y(t)) into the buffers."""
        u_bar = quantize([u_q], self.enc.r)[0]
        _check_box(u_bar, self.enc.input_box, "u")
        for comp in y_bar_new:
            _check_box(comp, self.enc.input_box, "y")
        if self.enc.m > 0:
            self.u_hist = [u_bar] + self.u_hist[:-1]
            self.y_hist = [list(y_bar_new)] + self.y_hist[:-1]
        self.t += 1


class EncryptedController:
    """Homomorphic recursion state; holds only ciphertexts and public data.

    The evaluation path uses ct_add / ct_add_plain / ct_scalar_mul / ct_mul
    exclusively; the secret key is never referenced here (the key-separation
    test asserts this statically).  Buffer entries must be fresh ciphertexts;
    each step opens a new evaluation epoch, so stale evaluation outputs are
    rejected by the backend.
    """

    def __init__(self, enc: EncodedController, backend, u_cts, y_cts):
        self.enc = enc
        self.backend = backend
        if len(u_cts) != enc.m or len(y_cts) != enc.m:
            raise ValueError("ciphertext history length must equal the memory depth")
        self.u_cts = list(u_cts)
        self.y_cts = [list(v) for v in y_cts]
        self.t = 0

    def _operand(self, var, y_now_cts):
        if var[0] == "u":
            return self.u_cts[var[1] - 1]
        _, lag, comp = var
        if lag == 0:
            return y_now_cts[comp - 1]
        return self.y_cts[lag - 1][comp - 1]

    def step(self, y_now_cts=None) -> Ciphertext:
        """Evaluate the polynomial over ciphertexts; output is non-fresh."""
        backend = self.backend
        backend.begin_evaluation()
        acc = None
        plain_const = 0
        for key, coeff in self.enc.int_poly.items():
            if not key:
                plain_const += int(coeff)
                continue
            factors = []
            for var, exp in key:
                factors.extend([self._operand(var, y_now_cts)] * exp)
            term = factors[0]
            for extra in factors[1:]:
                term = backend.ct_mul(term, extra)
            term = backend.ct_scalar_mul(int(coeff), term)
            acc = term if acc is None else backend.ct_add(acc, term)
        if acc is None:
            # every non-constant coefficient rounded away: a public constant
            acc = backend.trivial(plain_const)
        elif plain_const:
            acc = backend.ct_add_plain(acc, plain_const)
        self.t += 1
        return acc

    def feedback(self, u_ct: Ciphertext, y_cts_new) -> None:
        """Push newly encrypted (u(t), y(t)) ciphertexts into the buffers."""
        entries = [u_ct, *y_cts_new]
        for ct in entries:
            if not ct.fresh:
                raise SignalBoundViolated(
                    "feedback requires newly encrypted ciphertexts"
                )
        if self.enc.m > 0:
            self.u_cts = [u_ct] + self.u_cts[:-1]
            self.y_cts = [list(y_cts_new)] + self.y_cts[:-1]


@dataclass
class Sensor:
    """Quantizes and encrypts the plant output with its own cipher stream."""

    backend: object
    sk: SecretKey
    r: float
    box: int

    def __post_init__(self):
        self._rng = self.backend.rng("sensor")

    def measure(self, y_real) -> tuple[list, list]:
        y_bar = quantize(y_real, self.r)
        for comp in y_bar:
            _check_box(comp, self.box, "sensor y")
        cts = [self.backend.encrypt(v, self.sk, self._rng) for v in y_bar]
        return y_bar, cts

    def encrypt_history(self, y_init) -> list:
        """Encrypt the quantized initial history {y(-i)} during setup."""
        out = []
        for y in y_init:
            y_bar = quantize(y, self.r)
            out.append([self.backend.encrypt(v, self.sk, self._rng) for v in y_bar])
        return out


@dataclass
class Actuator:
    """Decrypt -> rescale -> re-quantize -> re-encrypt; the only key holder."""

    backend: object
    sk: SecretKey
    L: float
    r: float
    box: int

    def __post_init__(self):
        self._rng = self.backend.rng("actuator")
        self.last_plain: int | None = None  # decrypted integer, for trace diagnostics

    def process(self, c: Ciphertext) -> tuple[float, Ciphertext]:
        """Returns the real command u_q and the fresh feedback ciphertext."""
        ubar_prime = self.backend.decrypt(c, self.sk)
        self.last_plain = ubar_prime
        u_q = self.L * ubar_prime
        u_bar = quantize([u_q], self.r)[0]
        _check_box(u_bar, self.box, "actuator u")
        return u_q, self.backend.encrypt(u_bar, self.sk, self._rng)

    def encrypt_history(self, u_init) -> list:
        """Encrypt the quantized initial history {u(-i)} during setup."""
        return [
            self.backend.encrypt(quantize([u], self.r)[0], self.sk, self._rng)
            for u in u_init
        ]


# -- free-function views of the operation contract ---------------------------------


def quantized_step(state: QuantizedController, y_now=None):
    return state.step(y_now)


def feedback(state: QuantizedController, u_q: float, y_bar_new):
    state.feedback(u_q, y_bar_new)
    return state


def encrypted_step(state: EncryptedController, y_now_cts=None) -> Ciphertext:
    return state.step(y_now_cts)


def actuator_process(c: Ciphertext, sk: SecretKey, L: float, r: float, backend, box: int):
    return Actuator(backend=backend, sk=sk, L=L, r=r, box=box).process(c)
