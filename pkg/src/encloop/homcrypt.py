"""Pluggable homomorphic backends for the encrypted controller.

Two backends share one operation contract:

* ``LweBackend`` -- a real symmetric LWE scheme.  A ciphertext is a pair
  ``(a, b)`` with ``b = <a, s> + Delta*m + e  (mod q)``, ``q = 2**64`` fixed
  (native wrapping arithmetic, no big integers in the hot loop),
  ``Delta = q/N`` and fresh noise ``e`` drawn from a centered binomial on
  ``[-B, B]``.  It is additively homomorphic: ciphertext addition and
  multiplication by plaintext integer scalars.  Parameters here are sized for
  desk-scale experiments; they illustrate the mechanics and are NOT a
  certified secure parameter set.

* ``LeveledBackend`` -- an exact-integer reference backend that carries the
  plaintext residue in the clear together with depth/op counters.  It
  enforces the full operation contract (including ciphertext products up to
  a configured depth cap) without providing secrecy, so polynomial
  controllers can be verified end to end.  A real leveled scheme can be
  dropped in behind the same interface.

Messages live in the centered plaintext space Z_N = {-N/2, ..., N/2 - 1}.
All randomness is derived deterministically from a 32-byte seed, so entire
simulations are bit-reproducible; independent labelled streams keep parallel
users from sharing state.

Freshness accounting: every ciphertext produced by ``encrypt`` is *fresh*;
every ciphertext produced by a homomorphic operation is stamped with the
backend's current evaluation epoch.  Operations accept fresh operands and
operands from the same epoch, and raise ``FreshnessViolation`` for anything
older -- this is the executable form of the rule that evaluation outputs are
never fed back into later evaluations (they must travel to the actuator and
come back re-encrypted).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .capability import Capability
from .errors import (
    BackendMismatch,
    CapabilityExceeded,
    DepthExceeded,
    FreshnessViolation,
    PlaintextOutOfRange,
)

__all__ = [
    "Q",
    "LweParams",
    "SecretKey",
    "Ciphertext",
    "LweBackend",
    "LeveledBackend",
    "centered",
    "serialize_ciphertext",
    "deserialize_ciphertext",
    "serialize_secret_key",
    "deserialize_secret_key",
    "certify_noise",
    "NoiseCertificate",
]

Q = 1 << 64
_MASK = Q - 1

TAG_LWE = 1
TAG_LEVELED = 2


def centered(x: int, modulus: int) -> int:
    """Reduce x into the centered residue set [-modulus/2, modulus/2)."""
    v = x % modulus
    if v >= modulus // 2:
        v -= modulus
    return v


def _derive_rng(seed: bytes, label: str) -> np.random.Generator:
    digest = hashlib.sha256(seed + b"/" + label.encode("utf-8")).digest()
    return np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))


def _coerce_seed(seed) -> bytes:
    if isinstance(seed, bytes):
        raw = seed
    elif isinstance(seed, int):
        raw = (seed % (1 << 256)).to_bytes(32, "little", signed=False)
    elif isinstance(seed, str):
        raw = bytes.fromhex(seed)
    else:
        raise TypeError(f"unsupported seed type {type(seed)!r}")
    if len(raw) != 32:
        raw = hashlib.sha256(raw).digest()
    return raw


@dataclass(frozen=True)
class LweParams:
    """LWE parameter set.  q is fixed at 2**64 (wrapping uint64 arithmetic)."""

    n: int
    N: int
    noise_bound: int = 16
    seed: bytes = b"\x00" * 32

    def __post_init__(self):
        object.__setattr__(self, "seed", _coerce_seed(self.seed))
        if self.n < 1:
            raise ValueError("lattice dimension n must be >= 1")
        if self.N < 4 or self.N > (1 << 32) or self.N & (self.N - 1):
            raise ValueError("plaintext modulus N must be a power of two in [4, 2^32]")
        if not 0 < self.noise_bound < self.delta // 2:
            raise ValueError("noise bound must satisfy 0 < B < Delta/2")

    @property
    def q(self) -> int:
        return Q

    @property
    def delta(self) -> int:
        return Q // self.N


@dataclass
class SecretKey:
    """Secret vector s in Z_q^n.  Never enters the controller's call path."""

    s: np.ndarray
    n: int
    N: int

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.uint64)
        if self.s.shape != (self.n,):
            raise ValueError("secret key length must equal n")


@dataclass
class Ciphertext:
    """One encrypted residue of Z_N.

    LWE payload: mask vector ``a`` (n uint64 words) and body ``b``.  Leveled
    payload: the centered residue plus depth/op counters.  ``epoch`` is None
    for fresh ciphertexts (straight out of ``encrypt``) and carries the
    producing evaluation's epoch otherwise.
    """

    tag: int
    n: int
    N: int
    a: np.ndarray | None
    b: int
    depth: int = 0
    ops: int = 0
    epoch: int | None = None

    @property
    def fresh(self) -> bool:
        return self.epoch is None

    def __eq__(self, other):
        if not isinstance(other, Ciphertext):
            return NotImplemented
        same_payload = (
            self.tag == other.tag
            and self.n == other.n
            and self.N == other.N
            and self.b == other.b
            and self.depth == other.depth
            and self.ops == other.ops
        )
        if not same_payload:
            return False
        if self.a is None or other.a is None:
            return self.a is None and other.a is None
        return bool(np.array_equal(self.a, other.a))


class _BackendBase:
    """Shared operand checking and evaluation-epoch accounting."""

    tag: int = 0
    capability: Capability

    def __init__(self):
        self._epoch = 0

    def begin_evaluation(self) -> int:
        """Open a new evaluation epoch; older derived ciphertexts become stale."""
        self._epoch += 1
        return self._epoch

    def _check_operand(self, c: Ciphertext):
        if not isinstance(c, Ciphertext) or c.tag != self.tag or not self._same_params(c):
            raise BackendMismatch(
                f"ciphertext (tag={getattr(c, 'tag', '?')}) does not match this backend"
            )
        if c.epoch is not None and c.epoch != self._epoch:
            raise FreshnessViolation(
                "ciphertext from evaluation epoch "
                f"{c.epoch} consumed in epoch {self._epoch}; re-encrypt it first"
            )

    def _same_params(self, c: Ciphertext) -> bool:
        raise NotImplementedError


class LweBackend(_BackendBase):
    """Symmetric LWE, additively homomorphic (Capability: Additive)."""

    tag = TAG_LWE
    capability = Capability(1)

    def __init__(self, params: LweParams):
        super().__init__()
        self.params = params
        self._default_rng = self.rng("encrypt")

    # -- key material and randomness ----------------------------------------

    def rng(self, label: str) -> np.random.Generator:
        """Deterministic, independently seeded stream for the given label."""
        return _derive_rng(self.params.seed, label)

    def keygen(self) -> SecretKey:
        s = self.rng("keygen").integers(0, Q, size=self.params.n, dtype=np.uint64)
        return SecretKey(s=s, n=self.params.n, N=self.params.N)

    # -- core scheme ---------------------------------------------------------

    def encrypt(self, m: int, sk: SecretKey, rng: np.random.Generator | None = None) -> Ciphertext:
        p = self.params
        if not -p.N // 2 <= m < p.N // 2:
            raise PlaintextOutOfRange(f"message {m} outside [-{p.N // 2}, {p.N // 2})")
        gen = rng if rng is not None else self._default_rng
        a = gen.integers(0, Q, size=p.n, dtype=np.uint64)
        e = int(gen.binomial(p.noise_bound, 0.5)) - int(gen.binomial(p.noise_bound, 0.5))
        mask = int(np.dot(a, sk.s))  # wraps mod 2^64 in uint64
        b = (mask + p.delta * (m % p.N) + e) & _MASK
        return Ciphertext(tag=self.tag, n=p.n, N=p.N, a=a, b=b)

    def decrypt(self, c: Ciphertext, sk: SecretKey) -> int:
        p = self.params
        d = (c.b - int(np.dot(c.a, sk.s))) & _MASK
        m = ((d + p.delta // 2) // p.delta) % p.N
        return centered(m, p.N)

    # -- homomorphic operations ----------------------------------------------

    def ct_add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_operand(c1)
        self._check_operand(c2)
        return Ciphertext(
            tag=self.tag,
            n=self.params.n,
            N=self.params.N,
            a=c1.a + c2.a,
            b=(c1.b + c2.b) & _MASK,
            ops=c1.ops + c2.ops + 1,
            epoch=self._epoch,
        )

    def ct_add_plain(self, c: Ciphertext, k: int) -> Ciphertext:
        self._check_operand(c)
        bump = self.params.delta * (k % self.params.N)
        return Ciphertext(
            tag=self.tag,
            n=self.params.n,
            N=self.params.N,
            a=c.a.copy(),
            b=(c.b + bump) & _MASK,
            ops=c.ops + 1,
            epoch=self._epoch,
        )

    def ct_scalar_mul(self, k: int, c: Ciphertext) -> Ciphertext:
        self._check_operand(c)
        km = np.uint64(k & _MASK)
        return Ciphertext(
            tag=self.tag,
            n=self.params.n,
            N=self.params.N,
            a=c.a * km,
            b=(c.b * (k & _MASK)) & _MASK,
            ops=c.ops + 1,
            epoch=self._epoch,
        )

    def ct_mul(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        raise CapabilityExceeded(
            "LWE backend is additive only; ciphertext products need the leveled backend"
        )

    def trivial(self, k: int) -> Ciphertext:
        """Noiseless keyless encoding of a public constant: (0, Delta*k)."""
        p = self.params
        return Ciphertext(
            tag=self.tag,
            n=p.n,
            N=p.N,
            a=np.zeros(p.n, dtype=np.uint64),
            b=(p.delta * (k % p.N)) & _MASK,
            epoch=self._epoch,
        )

    # -- diagnostics -----------------------------------------------------------

    def noise_budget(self, c: Ciphertext, sk: SecretKey) -> float:
        """Bits of margin before noise corrupts decryption (debug oracle).

        Positive iff decryption is currently exact; uses the secret key, so
        it lives strictly outside the controller boundary.
        """
        p = self.params
        d = (c.b - int(np.dot(c.a, sk.s))) & _MASK
        res = d % p.delta
        e = res if res < p.delta // 2 else res - p.delta
        return math.log2(p.delta // 2) - math.log2(abs(e) + 1)

    def _same_params(self, c: Ciphertext) -> bool:
        return c.n == self.params.n and c.N == self.params.N


class LeveledBackend(_BackendBase):
    """Exact-integer reference backend with depth accounting (no secrecy).

    Carries each plaintext residue in the clear and enforces the leveled
    operation contract: ciphertext products allowed while the multiplication
    chain counter stays within ``depth_cap`` (fresh = 0, mul = max + 1), so a
    total-degree-d monomial needs depth d - 1.
    """

    tag = TAG_LEVELED

    def __init__(self, N: int, depth_cap: int = 1, seed=b"\x00" * 32):
        super().__init__()
        if N < 4 or N % 2:
            raise ValueError("plaintext modulus N must be even and >= 4")
        if depth_cap < 0:
            raise ValueError("depth cap must be >= 0")
        self.N = N
        self.depth_cap = depth_cap
        self.seed = _coerce_seed(seed)
        self.capability = Capability(depth_cap + 1)

    def rng(self, label: str) -> np.random.Generator:
        return _derive_rng(self.seed, label)

    def keygen(self) -> SecretKey:
        # reference backend has no real key material
        return SecretKey(s=np.zeros(0, dtype=np.uint64), n=0, N=self.N)

    def encrypt(self, m: int, sk: SecretKey, rng=None) -> Ciphertext:
        if not -self.N // 2 <= m < self.N // 2:
            raise PlaintextOutOfRange(f"message {m} outside [-{self.N // 2}, {self.N // 2})")
        return Ciphertext(tag=self.tag, n=0, N=self.N, a=None, b=m)

    def decrypt(self, c: Ciphertext, sk: SecretKey) -> int:
        return c.b

    def ct_add(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_operand(c1)
        self._check_operand(c2)
        return Ciphertext(
            tag=self.tag,
            n=0,
            N=self.N,
            a=None,
            b=centered(c1.b + c2.b, self.N),
            depth=max(c1.depth, c2.depth),
            ops=c1.ops + c2.ops + 1,
            epoch=self._epoch,
        )

    def ct_add_plain(self, c: Ciphertext, k: int) -> Ciphertext:
        self._check_operand(c)
        return Ciphertext(
            tag=self.tag,
            n=0,
            N=self.N,
            a=None,
            b=centered(c.b + k, self.N),
            depth=c.depth,
            ops=c.ops + 1,
            epoch=self._epoch,
        )

    def ct_scalar_mul(self, k: int, c: Ciphertext) -> Ciphertext:
        self._check_operand(c)
        return Ciphertext(
            tag=self.tag,
            n=0,
            N=self.N,
            a=None,
            b=centered(k * c.b, self.N),
            depth=c.depth,
            ops=c.ops + 1,
            epoch=self._epoch,
        )

    def ct_mul(self, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
        self._check_operand(c1)
        self._check_operand(c2)
        depth = max(c1.depth, c2.depth) + 1
        if depth > self.depth_cap:
            raise DepthExceeded(
                f"multiplication chain depth {depth} exceeds cap {self.depth_cap}"
            )
        return Ciphertext(
            tag=self.tag,
            n=0,
            N=self.N,
            a=None,
            b=centered(c1.b * c2.b, self.N),
            depth=depth,
            ops=c1.ops + c2.ops + 1,
            epoch=self._epoch,
        )

    def trivial(self, k: int) -> Ciphertext:
        return Ciphertext(
            tag=self.tag, n=0, N=self.N, a=None, b=centered(k, self.N),
            epoch=self._epoch,
        )

    def noise_budget(self, c: Ciphertext, sk: SecretKey) -> float:
        return math.inf

    def _same_params(self, c: Ciphertext) -> bool:
        return c.N == self.N


# ---------------------------------------------------------------------------
# Wire formats: header = tag (1 byte) | n (u32 LE) | N (u64 LE), then
# little-endian 64-bit words.  LWE payload: a[0..n-1], b.  Leveled payload:
# residue (two's complement), depth, ops.  Key file: header + n key words.
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<BIQ")


def serialize_ciphertext(c: Ciphertext) -> bytes:
    head = _HEADER.pack(c.tag, c.n, c.N)
    if c.tag == TAG_LWE:
        return head + c.a.astype("<u8").tobytes() + struct.pack("<Q", c.b)
    return head + struct.pack("<QQQ", c.b & _MASK, c.depth, c.ops)


def deserialize_ciphertext(data: bytes) -> Ciphertext:
    tag, n, N = _HEADER.unpack_from(data)
    body = data[_HEADER.size :]
    if tag == TAG_LWE:
        if len(body) != 8 * (n + 1):
            raise ValueError("ciphertext payload length mismatch")
        a = np.frombuffer(body[: 8 * n], dtype="<u8").astype(np.uint64)
        (b,) = struct.unpack("<Q", body[8 * n :])
        return Ciphertext(tag=tag, n=n, N=N, a=a, b=b)
    if tag == TAG_LEVELED:
        b, depth, ops = struct.unpack("<QQQ", body)
        return Ciphertext(
            tag=tag, n=n, N=N, a=None, b=centered(b, Q), depth=depth, ops=ops
        )
    raise ValueError(f"unknown backend tag {tag}")


def serialize_secret_key(sk: SecretKey, tag: int = TAG_LWE) -> bytes:
    return _HEADER.pack(tag, sk.n, sk.N) + sk.s.astype("<u8").tobytes()


def deserialize_secret_key(data: bytes) -> SecretKey:
    tag, n, N = _HEADER.unpack_from(data)
    body = data[_HEADER.size :]
    if len(body) != 8 * n:
        raise ValueError("key payload length mismatch")
    s = np.frombuffer(body, dtype="<u8").astype(np.uint64)
    return SecretKey(s=s, n=n, N=N)


# ---------------------------------------------------------------------------
# Pre-deployment noise certification
# ---------------------------------------------------------------------------


@dataclass
class NoiseCertificate:
    """Worst-case evaluation noise versus the decryption threshold Delta/2."""

    ok: bool
    worst_noise: int
    threshold: int
    margin_bits: float


def certify_noise(coefficients, params: LweParams) -> NoiseCertificate:
    """Certify that one evaluation of the encoded polynomial always decrypts.

    For the additive backend the evaluation is a weighted sum of fresh
    ciphertexts, so the accumulated noise is at most sum(|k|) * B over the
    non-constant integer coefficients ``k`` (constants are noiseless plain
    additions).  Parameter sets where this reaches Delta/2 are rejected.
    """
    worst = sum(abs(int(k)) for k in coefficients) * params.noise_bound
    threshold = params.delta // 2
    margin = math.log2(threshold) - math.log2(max(worst, 1))
    return NoiseCertificate(ok=worst < threshold, worst_noise=worst,
                            threshold=threshold, margin_bits=margin)
