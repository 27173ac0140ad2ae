"""Homomorphic capability model: what a backend can evaluate."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Capability:
    """Maximum polynomial total degree evaluable over ciphertexts.

    ``max_degree == 1`` is the purely additive capability (ciphertext
    addition and plaintext-scalar multiplication); ``max_degree == d >= 2``
    additionally allows ciphertext products up to multiplication-chain
    depth ``d - 1``.
    """

    max_degree: int

    def __post_init__(self):
        if self.max_degree < 1:
            raise ValueError("capability degree must be >= 1")

    @property
    def kind(self) -> str:
        return "additive" if self.max_degree <= 1 else "leveled"

    def covers(self, required: "Capability") -> bool:
        return self.max_degree >= required.max_degree

    def __str__(self) -> str:
        if self.max_degree <= 1:
            return "Additive"
        return f"Leveled({self.max_degree})"


ADDITIVE = Capability(1)
