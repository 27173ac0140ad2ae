"""Dynamic control over encrypted data for unbounded horizons.

Controllers are converted to a fixed-memory input-output recursion, encoded
over integers with fixed-point scaling, and executed homomorphically; the
actuator decrypts, rescales, re-quantizes and re-encrypts the command each
step, so the cryptosystem only ever evaluates one polynomial on freshly
encrypted inputs.  A closed-loop simulator verifies that the encrypted and
integer controllers agree bit for bit and that quantization error vanishes
as the step sizes shrink.
"""

from .capability import Capability
from .errors import EncLoopError
from .fixedpoint import (
    EncodedController,
    FixedPointParams,
    HistoryPolynomial,
    encode_polynomial,
    quantize,
    required_plaintext_modulus,
    rescale,
)
from .homcrypt import Ciphertext, LeveledBackend, LweBackend, LweParams, SecretKey
from .polynomial import Poly
from .realization import (
    CanonicalSystem,
    DecompositionResult,
    IoRealization,
    LinearController,
    back_substitute,
    derive_initial_history,
    io_coefficients,
    observable_decomposition,
)
from .runtime import Actuator, EncryptedController, QuantizedController, Sensor
from .simloop import (
    LinearPlant,
    LoopSpec,
    PolynomialPlant,
    Reference,
    Trace,
    compare,
    simulate,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "Capability",
    "EncLoopError",
    "FixedPointParams",
    "HistoryPolynomial",
    "EncodedController",
    "quantize",
    "rescale",
    "encode_polynomial",
    "required_plaintext_modulus",
    "Poly",
    "LweParams",
    "LweBackend",
    "LeveledBackend",
    "SecretKey",
    "Ciphertext",
    "LinearController",
    "DecompositionResult",
    "CanonicalSystem",
    "IoRealization",
    "observable_decomposition",
    "io_coefficients",
    "back_substitute",
    "derive_initial_history",
    "QuantizedController",
    "EncryptedController",
    "Sensor",
    "Actuator",
    "LinearPlant",
    "PolynomialPlant",
    "Reference",
    "LoopSpec",
    "Trace",
    "simulate",
    "compare",
    "sweep",
    "__version__",
]
