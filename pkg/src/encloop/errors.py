"""Exception types shared across the package."""


class EncLoopError(Exception):
    """Base class for every error raised by this package."""


class NonFiniteSignal(EncLoopError):
    """A signal vector contained NaN or infinity."""


class DegenerateController(EncLoopError):
    """The controller polynomial is constant; there is nothing to execute."""


class PlaintextOutOfRange(EncLoopError):
    """Message outside the centered plaintext space [-N/2, N/2)."""


class BackendMismatch(EncLoopError):
    """Ciphertext does not belong to this backend's parameter set."""


class CapabilityExceeded(EncLoopError):
    """Requested homomorphic operation is not supported by the backend."""


class DepthExceeded(EncLoopError):
    """Ciphertext multiplication chain exceeded the configured depth cap."""


class FreshnessViolation(EncLoopError):
    """A ciphertext produced by evaluation re-entered a later evaluation."""


class PlaintextOverflow(EncLoopError):
    """Controller output left the plaintext space; M or N was mis-sized."""


class SignalBoundViolated(EncLoopError):
    """A closed-loop signal left the admissible box derived from M."""


class NoObservableDynamics(EncLoopError):
    """The controller's observable subspace is empty (rank 0)."""


class HistoryNotDerivable(EncLoopError):
    """No initial input/output history reproduces the requested state."""


class ExpansionBudgetExceeded(EncLoopError):
    """Symbolic back-substitution grew past the monomial budget."""


class InvalidCanonicalPattern(EncLoopError):
    """A canonical state equation references a forbidden state variable."""


class ExactnessMismatch(EncLoopError):
    """Encrypted and quantized lockstep outputs disagreed."""


class CertificationFailure(EncLoopError):
    """Parameter set rejected by the pre-deployment certification checks."""


class ConfigError(EncLoopError):
    """Run configuration could not be parsed or cross-validated."""


class SimulationAborted(EncLoopError):
    """A simulation run failed; carries the step index and the cause."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause
