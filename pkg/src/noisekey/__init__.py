"""Key distribution secured by phase noise on a shared-key-driven wheel.

Two endpoints holding a short shared key ``K0`` take turns sending random
bits as noisy phases on a constellation whose basis is selected by the
running key.  The receiver, knowing the basis, decides each bit reliably;
an eavesdropper without the key faces overlapping, noise-smeared states.
Reconciliation and privacy amplification turn what survives into fresh key.
"""

from .constellation import WheelConfig, basis_index, basis_phase, decode, encode, wrap
from .errors import (
    AttackRefused,
    ConfigMismatch,
    ContractViolation,
    DomainError,
    FingerprintMismatch,
    KeyExhausted,
    NoiseKeyError,
    ProtocolViolation,
    UndefinedLikelihood,
    WireError,
)
from .noise import (
    EntropySource,
    NoiseModel,
    bob_error_probability,
    sample_noise,
    sigma_from_coverage,
    sigma_from_photons,
)
from .protocol import (
    DistillationLedger,
    Endpoint,
    Role,
    SessionConfig,
    geometric_ledger,
    privacy_amplify,
    run_session,
    toeplitz_hash,
)
from .adversary import delta_I, eve_bit_posterior, exhaustive_attack, mutual_information
from .otp import OneTimePad, PadFile, one_time_pad

__all__ = [
    "AttackRefused", "ConfigMismatch", "ContractViolation", "DistillationLedger",
    "DomainError", "Endpoint", "EntropySource", "FingerprintMismatch", "KeyExhausted",
    "NoiseKeyError", "NoiseModel", "OneTimePad", "PadFile", "ProtocolViolation", "Role",
    "SessionConfig", "UndefinedLikelihood", "WheelConfig", "WireError", "basis_index",
    "basis_phase", "bob_error_probability", "decode", "delta_I", "encode",
    "eve_bit_posterior", "exhaustive_attack", "geometric_ledger", "mutual_information",
    "one_time_pad", "privacy_amplify", "run_session", "sample_noise",
    "sigma_from_coverage", "sigma_from_photons", "toeplitz_hash", "wrap",
]
