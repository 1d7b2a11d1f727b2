"""Blind delegated MBQC with interleaved test rounds, simulated end to end."""

from vbqc_aces.protocol.angles import QubitSecrets, corrected_angle, decrypt, delta_angle
from vbqc_aces.protocol.mbqc import MeasurementPattern, exact_output_distribution, run_direct
from vbqc_aces.protocol.session import (
    ABORT,
    ACCEPT,
    ProtocolConfig,
    ProtocolResult,
    ProtocolStateError,
    ZAttack,
    key_release_payload,
    majority_vote,
    release_keys,
    run_rvbqc,
    sample_test_round,
)

__all__ = [
    "ABORT",
    "ACCEPT",
    "MeasurementPattern",
    "ProtocolConfig",
    "ProtocolResult",
    "ProtocolStateError",
    "QubitSecrets",
    "ZAttack",
    "corrected_angle",
    "decrypt",
    "delta_angle",
    "exact_output_distribution",
    "key_release_payload",
    "majority_vote",
    "release_keys",
    "run_direct",
    "run_rvbqc",
    "sample_test_round",
]
