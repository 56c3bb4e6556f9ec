"""Exact state-vector simulation of quantum dialogue over collective-noise channels.

Two decoherence-free encodings are supported: ``dp`` (collective dephasing)
and ``r`` (collective rotation).
"""
__version__ = "0.1.0"

from .logical import Encoding, LogicalState, TamperEvent
from .noise import NoiseModel
from .protocol import (
    Abort,
    DialogueResult,
    KeyRegister,
    MessagePair,
    ProtocolConfig,
    Transcript,
    run_dialogue,
    share_key,
    trial_rng,
)
from .statevec import DensityOp, Ket, Register

__all__ = [
    "Abort",
    "DensityOp",
    "DialogueResult",
    "Encoding",
    "Ket",
    "KeyRegister",
    "LogicalState",
    "MessagePair",
    "NoiseModel",
    "ProtocolConfig",
    "Register",
    "TamperEvent",
    "Transcript",
    "__version__",
    "run_dialogue",
    "share_key",
    "trial_rng",
]
