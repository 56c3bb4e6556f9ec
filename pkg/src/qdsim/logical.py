"""Two-photon decoherence-free logical qubits.

``dp`` survives collective dephasing (code space span{|01>, |10>}); ``r``
survives collective rotation (code space span{|phi+>, |psi->}). Everything
measured here goes through single-qubit measurements only.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .statevec import (
    CNOT,
    H,
    I2,
    KET0,
    KET1,
    NEG_IY,
    S,
    X,
    Z_BASIS,
    GateMatrix,
    Ket,
    Register,
    apply_gate,
    fidelity,
)

_R2 = 1 / np.sqrt(2)

Family = Literal["computational", "superposition"]
FAMILIES: tuple[Family, Family] = ("computational", "superposition")

DISTILL_FIDELITY = 1 - 1e-9


class Encoding(str, enum.Enum):
    DP = "dp"
    R = "r"


class LogicalState(str, enum.Enum):
    L0 = "L0"
    L1 = "L1"
    PLUS = "Lplus"
    MINUS = "Lminus"

    @property
    def family(self) -> Family:
        return "computational" if self in (LogicalState.L0, LogicalState.L1) else "superposition"

    @property
    def bit(self) -> int:
        """0 for L0/Lplus, 1 for L1/Lminus."""
        return 0 if self in (LogicalState.L0, LogicalState.PLUS) else 1

    @classmethod
    def from_bit(cls, bit: int, family: Family = "computational") -> LogicalState:
        if family == "computational":
            return cls.L1 if bit else cls.L0
        return cls.MINUS if bit else cls.PLUS


@dataclass(frozen=True)
class TamperEvent:
    """Single-photon outcomes that no honest member of the family can produce."""

    encoding: Encoding
    family: Family
    bits: tuple[int, int]


def _pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(a, b)


PHI_PLUS = (_pair(KET0, KET0) + _pair(KET1, KET1)) * _R2
PHI_MINUS = (_pair(KET0, KET0) - _pair(KET1, KET1)) * _R2
PSI_PLUS = (_pair(KET0, KET1) + _pair(KET1, KET0)) * _R2
PSI_MINUS = (_pair(KET0, KET1) - _pair(KET1, KET0)) * _R2

_CODE_WORDS = {
    Encoding.DP: (_pair(KET0, KET1), _pair(KET1, KET0)),
    Encoding.R: (PHI_PLUS, PSI_MINUS),
}


def encode(enc: Encoding, s: LogicalState) -> Ket:
    zero, one = _CODE_WORDS[Encoding(enc)]
    s = LogicalState(s)
    if s is LogicalState.L0:
        return Ket(zero)
    if s is LogicalState.L1:
        return Ket(one)
    sign = 1 if s is LogicalState.PLUS else -1
    return Ket((zero + sign * one) * _R2)


def code_projector(enc: Encoding) -> np.ndarray:
    zero, one = _CODE_WORDS[Encoding(enc)]
    return np.outer(zero, zero.conj()) + np.outer(one, one.conj())


def logical_gate(enc: Encoding, op: int) -> GateMatrix:
    """4x4 physical matrix of U0 (op=0) or U1 (op=1)."""
    if op not in (0, 1):
        raise ValueError(f"logical op must be 0 or 1, got {op!r}")
    if op == 0:
        return np.eye(4, dtype=complex)
    if Encoding(enc) is Encoding.DP:
        return np.kron(NEG_IY, X)
    return np.kron(I2, NEG_IY)


def controlled_logical_gate(enc: Encoding, inverse: bool = False) -> GateMatrix:
    """8x8 gate |0><0| (x) U0 + |1><1| (x) U1 (or U1^dagger when ``inverse``)."""
    u1 = logical_gate(enc, 1)
    if inverse:
        u1 = u1.conj().T
    out = np.zeros((8, 8), dtype=complex)
    out[:4, :4] = np.eye(4)
    out[4:, 4:] = u1
    return out


def rotation_gate(theta: float) -> GateMatrix:
    """Key-refresh rotation [[cos, sin], [-sin, cos]]."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, s], [-s, c]], dtype=complex)


def prepare_resource(enc: Encoding) -> Ket:
    """(|0>_A|0>_L + |1>_A|1>_L)/sqrt2 on qubits (A, C1, C2)."""
    zero, one = _CODE_WORDS[Encoding(enc)]
    return Ket((np.kron(KET0, zero) + np.kron(KET1, one)) * _R2)


def _check_resource(state: Ket, enc: Encoding, qubits: Sequence[int]) -> None:
    if state.n_qubits != 3 or list(qubits) != [0, 1, 2]:
        raise ValueError("fidelity check needs a bare 3-qubit resource state")
    f = fidelity(state, prepare_resource(enc))
    if f < DISTILL_FIDELITY:
        raise ValueError(f"input is not the resource state (fidelity {f:.3g})")


def distill_key_dp(state: Ket, qubits: Sequence[int] = (0, 1, 2), check: bool = True) -> Ket:
    """CNOT C1 -> C2 turns the dp resource into |phi+>_(A,C1) (x) |1>_C2."""
    if check:
        _check_resource(state, Encoding.DP, qubits)
    _, c1, c2 = qubits
    return apply_gate(state, CNOT, [c1, c2])


def distill_key_r_intermediate(state: Ket, qubits: Sequence[int] = (0, 1, 2)) -> Ket:
    for q in qubits:
        state = apply_gate(state, S, [q])
    for q in qubits:
        state = apply_gate(state, H, [q])
    return state


def distill_key_r(state: Ket, qubits: Sequence[int] = (0, 1, 2), check: bool = True) -> Ket:
    """S on all three, H on all three, then CNOT C1 -> C2."""
    if check:
        _check_resource(state, Encoding.R, qubits)
    state = distill_key_r_intermediate(state, qubits)
    _, c1, c2 = qubits
    return apply_gate(state, CNOT, [c1, c2])


def distill_key(enc: Encoding, state: Ket, qubits: Sequence[int] = (0, 1, 2), check: bool = True) -> Ket:
    if Encoding(enc) is Encoding.DP:
        return distill_key_dp(state, qubits, check)
    return distill_key_r(state, qubits, check)


def _pre_rotation(enc: Encoding, family: Family) -> list[np.ndarray]:
    """Local gates applied to (q1, q2) before the two Z measurements."""
    if family == "computational":
        return [I2, I2]
    if Encoding(enc) is Encoding.DP:
        return [H, H]
    return [I2, H]


def _classify(enc: Encoding, family: Family, bits: tuple[int, int]) -> LogicalState | TamperEvent:
    parity = bits[0] ^ bits[1]
    if Encoding(enc) is Encoding.DP and family == "computational":
        if parity == 0:
            return TamperEvent(Encoding(enc), family, bits)
        return LogicalState.L0 if bits == (0, 1) else LogicalState.L1
    return LogicalState.from_bit(parity, family)


def discriminate(
    state: Ket,
    enc: Encoding,
    family: Family,
    rng: np.random.Generator,
    qubits: Sequence[int] = (0, 1),
) -> tuple[LogicalState | TamperEvent, Ket]:
    """Identify a logical qubit from the declared family with two single-photon measurements.

    dp superposition: H on both photons maps |+>_dp to |phi-> (even parity)
    and leaves |->_dp = |psi-> (odd). r superposition: H on the second photon
    maps |+>_r to |phi-> (even) and |->_r to |psi+> (odd). r computational
    reads |phi+> / |psi-> from parity directly.

    Returns the outcome and the post-measurement state, whose measured qubits
    sit in computational basis states.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}")
    reg = Register(state, [str(i) for i in range(state.n_qubits)])
    names = [str(q) for q in qubits]
    for g, name in zip(_pre_rotation(enc, family), names):
        if g is not I2:
            reg.apply(g, name)
    bits = tuple(reg.measure(name, Z_BASIS, rng) for name in names)
    return _classify(enc, family, bits), reg.ket


def outcome_projectors(enc: Encoding, family: Family) -> dict[LogicalState | str, np.ndarray]:
    """POVM of :func:`discriminate` as 4x4 projectors, keyed by outcome ("tamper" for invalid).

    For exact (Born-rule) oracles; the sampling path never uses these.
    """
    pre = np.kron(*_pre_rotation(enc, family))
    out: dict[LogicalState | str, np.ndarray] = {}
    for b1 in (0, 1):
        for b2 in (0, 1):
            e = np.zeros(4, dtype=complex)
            e[2 * b1 + b2] = 1
            v = pre.conj().T @ e
            res = _classify(enc, family, (b1, b2))
            key = "tamper" if isinstance(res, TamperEvent) else res
            out[key] = out.get(key, 0) + np.outer(v, v.conj())
    return out


# Single-photon bases Bob uses for the sampling check, per encoding.
CHECK_BASES = {Encoding.DP: ("Z", "X"), Encoding.R: ("Z", "Ycirc")}


def sample_violation(enc: Encoding, basis: str, a: int, c1: int, c2: int) -> bool:
    """Whether outcomes (Alice's A; Bob's C1, C2) break the resource-state correlation.

    dp/Z: A=0 <-> (0,1), A=1 <-> (1,0).  dp/X: A=+ <-> even parity, A=- <-> odd.
    r/Z: A=0 <-> even parity (|phi+>), A=1 <-> odd (|psi->).
    r/Ycirc: A=+' <-> (+', -'), A=-' <-> (-', +').
    """
    enc = Encoding(enc)
    if basis == "Z" and enc is Encoding.DP:
        return (c1, c2) != (a, 1 - a)
    if basis == "X" and enc is Encoding.DP:
        return (c1 ^ c2) != a
    if basis == "Z" and enc is Encoding.R:
        return (c1 ^ c2) != a
    if basis == "Ycirc" and enc is Encoding.R:
        return (c1, c2) != (a, 1 - a)
    raise ValueError(f"basis {basis!r} is not a check basis for {enc.value}")

