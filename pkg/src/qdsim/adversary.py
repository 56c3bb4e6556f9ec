"""Eavesdropper strategies, exact detection oracles, and Monte Carlo detection estimates.

Eve only learns things by measuring or by entangling ancillas; in-flight
amplitudes are never copied into her records.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from scipy.stats import binomtest

from .logical import (
    CHECK_BASES,
    FAMILIES,
    PHI_PLUS,
    Encoding,
    Family,
    LogicalState,
    TamperEvent,
    controlled_logical_gate,
    discriminate,
    encode,
    outcome_projectors,
    prepare_resource,
    rotation_gate,
    sample_violation,
)
from .protocol import (
    Abort,
    Direction,
    KeyRegister,
    MessagePair,
    ProtocolConfig,
    Slot,
    run_dialogue,
    share_key,
)
from .statevec import (
    BASES,
    CNOT,
    Z_BASIS,
    DensityOp,
    Ket,
    Register,
    apply_gate,
    partial_trace,
    tensor,
)


class AttackKind(str, enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND_LOGICAL = "intercept_resend_logical"
    INTERCEPT_RESEND_PHYSICAL = "intercept_resend_physical"
    CAPTURE_SC = "capture_sc"
    ENTANGLE_ANCILLA = "entangle_ancilla"


@dataclass
class Attack:
    """Base attack: does nothing. ``targets`` lists the flights it touches."""

    targets: tuple[str, ...] = ("forward",)
    records: list[dict] = field(default_factory=list)
    kind = AttackKind.NONE

    def on_key_share(self, registers: list[Register], enc: Encoding, rng: np.random.Generator) -> None:
        if "key_share" in self.targets:
            self.attack_key_share(registers, enc, rng)

    def on_flight(self, block: list[Slot], direction: Direction, enc: Encoding, rng: np.random.Generator) -> None:
        if direction in self.targets:
            for pos, slot in enumerate(block):
                self.attack_slot(slot, pos, direction, enc, rng)

    def attack_key_share(self, registers: list[Register], enc: Encoding, rng: np.random.Generator) -> None:
        pass

    def attack_slot(self, slot: Slot, pos: int, direction: str, enc: Encoding, rng: np.random.Generator) -> None:
        pass


def _resend(reg: Register, ket: Ket) -> None:
    """Swap the (already measured) photons for fresh ones."""
    reg.append(ket, ["M1_new", "M2_new"])
    for lab in ("M1", "M2"):
        reg.drop(lab)
        reg.relabel(f"{lab}_new", lab)


@dataclass
class InterceptResendLogical(Attack):
    """Measure each logical qubit in a chosen family and resend what was seen."""

    strategy: Callable[[np.random.Generator], Family] | None = None
    kind = AttackKind.INTERCEPT_RESEND_LOGICAL

    def attack_slot(self, slot, pos, direction, enc, rng):
        family = self.strategy(rng) if self.strategy else FAMILIES[int(rng.integers(2))]
        reg = slot.register
        res, reg.ket = discriminate(reg.ket, enc, family, rng, reg.index("M1", "M2"))
        if isinstance(res, TamperEvent):
            # no logical reading; resend the raw photons she saw
            ket = Ket.from_bits(f"{res.bits[0]}{res.bits[1]}")
        else:
            ket = encode(enc, res)
        _resend(reg, ket)
        self.records.append({"direction": direction, "pos": pos, "family": family,
                             "seen": res.value if isinstance(res, LogicalState) else "tamper"})


@dataclass
class InterceptResendPhysical(Attack):
    """Ignore the encoding: Z-measure each photon and resend the product state."""

    kind = AttackKind.INTERCEPT_RESEND_PHYSICAL

    def attack_slot(self, slot, pos, direction, enc, rng):
        reg = slot.register
        bits = [reg.measure(lab, Z_BASIS, rng) for lab in ("M1", "M2")]
        _resend(reg, Ket.from_bits(f"{bits[0]}{bits[1]}"))
        self.records.append({"direction": direction, "pos": pos, "bits": bits})


@dataclass
class CaptureSC(Attack):
    """Keep the genuine C photons of key sharing and forward substitutes.

    ``policy``: ``"random"`` (uniform logical states), ``"entangled"`` (C half
    of Eve's own resource state) or ``"block"`` (forward nothing).
    """

    targets: tuple[str, ...] = ("key_share",)
    policy: Literal["random", "entangled", "block"] = "random"
    kind = AttackKind.CAPTURE_SC

    def __post_init__(self):
        if self.policy not in ("random", "entangled", "block"):
            raise ValueError(f"unknown substitution policy {self.policy!r}")

    def attack_key_share(self, registers, enc, rng):
        if self.policy == "block":
            raise Abort("key_share", "S_C block never arrived")
        states = list(LogicalState)
        for i, reg in enumerate(registers):
            reg.relabel("C1", f"EC1_{i}")
            reg.relabel("C2", f"EC2_{i}")
            if self.policy == "random":
                reg.append(encode(enc, states[int(rng.integers(4))]), ["C1", "C2"])
            else:
                reg.append(prepare_resource(enc), [f"EA_{i}", "C1", "C2"])
        self.records.append({"captured": len(registers), "policy": self.policy})


@dataclass
class EntangleAncilla(Attack):
    """CNOT from one traveling photon (control) onto a fresh ancilla of Eve's."""

    control: str = "M1"
    ancillas: list[tuple[Register, str, dict]] = field(default_factory=list)
    kind = AttackKind.ENTANGLE_ANCILLA

    def attack_slot(self, slot, pos, direction, enc, rng):
        reg = slot.register
        label = f"E{len(self.ancillas)}"
        reg.append(Ket.from_bits("0"), [label])
        reg.apply(CNOT, self.control, label)
        meta = {"direction": direction, "pos": pos, "index": slot.index, "decoy": slot.is_decoy}
        self.ancillas.append((reg, label, meta))

    def measure_ancillas(self, rng: np.random.Generator, direction: str = "forward") -> dict[int, int]:
        """Z-measure ancillas attached to message qubits; returns {message index: bit}."""
        out = {}
        for reg, label, meta in self.ancillas:
            if meta["decoy"] or meta["direction"] != direction:
                continue
            bit = reg.measure(label, Z_BASIS, rng)
            out[meta["index"]] = bit
            self.records.append({**meta, "ancilla": bit})
        return out


def make_attack(kind: AttackKind | str, **params) -> Attack:
    kind = AttackKind(kind)
    cls = {
        AttackKind.NONE: Attack,
        AttackKind.INTERCEPT_RESEND_LOGICAL: InterceptResendLogical,
        AttackKind.INTERCEPT_RESEND_PHYSICAL: InterceptResendPhysical,
        AttackKind.CAPTURE_SC: CaptureSC,
        AttackKind.ENTANGLE_ANCILLA: EntangleAncilla,
    }[kind]
    return cls(**params)


# -- exact oracles --------------------------------------------------------------


def _p(proj: np.ndarray, rho: np.ndarray) -> float:
    return float(np.trace(proj @ rho).real)


def _recheck_failure(enc: Encoding, prepared: LogicalState, rho: np.ndarray) -> float:
    """Probability the receiver's family measurement of ``rho`` does not return ``prepared``."""
    return 1.0 - _p(outcome_projectors(enc, prepared.family)[prepared], rho)


def decoy_detection_probability(kind: AttackKind | str, enc: Encoding) -> float:
    """Per-decoy mismatch probability, by Born-rule enumeration over the 4 decoy states."""
    kind, enc = AttackKind(kind), Encoding(enc)
    total = 0.0
    for s in LogicalState:
        psi = encode(enc, s).amps
        rho = np.outer(psi, psi.conj())
        if kind is AttackKind.INTERCEPT_RESEND_LOGICAL:
            for fam in FAMILIES:
                for seen, proj in outcome_projectors(enc, fam).items():
                    p_seen = _p(proj, rho)
                    if p_seen < 1e-15:
                        continue
                    # a tamper reading can only come from non-code input; decoys never give one
                    sent = encode(enc, seen).amps
                    total += 0.5 * p_seen * _recheck_failure(enc, s, np.outer(sent, sent.conj()))
        elif kind is AttackKind.INTERCEPT_RESEND_PHYSICAL:
            for idx in range(4):
                p_seen = abs(psi[idx]) ** 2
                if p_seen < 1e-15:
                    continue
                e = np.zeros(4)
                e[idx] = 1
                total += float(p_seen) * _recheck_failure(enc, s, np.outer(e, e))
        elif kind is AttackKind.ENTANGLE_ANCILLA:
            joint = apply_gate(tensor(Ket(psi), Ket.from_bits("0")), CNOT, [0, 2])
            total += _recheck_failure(enc, s, partial_trace(joint, [0, 1]).matrix)
        elif kind in (AttackKind.NONE, AttackKind.CAPTURE_SC):
            pass
    return total / 4


def sample_violation_probability(rho_ac: DensityOp, enc: Encoding) -> float:
    """Chance that one sampled (A, C1, C2) triple breaks the check, bases chosen uniformly."""
    enc = Encoding(enc)
    m = rho_ac.matrix
    total = 0.0
    for basis in CHECK_BASES[enc]:
        kets = BASES[basis].kets
        for a in (0, 1):
            for c1 in (0, 1):
                for c2 in (0, 1):
                    if not sample_violation(enc, basis, a, c1, c2):
                        continue
                    v = np.kron(np.kron(kets[a], kets[c1]), kets[c2])
                    total += 0.5 * float(np.vdot(v, m @ v).real)
    return total


def capture_sc_violation_probability(enc: Encoding, policy: str = "random") -> float:
    """Exact per-sample violation probability under :class:`CaptureSC`."""
    enc = Encoding(enc)
    if policy == "block":
        return 1.0
    genuine = prepare_resource(enc)
    if policy == "random":
        sub = DensityOp.mixture((0.25, encode(enc, s)) for s in LogicalState)
        rho_a = partial_trace(genuine, [0]).matrix
        return sample_violation_probability(DensityOp(np.kron(rho_a, sub.matrix)), enc)
    if policy == "entangled":
        # qubits: A, EC1, EC2 (genuine) then EA, C1, C2 (Eve's resource)
        joint = tensor(genuine, prepare_resource(enc))
        return sample_violation_probability(partial_trace(joint, [0, 4, 5]), enc)
    raise ValueError(f"unknown policy {policy!r}")


def detection_oracle(cfg: ProtocolConfig, kind: AttackKind | str, policy: str = "random") -> float:
    """Exact abort probability of one round under a single-flight attack."""
    kind = AttackKind(kind)
    if kind is AttackKind.NONE:
        return 0.0
    if kind is AttackKind.CAPTURE_SC:
        p = capture_sc_violation_probability(cfg.encoding, policy)
        return 1.0 - (1.0 - p) ** cfg.delta1
    p = decoy_detection_probability(kind, cfg.encoding)
    return 1.0 - (1.0 - p) ** cfg.decoy_count


# -- Monte Carlo ----------------------------------------------------------------


@dataclass(frozen=True)
class DetectionStats:
    trials: int
    detected: int
    rate: float
    wilson_interval: tuple[float, float]

    @classmethod
    def from_counts(cls, detected: int, trials: int) -> DetectionStats:
        ci = binomtest(detected, trials).proportion_ci(confidence_level=0.95, method="wilson")
        lo, hi = float(ci.low), float(ci.high)
        rate = detected / trials
        return cls(trials, detected, rate, (min(lo, rate), max(hi, rate)))

    def contains(self, p: float) -> bool:
        return self.wilson_interval[0] <= p <= self.wilson_interval[1]


def run_attacked_round(
    cfg: ProtocolConfig, attack: Attack, rng: np.random.Generator
) -> tuple[bool, KeyRegister | None]:
    """Key sharing plus one dialogue round; returns (aborted, key after the round)."""
    on_key = "key_share" in attack.targets
    key, tr = share_key(cfg, rng, adversary=attack if on_key else None)
    if key is None:
        return True, None
    res, _, key = run_dialogue(cfg, MessagePair.random(cfg.n, rng), key, rng,
                               adversary=None if on_key else attack)
    return res.aborted, key


def estimate_detection(
    cfg: ProtocolConfig,
    kind: AttackKind | str,
    trials: int,
    rng: np.random.Generator,
    **attack_params,
) -> DetectionStats:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    detected = 0
    for child in rng.spawn(trials):
        aborted, _ = run_attacked_round(cfg, make_attack(kind, **attack_params), child)
        detected += aborted
    return DetectionStats.from_counts(detected, trials)


# -- key reuse study ------------------------------------------------------------


def _evolve(rho: np.ndarray, gate: np.ndarray, targets: Sequence[int], n: int) -> np.ndarray:
    """rho -> U rho U^dagger with U acting on ``targets``."""
    k = len(targets)
    g = gate.reshape((2,) * (2 * k))
    t = rho.reshape((2,) * (2 * n))
    t = np.moveaxis(np.tensordot(g, t, axes=(list(range(k, 2 * k)), list(targets))), list(range(k)), list(targets))
    bra = [n + q for q in targets]
    t = np.moveaxis(np.tensordot(g.conj(), t, axes=(list(range(k, 2 * k)), bra)), list(range(k)), bra)
    return t.reshape(rho.shape)


def ancilla_key_information(enc: Encoding, theta: float, rotations: int, m: int = 0) -> float:
    """Mutual information (bits) between Z readings of Alice's key qubit and Eve's ancilla.

    Eve CNOTs photon ``M1`` of one ciphertext onto an ancilla, Bob decrypts and
    measures, then the parties apply ``rotations`` key rotations by ``theta``.
    """
    enc = Encoding(enc)
    # qubits: A, B, M1, M2, E
    psi = tensor(tensor(Ket(PHI_PLUS), encode(enc, LogicalState.from_bit(m))), Ket.from_bits("0"))
    psi = apply_gate(psi, controlled_logical_gate(enc), [0, 2, 3])
    psi = apply_gate(psi, CNOT, [2, 4])
    psi = apply_gate(psi, controlled_logical_gate(enc, inverse=True), [1, 2, 3])
    rho = partial_trace(psi, [0, 1, 4]).matrix  # Bob's measure-and-discard of M
    r = rotation_gate(theta)
    for _ in range(rotations):
        rho = _evolve(rho, r, [0], 3)
        rho = _evolve(rho, r, [1], 3)
    joint = partial_trace(DensityOp((rho + rho.conj().T) / 2), [0, 2]).matrix.diagonal().real.reshape(2, 2)
    pa, pe = joint.sum(1), joint.sum(0)
    nz = joint > 1e-15
    return float((joint[nz] * np.log2(joint[nz] / np.outer(pa, pe)[nz])).sum())


def key_correlation_curve(enc: Encoding, thetas: Sequence[float], rotations: Sequence[int]) -> np.ndarray:
    """Grid of :func:`ancilla_key_information`, shape (len(thetas), len(rotations))."""
    return np.array([[ancilla_key_information(enc, t, r) for r in rotations] for t in thetas])
