"""Two-party dialogue engine: key sharing, encrypted forward flight, decrypt and
re-encode, announce, and key rotation for reuse.

Each key pair ``i`` lives in its own :class:`~qdsim.statevec.Register` labelled
``A`` (Alice) and ``B`` (Bob). While traveling qubit ``i`` is encrypted under
that pair, its photons ``M1``/``M2`` are appended to the same register. Decoys
carry their own two-qubit registers. Pairs never interact, so this
per-slot factorisation is exact.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Literal, Protocol, Sequence

import numpy as np

from .logical import (
    CHECK_BASES,
    PHI_PLUS,
    Encoding,
    LogicalState,
    TamperEvent,
    controlled_logical_gate,
    discriminate,
    distill_key,
    encode,
    logical_gate,
    prepare_resource,
    rotation_gate,
    sample_violation,
)
from .noise import NoiseModel, transmit_registers
from .statevec import BASES, DensityOp, Ket, Register, state_fidelity

log = logging.getLogger(__name__)

KEY_FIDELITY_TOL = 1e-9
_ANGLE_TOL = 1e-9
_QUARTER = math.pi / 4

Direction = Literal["key_share", "forward", "return"]


class Abort(Exception):
    """A security check failed; the stage identifies which one."""

    def __init__(self, stage: str, detail: str = ""):
        super().__init__(f"aborted at {stage}" + (f": {detail}" if detail else ""))
        self.stage = stage
        self.detail = detail


def forbidden_key_angle(theta: float) -> bool:
    """True when ``theta`` lies within 1e-9 of k*pi +- pi/4."""
    r = math.remainder(theta - _QUARTER, math.pi / 2)
    return abs(r) < _ANGLE_TOL


@dataclass(frozen=True)
class ProtocolConfig:
    encoding: Encoding = Encoding.DP
    n: int = 16
    delta1: int = 16
    decoy_count: int = 16
    theta_key: float = math.pi / 8
    noise: NoiseModel | None = None
    seed: int | None = None
    # "literal" decrypts with CU1 itself, which leaves the key in |phi->
    decryption: Literal["inverse", "literal"] = "inverse"

    def __post_init__(self):
        object.__setattr__(self, "encoding", Encoding(self.encoding))
        if self.noise is None:
            kind = "dephasing" if self.encoding is Encoding.DP else "rotation"
            object.__setattr__(self, "noise", NoiseModel(kind))
        if self.n < 1 or self.delta1 < 1 or self.decoy_count < 0:
            raise ValueError("need n >= 1, delta1 >= 1, decoy_count >= 0")
        if forbidden_key_angle(self.theta_key):
            raise ValueError(
                f"theta_key={self.theta_key} is forbidden: the key rotation angle "
                "must satisfy theta != k*pi +- pi/4"
            )
        if self.decryption not in ("inverse", "literal"):
            raise ValueError(f"unknown decryption mode {self.decryption!r}")
        if math.isclose(math.remainder(self.theta_key, math.pi), 0.0, abs_tol=_ANGLE_TOL):
            warnings.warn("theta_key is a multiple of pi: the key rotation is a null rotation", stacklevel=2)


@dataclass
class KeyRegister:
    encoding: Encoding
    pairs: list[Register]
    rotation_count: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    def fidelities(self) -> np.ndarray:
        """Fidelity of each isolated (A, B) pair with |phi+>."""
        target = Ket(PHI_PLUS)
        return np.array([state_fidelity(p.reduced("A", "B"), target) for p in self.pairs])

    @classmethod
    def ideal(cls, enc: Encoding, n: int) -> KeyRegister:
        """N perfect pairs, skipping the sharing step."""
        return cls(Encoding(enc), [Register(Ket(PHI_PLUS), ["A", "B"]) for _ in range(n)])


@dataclass(frozen=True)
class MessagePair:
    j: tuple[int, ...]  # Alice's bits
    k: tuple[int, ...]  # Bob's bits

    def __post_init__(self):
        object.__setattr__(self, "j", tuple(int(b) for b in self.j))
        object.__setattr__(self, "k", tuple(int(b) for b in self.k))
        if len(self.j) != len(self.k):
            raise ValueError("message lengths differ")
        if any(b not in (0, 1) for b in self.j + self.k):
            raise ValueError("message bits must be 0 or 1")

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> MessagePair:
        return cls(tuple(rng.integers(0, 2, n)), tuple(rng.integers(0, 2, n)))


_PUBLIC_KINDS = {"sample_check", "decoy_check", "announcement", "abort"}


@dataclass
class Transcript:
    """Ordered event log. Only sampling checks, decoy checks, announcements and
    aborts are public; everything else is simulator bookkeeping."""

    events: list[dict[str, Any]] = field(default_factory=list)
    _blocks: int = 0

    def record(self, kind: str, **data: Any) -> None:
        self.events.append({"seq": len(self.events), "kind": kind, **data})

    def next_block(self) -> int:
        self._blocks += 1
        return self._blocks - 1

    def extend(self, other: Transcript) -> None:
        for ev in other.events:
            self.record(**{k: v for k, v in ev.items() if k != "seq"})
        self._blocks += other._blocks

    @property
    def aborted(self) -> bool:
        return any(ev["kind"] == "abort" for ev in self.events)

    @property
    def abort_stage(self) -> str | None:
        for ev in self.events:
            if ev["kind"] == "abort":
                return ev["stage"]
        return None

    def public_view(self) -> list[dict[str, Any]]:
        return [ev for ev in self.events if ev["kind"] in _PUBLIC_KINDS]

    def to_json(self, public_only: bool = False) -> str:
        events = self.public_view() if public_only else self.events
        return json.dumps({"events": events}, sort_keys=True, separators=(",", ":"))


@dataclass
class Slot:
    """One logical qubit in a transmitted block (photons ``M1``, ``M2`` of ``register``)."""

    register: Register
    index: int | None = None  # message position, None for decoys
    decoy: LogicalState | None = None

    @property
    def is_decoy(self) -> bool:
        return self.decoy is not None


class Adversary(Protocol):
    def on_key_share(self, registers: list[Register], enc: Encoding, rng: np.random.Generator) -> None: ...

    def on_flight(self, block: list[Slot], direction: Direction, enc: Encoding, rng: np.random.Generator) -> None: ...


@dataclass
class DialogueResult:
    alice_decoded: list[int] | None  # Alice's reading of k
    bob_decoded: list[int] | None  # Bob's reading of j
    aborted: bool = False
    stage: str | None = None
    announcements: list[int] | None = None
    ciphertext_states: list[DensityOp] | None = None
    m_record: list[int] | None = field(default=None, repr=False)  # Alice's private initial states


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Per-trial stream: SeedSequence keyed by (master seed, trial counter)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


# -- key sharing --------------------------------------------------------------


def share_key(
    cfg: ProtocolConfig,
    rng: np.random.Generator,
    channel: NoiseModel | None = None,
    adversary: Adversary | None = None,
    transcript: Transcript | None = None,
) -> tuple[KeyRegister | None, Transcript]:
    """Distribute ``cfg.n`` EPR pairs; returns ``(None, transcript)`` on abort."""
    tr = transcript if transcript is not None else Transcript()
    channel = channel or cfg.noise
    enc = cfg.encoding
    total = cfg.n + cfg.delta1
    regs = [Register(prepare_resource(enc), ["A", "C1", "C2"]) for _ in range(total)]
    try:
        block_id = tr.next_block()
        draw = transmit_registers(((r, ("C1", "C2")) for r in regs), channel, rng, block_id)
        tr.record("transmission", direction="key_share", block_id=block_id,
                  angle=draw.angle, size=total)
        if adversary is not None:
            adversary.on_key_share(regs, enc, rng)
        samples = set(_sampling_check(cfg, regs, rng, tr))
    except Abort as exc:
        tr.record("abort", stage=exc.stage, detail=exc.detail)
        return None, tr

    pairs = []
    for pos, reg in enumerate(regs):
        if pos in samples:
            continue
        bare = reg.ket.n_qubits == 3
        reg.ket = distill_key(enc, reg.ket, reg.index("A", "C1", "C2"), check=bare and adversary is None)
        try:
            reg.drop("C2")
        except ValueError:
            reg.relabel("C2", "B_aux")
        reg.relabel("C1", "B")
        pairs.append(reg)
    return KeyRegister(enc, pairs), tr


def _sampling_check(cfg: ProtocolConfig, regs: list[Register], rng: np.random.Generator, tr: Transcript) -> list[int]:
    enc = cfg.encoding
    positions = sorted(int(p) for p in rng.choice(len(regs), size=cfg.delta1, replace=False))
    bases, alice, bob, bad = [], [], [], []
    for pos in positions:
        basis = CHECK_BASES[enc][int(rng.integers(2))]
        reg = regs[pos]
        c1 = reg.measure("C1", BASES[basis], rng)
        c2 = reg.measure("C2", BASES[basis], rng)
        a = reg.measure("A", BASES[basis], rng)
        bases.append(basis)
        alice.append(a)
        bob.append([c1, c2])
        bad.append(sample_violation(enc, basis, a, c1, c2))
    tr.record("sample_check", positions=positions, bases=bases, alice=alice, bob=bob,
              violations=int(sum(bad)))
    if any(bad):
        raise Abort("key_share", f"{sum(bad)} of {len(bad)} samples broke the correlation")
    return positions


# -- forward flight and re-encoding -------------------------------------------


def _insert_decoys(slots: list[Slot], count: int, enc: Encoding, rng: np.random.Generator) -> list[Slot]:
    states = list(LogicalState)
    for _ in range(count):
        s = states[int(rng.integers(4))]
        pos = int(rng.integers(len(slots) + 1))
        slots.insert(pos, Slot(Register(encode(enc, s), ["M1", "M2"]), decoy=s))
    return slots


def decoy_layout(block: Sequence[Slot]) -> list[tuple[int, LogicalState]]:
    return [(pos, s.decoy) for pos, s in enumerate(block) if s.is_decoy]


def alice_prepare_and_encrypt(
    cfg: ProtocolConfig, key: KeyRegister, rng: np.random.Generator, encrypt: bool = True
) -> tuple[list[Slot], list[int]]:
    """Prepare uniformly random |m_i>, encrypt each under pair i, mix in decoys."""
    if len(key) != cfg.n:
        raise ValueError(f"key holds {len(key)} pairs, config needs {cfg.n}")
    enc = cfg.encoding
    cu = controlled_logical_gate(enc)
    m = [int(b) for b in rng.integers(0, 2, cfg.n)]
    slots = []
    for i, (reg, bit) in enumerate(zip(key.pairs, m)):
        reg.append(encode(enc, LogicalState.from_bit(bit)), ["M1", "M2"])
        if encrypt:
            reg.apply(cu, "A", "M1", "M2")
        slots.append(Slot(reg, index=i))
    return _insert_decoys(slots, cfg.decoy_count, enc, rng), m


def measure_decoys(
    block: Sequence[Slot], enc: Encoding, rng: np.random.Generator
) -> dict[int, LogicalState | TamperEvent]:
    """Receiver measures each decoy in the family the sender announces for it."""
    outcomes = {}
    for pos, decoy in decoy_layout(block):
        reg = block[pos].register
        res, reg.ket = discriminate(reg.ket, enc, decoy.family, rng, reg.index("M1", "M2"))
        outcomes[pos] = res
    return outcomes


def check_decoys(
    layout: Sequence[tuple[int, LogicalState]], outcomes: dict[int, LogicalState | TamperEvent]
) -> bool:
    return all(outcomes.get(pos) == state for pos, state in layout)


def _fly(
    block: list[Slot],
    direction: Direction,
    cfg: ProtocolConfig,
    channel: NoiseModel,
    adversary: Adversary | None,
    rng: np.random.Generator,
    tr: Transcript,
    snapshots: list[DensityOp] | None = None,
) -> list[Slot]:
    block_id = tr.next_block()
    draw = transmit_registers(((s.register, ("M1", "M2")) for s in block), channel, rng, block_id)
    tr.record("transmission", direction=direction, block_id=block_id, angle=draw.angle, size=len(block))
    if snapshots is not None:
        snapshots.extend(s.register.reduced("M1", "M2") for s in block if not s.is_decoy)
    if adversary is not None:
        adversary.on_flight(block, direction, cfg.encoding, rng)

    layout = decoy_layout(block)
    outcomes = measure_decoys(block, cfg.encoding, rng)
    passed = check_decoys(layout, outcomes)
    tr.record(
        "decoy_check",
        direction=direction,
        positions=[p for p, _ in layout],
        families=[s.family for _, s in layout],
        outcomes=[o.value if isinstance(o, LogicalState) else "tamper" for o in outcomes.values()],
        passed=passed,
    )
    if not passed:
        raise Abort(f"{direction}_decoys")
    return [s for s in block if not s.is_decoy]


def bob_decrypt_reencode(
    cfg: ProtocolConfig,
    key: KeyRegister,
    block: Sequence[Slot],
    k_bits: Sequence[int],
    rng: np.random.Generator,
    encrypt: bool = True,
) -> tuple[list[Slot], list[int]]:
    """Decrypt with pair i, read m_i, prepare a fresh U_{k_i}|m_i>, add decoys.

    Decryption uses the inverse controlled gate so the pair returns to |phi+>;
    applying CU1 a second time (``cfg.decryption == "literal"``) multiplies the
    |11> branch by U1^2 = -1 and leaves the pair in |phi->.
    """
    enc = cfg.encoding
    dec = controlled_logical_gate(enc, inverse=cfg.decryption == "inverse")
    fresh, m_seen = [], []
    for slot in sorted((s for s in block if not s.is_decoy), key=lambda s: s.index):
        reg = slot.register
        if reg is not key.pairs[slot.index]:
            raise ValueError("traveling qubit is not bound to its key pair")
        if encrypt:
            reg.apply(dec, "B", "M1", "M2")
        res, reg.ket = discriminate(reg.ket, enc, "computational", rng, reg.index("M1", "M2"))
        reg.drop("M1")
        reg.drop("M2")
        if isinstance(res, TamperEvent):
            raise Abort("decrypt", f"out-of-code outcome {res.bits}")
        m_seen.append(res.bit)
        out = Register(encode(enc, res), ["M1", "M2"])
        out.apply(logical_gate(enc, int(k_bits[slot.index])), "M1", "M2")
        fresh.append(Slot(out, index=slot.index))
    return _insert_decoys(fresh, cfg.decoy_count, enc, rng), m_seen


# -- announcement -------------------------------------------------------------


def alice_encode_announce(
    cfg: ProtocolConfig, block: Sequence[Slot], j_bits: Sequence[int], rng: np.random.Generator
) -> list[int]:
    """Apply U_{j_i}, measure computationally, return the public bits."""
    enc = cfg.encoding
    ann = []
    for slot in sorted((s for s in block if not s.is_decoy), key=lambda s: s.index):
        reg = slot.register
        reg.apply(logical_gate(enc, int(j_bits[slot.index])), "M1", "M2")
        res, reg.ket = discriminate(reg.ket, enc, "computational", rng, reg.index("M1", "M2"))
        if isinstance(res, TamperEvent):
            raise Abort("announce", f"out-of-code outcome {res.bits}")
        ann.append(res.bit)
    return ann


def decode_bits(
    role: Literal["alice", "bob"],
    own_bits: Sequence[int],
    m_bits: Sequence[int],
    announcements: Sequence[int],
) -> list[int]:
    """Announced = m ^ j ^ k, so each side strips its own bit and m."""
    if role not in ("alice", "bob"):
        raise ValueError(f"unknown role {role!r}")
    return [int(o) ^ int(m) ^ int(a) for o, m, a in zip(own_bits, m_bits, announcements, strict=True)]


# -- key reuse ----------------------------------------------------------------


def rotate_key(key: KeyRegister, theta_key: float) -> KeyRegister:
    """Apply R(theta) to every A_i and B_i, in place."""
    if forbidden_key_angle(theta_key):
        raise ValueError(f"theta_key={theta_key} violates theta != k*pi +- pi/4")
    r = rotation_gate(theta_key)
    for reg in key.pairs:
        reg.apply(r, "A")
        reg.apply(r, "B")
    key.rotation_count += 1
    return key


def run_dialogue(
    cfg: ProtocolConfig,
    msgs: MessagePair,
    key: KeyRegister,
    rng: np.random.Generator,
    channel: NoiseModel | None = None,
    adversary: Adversary | None = None,
    introspect: bool = False,
    encrypt: bool = True,
) -> tuple[DialogueResult, Transcript, KeyRegister]:
    """One dialogue round, ending with the key rotation. ``key`` is updated in place and returned rotated.

    After an abort the key still holds the in-flight photons and must be
    discarded; the parties restart from key sharing.
    """
    if len(msgs.j) != cfg.n:
        raise ValueError("message length does not match cfg.n")
    channel = channel or cfg.noise
    tr = Transcript()
    snaps: list[DensityOp] | None = [] if introspect else None
    try:
        block, m = alice_prepare_and_encrypt(cfg, key, rng, encrypt)
        block = _fly(block, "forward", cfg, channel, adversary, rng, tr, snaps)
        back, m_seen = bob_decrypt_reencode(cfg, key, block, msgs.k, rng, encrypt)
        back = _fly(back, "return", cfg, channel, adversary, rng, tr)
        ann = alice_encode_announce(cfg, back, msgs.j, rng)
    except Abort as exc:
        log.debug("round aborted: %s", exc)
        tr.record("abort", stage=exc.stage, detail=exc.detail)
        return DialogueResult(None, None, True, exc.stage, ciphertext_states=snaps), tr, key
    tr.record("announcement", bits=ann)
    result = DialogueResult(
        alice_decoded=decode_bits("alice", msgs.j, m, ann),
        bob_decoded=decode_bits("bob", msgs.k, m_seen, ann),
        announcements=ann,
        ciphertext_states=snaps,
        m_record=m,
    )
    rotate_key(key, cfg.theta_key)
    tr.record("key_rotation", theta=cfg.theta_key, count=key.rotation_count)
    return result, tr, key
