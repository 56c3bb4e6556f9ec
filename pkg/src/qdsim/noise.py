"""Collective channel noise: one unknown angle per transmitted block, applied to every qubit in it."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .statevec import Ket, Register, apply_gate

NoiseKind = Literal["dephasing", "rotation", "ideal"]
TWO_PI = 2 * np.pi


def dephasing_matrix(phi: float) -> np.ndarray:
    return np.diag([1.0, np.exp(1j * phi)]).astype(complex)


def rotation_matrix(theta: float) -> np.ndarray:
    # U|0> = cos|0> + sin|1>, U|1> = -sin|0> + cos|1>
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def apply_dephasing(state: Ket, qubits: Sequence[int], phi: float) -> Ket:
    u = dephasing_matrix(phi)
    for q in qubits:
        state = apply_gate(state, u, [q])
    return state


def apply_rotation(state: Ket, qubits: Sequence[int], theta: float) -> Ket:
    u = rotation_matrix(theta)
    for q in qubits:
        state = apply_gate(state, u, [q])
    return state


@dataclass(frozen=True)
class NoiseModel:
    """Channel kind plus the law the per-block angle is drawn from.

    ``law`` is ``"uniform"`` (i.i.d. over [0, 2pi)), ``"fixed:<radians>"``, or
    ``"list:<a>,<b>,..."`` (uniform choice from a finite set).
    """

    kind: NoiseKind = "ideal"
    law: str = "uniform"

    def __post_init__(self):
        if self.kind not in ("dephasing", "rotation", "ideal"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        self._values()  # validates the law string

    def _values(self) -> tuple[float, ...] | None:
        if self.law == "uniform":
            return None
        head, _, tail = self.law.partition(":")
        try:
            if head == "fixed":
                return (float(tail),)
            if head == "list" and tail:
                return tuple(float(v) for v in tail.split(","))
        except ValueError:
            pass
        raise ValueError(f"bad noise law {self.law!r}")

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "ideal":
            return 0.0
        values = self._values()
        if values is None:
            return float(rng.uniform(0.0, TWO_PI))
        return values[int(rng.integers(len(values)))] if len(values) > 1 else values[0]

    def channel(self, angle: float) -> np.ndarray:
        if self.kind == "dephasing":
            return dephasing_matrix(angle)
        if self.kind == "rotation":
            return rotation_matrix(angle)
        return np.eye(2, dtype=complex)


IDEAL = NoiseModel("ideal")


@dataclass(frozen=True)
class NoiseDraw:
    angle: float
    block_id: int


def transmit_block(
    state: Ket,
    block_qubits: Sequence[int],
    model: NoiseModel,
    rng: np.random.Generator,
    block_id: int = 0,
) -> tuple[Ket, NoiseDraw]:
    if not len(block_qubits):
        raise ValueError("empty block")
    angle = model.draw(rng)
    u = model.channel(angle)
    for q in block_qubits:
        state = apply_gate(state, u, [q])
    return state, NoiseDraw(angle, block_id)


def transmit_registers(
    items: Iterable[tuple[Register, Sequence[str]]],
    model: NoiseModel,
    rng: np.random.Generator,
    block_id: int = 0,
) -> NoiseDraw:
    """Send qubits held in several registers as one block (one shared draw)."""
    angle = model.draw(rng)
    if model.kind != "ideal":
        u = model.channel(angle)
        for reg, labels in items:
            for lab in labels:
                reg.apply(u, lab)
    return NoiseDraw(angle, block_id)
