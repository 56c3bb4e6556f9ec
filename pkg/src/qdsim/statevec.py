"""Dense state-vector and density-operator engine.

Qubit 0 is the most significant bit of the amplitude index. Global phases are
kept exactly; use :func:`equal_up_to_phase` to compare states.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ALGEBRA_TOL = 1e-12
EIGEN_TOL = 1e-10
_NORM_GUARD = 1e-9

GateMatrix = np.ndarray

_R2 = 1 / np.sqrt(2)

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
# -i*sigma_y = |1><0| - |0><1|, a real rotation by pi/2
NEG_IY = np.array([[0, -1], [1, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) * _R2
S = np.array([[1, 0], [0, 1j]], dtype=complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
KET_PLUS = (KET0 + KET1) * _R2
KET_MINUS = (KET0 - KET1) * _R2
# circular polarisations (|0> +- i|1>)/sqrt2
KET_PLUS_I = (KET0 + 1j * KET1) * _R2
KET_MINUS_I = (KET0 - 1j * KET1) * _R2


@dataclass(frozen=True, eq=False)
class Ket:
    """Normalized pure state of ``n_qubits`` qubits."""

    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size < 2 or amps.size != 1 << n:
            raise ValueError(f"amplitude count {amps.size} is not 2^n with n >= 1")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > _NORM_GUARD:
            raise ValueError(f"state is not normalized (norm={norm})")
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    @property
    def n_qubits(self) -> int:
        return self.amps.size.bit_length() - 1

    @classmethod
    def from_bits(cls, bits: str) -> Ket:
        """Computational basis state, e.g. ``Ket.from_bits("01")``."""
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    @classmethod
    def product(cls, *singles: np.ndarray) -> Ket:
        out = np.array([1.0], dtype=complex)
        for v in singles:
            out = np.kron(out, v)
        return cls(out)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def __mul__(self, phase: complex) -> Ket:
        return Ket(self.amps * phase)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Ket(n_qubits={self.n_qubits})"


@dataclass(frozen=True)
class SingleQubitBasis:
    """Two orthonormal kets; measuring ``kets[b]`` yields outcome bit ``b``."""

    label: str
    kets: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        gram = np.array([[np.vdot(a, b) for b in self.kets] for a in self.kets])
        if not np.allclose(gram, np.eye(2), atol=ALGEBRA_TOL):
            raise ValueError(f"basis {self.label!r} is not orthonormal")


Z_BASIS = SingleQubitBasis("Z", (KET0, KET1))
X_BASIS = SingleQubitBasis("X", (KET_PLUS, KET_MINUS))
Y_BASIS = SingleQubitBasis("Ycirc", (KET_PLUS_I, KET_MINUS_I))
BASES = {b.label: b for b in (Z_BASIS, X_BASIS, Y_BASIS)}


@dataclass(frozen=True, eq=False)
class DensityOp:
    """Density operator on ``n_qubits`` qubits (Hermitian, unit trace, PSD)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        d = m.shape[0]
        if m.shape != (d, d) or d < 2 or d & (d - 1):
            raise ValueError(f"bad density matrix shape {m.shape}")
        if not np.allclose(m, m.conj().T, atol=ALGEBRA_TOL):
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > _NORM_GUARD:
            raise ValueError(f"density matrix trace is {np.trace(m).real}")
        if np.linalg.eigvalsh(m).min() < -EIGEN_TOL:
            raise ValueError("density matrix has a negative eigenvalue")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def n_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @classmethod
    def from_ket(cls, ket: Ket) -> DensityOp:
        return cls(np.outer(ket.amps, ket.amps.conj()))

    @classmethod
    def mixture(cls, weighted: Iterable[tuple[float, DensityOp | Ket]]) -> DensityOp:
        total = None
        for p, item in weighted:
            m = item.matrix if isinstance(item, DensityOp) else np.outer(item.amps, item.amps.conj())
            total = p * m if total is None else total + p * m
        return cls(total)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def is_unitary(gate: GateMatrix, tol: float = ALGEBRA_TOL) -> bool:
    gate = np.asarray(gate)
    return np.allclose(gate @ gate.conj().T, np.eye(gate.shape[0]), atol=tol)


def gate_arity(gate: GateMatrix) -> int:
    d = np.asarray(gate).shape[0]
    if np.asarray(gate).shape != (d, d) or d < 2 or d & (d - 1):
        raise ValueError(f"bad gate shape {np.asarray(gate).shape}")
    return d.bit_length() - 1


def tensor(a: Ket, b: Ket) -> Ket:
    """Product state; qubits of ``b`` follow those of ``a``."""
    return Ket(np.kron(a.amps, b.amps))


def _check_targets(n: int, targets: Sequence[int]) -> list[int]:
    targets = [int(t) for t in targets]
    if len(set(targets)) != len(targets):
        raise ValueError(f"repeated target qubits {targets}")
    for t in targets:
        if not 0 <= t < n:
            raise IndexError(f"qubit {t} out of range for {n}-qubit state")
    return targets


def apply_gate(state: Ket, gate: GateMatrix, targets: Sequence[int]) -> Ket:
    """Apply ``gate`` to ``targets`` (in gate-index order), identity elsewhere."""
    n = state.n_qubits
    k = gate_arity(gate)
    if k != len(targets):
        raise ValueError(f"gate arity {k} does not match {len(targets)} targets")
    targets = _check_targets(n, targets)
    psi = state.amps.reshape((2,) * n)
    g = np.asarray(gate, dtype=complex).reshape((2,) * (2 * k))
    out = np.tensordot(g, psi, axes=(list(range(k, 2 * k)), targets))
    out = np.moveaxis(out, list(range(k)), targets)
    return Ket(out.reshape(-1))


def measure_qubit(
    state: Ket, qubit: int, basis: SingleQubitBasis, rng: np.random.Generator
) -> tuple[int, Ket]:
    """Projective measurement of one qubit; returns (bit, collapsed state)."""
    n = state.n_qubits
    (qubit,) = _check_targets(n, [qubit])
    psi = state.amps.reshape((2,) * n)
    bra = np.array(basis.kets).conj()
    # branch[b] = (<basis_b| (x) I) psi, with the measured axis removed
    branch = np.tensordot(bra, psi, axes=([1], [qubit]))
    probs = np.array([np.vdot(branch[b], branch[b]).real for b in (0, 1)])
    bit = int(rng.random() >= probs[0])
    if probs[bit] <= 0.0:
        raise RuntimeError("selected a zero-probability measurement branch")
    rest = branch[bit] / np.sqrt(probs[bit])
    collapsed = np.multiply.outer(basis.kets[bit], rest)
    collapsed = np.moveaxis(collapsed, 0, qubit)
    return bit, Ket(collapsed.reshape(-1))


def outcome_probabilities(state: Ket, qubit: int, basis: SingleQubitBasis) -> np.ndarray:
    """Born probabilities of the two outcomes, without sampling."""
    rho = partial_trace(state, [qubit]).matrix
    return np.array([np.vdot(k, rho @ k).real for k in basis.kets])


def equal_up_to_phase(a: Ket, b: Ket, tol: float = ALGEBRA_TOL) -> bool:
    if a.n_qubits != b.n_qubits:
        raise ValueError("states have different qubit counts")
    overlap = np.vdot(b.amps, a.amps)
    if abs(overlap) < tol:
        return False
    lam = overlap / abs(overlap)
    return bool(np.linalg.norm(a.amps - lam * b.amps) < tol)


def fidelity(a: Ket, b: Ket) -> float:
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def state_fidelity(rho: DensityOp, target: Ket) -> float:
    """<target| rho |target> for a pure target."""
    return float(np.vdot(target.amps, rho.matrix @ target.amps).real)


def partial_trace(state: Ket | DensityOp, keep: Sequence[int]) -> DensityOp:
    """Reduced density operator on ``keep`` (output qubits ordered as given)."""
    if not len(keep):
        raise ValueError("keep set is empty")
    n = state.n_qubits
    keep = _check_targets(n, keep)
    rest = [q for q in range(n) if q not in keep]
    dk = 1 << len(keep)
    if isinstance(state, Ket):
        psi = np.transpose(state.amps.reshape((2,) * n), keep + rest).reshape(dk, -1)
        rho = psi @ psi.conj().T
    else:
        t = state.matrix.reshape((2,) * (2 * n))
        t = np.transpose(t, keep + rest + [n + q for q in keep] + [n + q for q in rest])
        dr = 1 << len(rest)
        rho = np.einsum("ajbj->ab", t.reshape(dk, dr, dk, dr))
    return DensityOp((rho + rho.conj().T) / 2)


def trace_distance(a: DensityOp, b: DensityOp) -> float:
    return float(0.5 * np.abs(np.linalg.eigvalsh(a.matrix - b.matrix)).sum())


def von_neumann_entropy(rho: DensityOp) -> float:
    """Entropy in bits."""
    ev = rho.eigenvalues()
    ev = ev[ev > 1e-15]
    return float(-(ev * np.log2(ev)).sum())


class Register:
    """A Ket whose qubits carry names.

    A per-run workspace: the held Ket is replaced on every operation, so the
    register itself is mutable while the states it passes around are not.
    """

    def __init__(self, ket: Ket, labels: Sequence[str]):
        if len(labels) != ket.n_qubits or len(set(labels)) != len(labels):
            raise ValueError(f"labels {labels} do not fit a {ket.n_qubits}-qubit state")
        self.ket = ket
        self.labels = list(labels)

    def __repr__(self) -> str:
        return f"Register({self.labels})"

    def index(self, *labels: str) -> list[int]:
        return [self.labels.index(lab) for lab in labels]

    def has(self, label: str) -> bool:
        return label in self.labels

    def apply(self, gate: GateMatrix, *labels: str) -> None:
        self.ket = apply_gate(self.ket, gate, self.index(*labels))

    def measure(self, label: str, basis: SingleQubitBasis, rng: np.random.Generator) -> int:
        bit, self.ket = measure_qubit(self.ket, self.index(label)[0], basis, rng)
        return bit

    def append(self, ket: Ket, labels: Sequence[str]) -> None:
        for lab in labels:
            if lab in self.labels:
                raise ValueError(f"label {lab!r} already present")
        self.ket = tensor(self.ket, ket)
        self.labels.extend(labels)

    def relabel(self, old: str, new: str) -> None:
        if new in self.labels:
            raise ValueError(f"label {new!r} already present")
        self.labels[self.labels.index(old)] = new

    def drop(self, label: str) -> int:
        """Remove a qubit sitting in a computational basis state; returns its bit."""
        q = self.index(label)[0]
        n = self.ket.n_qubits
        if n == 1:
            raise ValueError("cannot drop the last qubit of a register")
        psi = np.moveaxis(self.ket.amps.reshape((2,) * n), q, 0).reshape(2, -1)
        weights = np.linalg.norm(psi, axis=1) ** 2
        bit = int(np.argmax(weights))
        if weights[1 - bit] > _NORM_GUARD:
            raise ValueError(f"qubit {label!r} is not in a computational basis state")
        self.ket = Ket(psi[bit] / np.sqrt(weights[bit]))
        del self.labels[q]
        return bit

    def reduced(self, *labels: str) -> DensityOp:
        return partial_trace(self.ket, self.index(*labels))
