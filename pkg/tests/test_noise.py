import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdsim.logical import Encoding, LogicalState, encode
from qdsim.noise import (
    IDEAL,
    NoiseModel,
    apply_dephasing,
    apply_rotation,
    dephasing_matrix,
    rotation_matrix,
    transmit_block,
    transmit_registers,
)
from qdsim.statevec import KET0, KET1, Ket, Register, equal_up_to_phase, is_unitary

angles = st.floats(0, 2 * np.pi, allow_nan=False)


@given(angles)
def test_channel_matrices(theta):
    assert is_unitary(dephasing_matrix(theta))
    assert is_unitary(rotation_matrix(theta))
    c, s = np.cos(theta), np.sin(theta)
    assert np.allclose(rotation_matrix(theta) @ KET0, c * KET0 + s * KET1)
    assert np.allclose(rotation_matrix(theta) @ KET1, -s * KET0 + c * KET1)


@given(angles)
def test_helpers_act_on_every_listed_qubit(phi):
    psi = Ket.from_bits("11")
    out = apply_dephasing(psi, [0, 1], phi)
    assert np.isclose(out.amps[3], np.exp(2j * phi))
    rot = apply_rotation(Ket.from_bits("0"), [0], phi)
    assert np.allclose(rot.amps, [np.cos(phi), np.sin(phi)])


@pytest.mark.parametrize(
    "law, expected",
    [("fixed:0.25", {0.25}), ("list:0.1,0.2", {0.1, 0.2})],
)
def test_laws(law, expected, rng):
    model = NoiseModel("rotation", law)
    assert {model.draw(rng) for _ in range(50)} == expected


def test_uniform_law_range(rng):
    draws = [NoiseModel("dephasing").draw(rng) for _ in range(500)]
    assert 0 <= min(draws) and max(draws) < 2 * np.pi
    assert np.std(draws) > 1.0


@pytest.mark.parametrize("law", ["fixed:", "fixed:abc", "list:", "gaussian"])
def test_bad_law_rejected(law):
    with pytest.raises(ValueError):
        NoiseModel("dephasing", law)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        NoiseModel("depolarizing")


def test_ideal_channel_is_identity(rng):
    psi = Ket.from_bits("01")
    out, draw = transmit_block(psi, [0, 1], IDEAL, rng)
    assert draw.angle == 0.0
    assert np.allclose(out.amps, psi.amps)


def test_block_shares_one_angle(rng):
    """A product of code words survives only if every qubit saw the same angle."""
    regs = [Register(encode(Encoding.R, s), ["M1", "M2"]) for s in LogicalState]
    before = [r.ket for r in regs]
    draw = transmit_registers(((r, ("M1", "M2")) for r in regs), NoiseModel("rotation"), rng, block_id=7)
    assert draw.block_id == 7
    for r, b in zip(regs, before):
        assert equal_up_to_phase(r.ket, b)


def test_transmit_block_rejects_empty(rng):
    with pytest.raises(ValueError):
        transmit_block(Ket.from_bits("0"), [], NoiseModel("dephasing"), rng)
