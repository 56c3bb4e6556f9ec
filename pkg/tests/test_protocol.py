import ast
import inspect
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import qdsim
from qdsim.logical import PHI_MINUS, Encoding
from qdsim.noise import NoiseModel
from qdsim.protocol import (
    KeyRegister,
    MessagePair,
    ProtocolConfig,
    Transcript,
    decode_bits,
    forbidden_key_angle,
    rotate_key,
    run_dialogue,
    share_key,
    trial_rng,
)
from qdsim.statevec import Ket, Register, state_fidelity

ENCODINGS = list(Encoding)


def honest_round(enc, seed, n=8, **kw):
    cfg = ProtocolConfig(encoding=enc, n=n, **kw)
    rng = trial_rng(seed, 0)
    key, tr = share_key(cfg, rng)
    msgs = MessagePair.random(n, rng)
    res, tr2, key = run_dialogue(cfg, msgs, key, rng)
    return cfg, msgs, res, key, tr, tr2


class TestConfig:
    @pytest.mark.parametrize("k", range(-3, 4))
    @pytest.mark.parametrize("sign", [1, -1])
    def test_forbidden_angles(self, k, sign):
        theta = k * math.pi + sign * math.pi / 4
        assert forbidden_key_angle(theta)
        with pytest.raises(ValueError, match=r"theta != k\*pi \+- pi/4"):
            ProtocolConfig(theta_key=theta)

    @given(st.floats(-20, 20, allow_nan=False))
    def test_allowed_angles_match_rule(self, theta):
        d = math.remainder(theta - math.pi / 4, math.pi / 2)
        assert forbidden_key_angle(theta) == (abs(d) < 1e-9)

    def test_null_rotation_warns(self):
        with pytest.warns(UserWarning, match="null rotation"):
            ProtocolConfig(theta_key=math.pi)

    def test_default_noise_matches_encoding(self):
        assert ProtocolConfig(encoding="dp").noise.kind == "dephasing"
        assert ProtocolConfig(encoding="r").noise.kind == "rotation"

    @pytest.mark.parametrize("kw", [{"n": 0}, {"delta1": 0}, {"decoy_count": -1}, {"decryption": "other"}])
    def test_invalid_sizes(self, kw):
        with pytest.raises(ValueError):
            ProtocolConfig(**kw)


def test_message_pair_validation():
    with pytest.raises(ValueError):
        MessagePair((0, 1), (1,))
    with pytest.raises(ValueError):
        MessagePair((2,), (0,))


@pytest.mark.parametrize("enc", ENCODINGS)
@pytest.mark.parametrize("seed", range(5))
def test_honest_round_decodes(enc, seed):
    _, msgs, res, key, tr, _ = honest_round(enc, seed)
    assert not tr.aborted and not res.aborted
    assert res.bob_decoded == list(msgs.j)
    assert res.alice_decoded == list(msgs.k)
    assert np.all(key.fidelities() > 1 - 1e-9)
    assert key.rotation_count == 1


@pytest.mark.parametrize("enc", ENCODINGS)
def test_sharing_leaves_bare_pairs(enc, rng):
    cfg = ProtocolConfig(encoding=enc, n=5, delta1=7)
    key, tr = share_key(cfg, rng)
    assert len(key) == 5
    assert all(p.labels == ["A", "B"] for p in key.pairs)
    check = [e for e in tr.events if e["kind"] == "sample_check"][0]
    assert len(check["positions"]) == 7 and check["violations"] == 0


def test_announcement_algebra():
    # announced = m ^ j ^ k
    m, j, k = [0, 1, 1, 0], [1, 1, 0, 0], [0, 1, 0, 1]
    ann = [a ^ b ^ c for a, b, c in zip(m, j, k)]
    assert decode_bits("alice", j, m, ann) == k
    assert decode_bits("bob", k, m, ann) == j
    with pytest.raises(ValueError):
        decode_bits("eve", j, m, ann)


def test_message_length_must_match(rng):
    cfg = ProtocolConfig(n=4)
    with pytest.raises(ValueError):
        run_dialogue(cfg, MessagePair.random(3, rng), KeyRegister.ideal(Encoding.DP, 4), rng)


def test_public_view_hides_private_events():
    *_, tr, tr2 = honest_round(Encoding.DP, 1)
    kinds = {e["kind"] for e in tr2.events}
    assert {"transmission", "key_rotation"} <= kinds
    public = {e["kind"] for e in tr2.public_view()}
    assert public <= {"sample_check", "decoy_check", "announcement", "abort"}
    text = tr2.to_json(public_only=True)
    assert "angle" not in text and "theta" not in text


def test_transcript_json_is_deterministic():
    a = honest_round(Encoding.R, 9)[-1].to_json()
    b = honest_round(Encoding.R, 9)[-1].to_json()
    assert a == b
    json.loads(a)


def test_transcript_extend_renumbers():
    a, b = Transcript(), Transcript()
    a.record("x")
    b.record("y")
    a.extend(b)
    assert [e["seq"] for e in a.events] == [0, 1]


@pytest.mark.parametrize("enc", ENCODINGS)
def test_key_rotation_keeps_phi_plus(enc):
    key = KeyRegister.ideal(enc, 3)
    for _ in range(4):
        rotate_key(key, math.pi / 8)
    assert np.all(np.abs(key.fidelities() - 1) < 1e-9)
    with pytest.raises(ValueError):
        rotate_key(key, math.pi / 4)


@pytest.mark.parametrize("enc", ENCODINGS)
def test_literal_decryption_corrupts_the_key(enc):
    """Decrypting with CU1 instead of its inverse leaves the pair in phi-.

    One R(pi/8) x R(pi/8) rotation then takes phi- away from the Bell basis,
    so Bob misreads m. His own decode survives (the announcement carries his
    reading), but Alice's decode of k breaks.
    """
    cfg = ProtocolConfig(encoding=enc, n=16, decryption="literal")
    rng = trial_rng(4, 0)
    key = KeyRegister.ideal(enc, 16)
    msgs = MessagePair.random(16, rng)
    res, _, key = run_dialogue(cfg, msgs, key, rng)
    assert res.bob_decoded == list(msgs.j)  # first round still reads m correctly
    assert np.all(key.fidelities() < 1e-9)
    rho = key.pairs[0].reduced("A", "B")
    # rotated phi- is no longer phi- either
    assert state_fidelity(rho, Ket(PHI_MINUS)) < 1 - 1e-3
    errors = 0
    for r in range(3):
        msgs = MessagePair.random(16, rng)
        res, _, key = run_dialogue(cfg, msgs, key, rng)
        errors += res.aborted or res.alice_decoded != list(msgs.k)
    assert errors > 0


@pytest.mark.parametrize("enc", ENCODINGS)
def test_introspection_snapshots(enc, rng):
    cfg = ProtocolConfig(encoding=enc, n=6)
    res, _, _ = run_dialogue(cfg, MessagePair.random(6, rng), KeyRegister.ideal(enc, 6), rng, introspect=True)
    assert len(res.ciphertext_states) == 6
    assert all(np.allclose(np.trace(s.matrix), 1) for s in res.ciphertext_states)


def test_fixed_noise_law_is_recorded(rng):
    cfg = ProtocolConfig(n=3, noise=NoiseModel("dephasing", "fixed:1.5"))
    _, tr, _ = run_dialogue(cfg, MessagePair.random(3, rng), KeyRegister.ideal(Encoding.DP, 3), rng)
    angles = [e["angle"] for e in tr.events if e["kind"] == "transmission"]
    assert angles == [1.5, 1.5]


def test_trial_rng_is_counter_based():
    a = trial_rng(1, 5).integers(0, 2**31, 4)
    b = trial_rng(1, 5).integers(0, 2**31, 4)
    c = trial_rng(1, 6).integers(0, 2**31, 4)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


# -- structural: only single-photon measurements exist ----------------------------


def _package_sources():
    root = Path(inspect.getfile(qdsim)).parent
    return {p.name: p.read_text() for p in root.glob("*.py")}


def test_no_joint_measurement_primitive():
    """Every measurement entry point takes exactly one qubit."""
    from qdsim.statevec import measure_qubit

    params = list(inspect.signature(measure_qubit).parameters)
    assert params == ["state", "qubit", "basis", "rng"]
    assert list(inspect.signature(Register.measure).parameters) == ["self", "label", "basis", "rng"]
    for name, src in _package_sources().items():
        tree = ast.parse(src)
        for node in ast.walk(tree):
            if isinstance(node, ast.FunctionDef):
                lowered = node.name.lower()
                assert not ("bell" in lowered and "measure" in lowered), (name, node.name)
                assert "joint_measure" not in lowered, (name, node.name)
            if isinstance(node, ast.Call):
                fn = node.func
                called = fn.attr if isinstance(fn, ast.Attribute) else getattr(fn, "id", "")
                if called in ("measure", "measure_qubit"):
                    # label/qubit argument is a single name, constant or subscript
                    target = node.args[1] if called == "measure_qubit" else node.args[0]
                    assert not isinstance(target, (ast.List, ast.Tuple)), (name, ast.unparse(node))
