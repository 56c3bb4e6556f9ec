import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdsim.analysis import (
    DP_RESOURCE_X,
    DP_RESOURCE_X_ALT_SIGN,
    EFFICIENCY_MODES,
    EXTERNAL_REFERENCE_ETA,
    PAIRS,
    EfficiencyReport,
    ciphertext_ancilla_information,
    ciphertext_opacity,
    df_invariance_suite,
    disclose_initial_states,
    efficiency,
    eve_view_states,
    holevo_information,
    identity_failures,
    identity_suite,
    key_rotation_error,
    leakage_entropy,
    mixedness_check,
    operator_table,
    transcript_leakage,
)
from qdsim.logical import Encoding, LogicalState, code_projector, encode, prepare_resource
from qdsim.protocol import KeyRegister, MessagePair, ProtocolConfig, run_dialogue
from qdsim.statevec import DensityOp, Ket

ENCODINGS = list(Encoding)
bits = st.sampled_from([0, 1])


class TestLeakage:
    def test_honest_announcement(self):
        r = leakage_entropy(0)
        assert r.posterior == {p: 0.25 for p in PAIRS}
        assert r.entropy_bits == 2.0 and r.leakage_bits == 0.0

    def test_public_m_counterfactual(self):
        r = leakage_entropy(0, m=1)
        assert {p for p, w in r.posterior.items() if w > 0} == {(1, 0), (0, 1)}
        assert r.entropy_bits == 1.0 and r.leakage_bits == 1.0

    def test_absent_announcement(self):
        assert leakage_entropy(None).entropy_bits == 2.0

    def test_bad_bits(self):
        with pytest.raises(ValueError):
            leakage_entropy(2)

    @given(st.one_of(st.none(), bits), st.one_of(st.none(), bits))
    def test_entropy_bounds(self, a, m):
        r = leakage_entropy(a, m)
        assert 0 <= r.entropy_bits <= 2
        assert sum(r.posterior.values()) == pytest.approx(1)

    @given(st.lists(bits, min_size=1, max_size=40))
    def test_honest_transcripts_leak_nothing(self, ann):
        view = [{"kind": "announcement", "bits": ann}]
        rep = transcript_leakage(view)
        assert rep.total_entropy_bits == 2.0 * len(ann)
        assert rep.total_leakage_bits == 0.0
        disclosed = transcript_leakage(disclose_initial_states(view, [0] * len(ann)))
        assert disclosed.total_leakage_bits == float(len(ann))

    def test_mismatched_disclosure(self):
        with pytest.raises(ValueError):
            transcript_leakage([{"kind": "announcement", "bits": [0, 1]}, {"kind": "initial_states", "bits": [1]}])

    def test_real_transcript(self, rng):
        cfg = ProtocolConfig(n=8)
        res, tr, _ = run_dialogue(cfg, MessagePair.random(8, rng), KeyRegister.ideal(Encoding.DP, 8), rng)
        assert transcript_leakage(tr.public_view()).total_leakage_bits == 0.0
        cf = transcript_leakage(disclose_initial_states(tr.public_view(), res.m_record))
        assert cf.total_leakage_bits == 8.0


class TestEfficiency:
    def test_modes(self):
        qd = efficiency("qd")
        assert (qd.b_s, qd.q_t, qd.b_t, qd.eta) == (2, 2, 1, Fraction(2, 3))
        otp = efficiency("qkd_otp")
        assert (otp.b_s, otp.q_t, otp.b_t, otp.eta) == (2, 4, 2, Fraction(1, 3))
        off = efficiency("qd_with_key_amortization_off")
        assert (off.q_t, off.eta) == (5, Fraction(1, 3))

    def test_finite_reuse_interpolates(self):
        assert efficiency("qd", reuse_rounds=1).eta == efficiency("qd_with_key_amortization_off").eta
        etas = [efficiency("qd", reuse_rounds=r).eta for r in (1, 2, 10, 1000)]
        assert etas == sorted(etas) and etas[-1] < Fraction(2, 3)

    def test_degenerate(self):
        assert EfficiencyReport("none", 0, Fraction(2), 1).eta == 0
        assert efficiency("qd", b_s=0).eta == 0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            efficiency("teleport")

    def test_external_constants_are_labelled(self):
        assert sorted(EXTERNAL_REFERENCE_ETA.values()) == pytest.approx([1 / 3, 0.4])
        assert len(EFFICIENCY_MODES) == 3


class TestInvariance:
    @pytest.mark.parametrize("enc", ENCODINGS)
    def test_matching_channel(self, enc, rng):
        rows = df_invariance_suite(enc, 50, rng)
        assert len(rows) == 4 and all(r.ok for r in rows)

    def test_dp_under_rotation_is_reported_not_raised(self, rng):
        rows = {r.state: r for r in df_invariance_suite("dp", 30, rng, noise_kind="rotation")}
        # only the singlet survives a collective rotation
        assert rows["Lminus"].ok
        assert not rows["L0"].ok and not rows["Lplus"].ok

    def test_deterministic_with_seed(self):
        a = df_invariance_suite("r", 20, np.random.default_rng(5), noise_kind="dephasing")
        b = df_invariance_suite("r", 20, np.random.default_rng(5), noise_kind="dephasing")
        assert a == b

    def test_rejects_zero_trials(self, rng):
        with pytest.raises(ValueError):
            df_invariance_suite("dp", 0, rng)


class TestMixedness:
    @pytest.mark.parametrize("enc", ENCODINGS)
    def test_honest_vs_unencrypted(self, enc, rng):
        cfg = ProtocolConfig(encoding=enc, n=8)
        res, _, _ = run_dialogue(cfg, MessagePair.random(8, rng), KeyRegister.ideal(enc, 8), rng, introspect=True)
        assert mixedness_check(res.ciphertext_states, enc) < 1e-12
        plain, _, _ = run_dialogue(
            cfg, MessagePair.random(8, rng), KeyRegister.ideal(enc, 8), rng, introspect=True, encrypt=False
        )
        assert mixedness_check(plain.ciphertext_states, enc) == pytest.approx(0.5, abs=1e-12)

    def test_requires_snapshots(self):
        with pytest.raises(ValueError):
            mixedness_check([], "dp")


class TestHolevo:
    def test_orthogonal_pure_states_carry_one_bit(self):
        ens = [(0.5, DensityOp.from_ket(Ket.from_bits("0"))), (0.5, DensityOp.from_ket(Ket.from_bits("1")))]
        assert holevo_information(ens) == pytest.approx(1.0)

    def test_identical_states_carry_nothing(self):
        rho = DensityOp(np.eye(2) / 2)
        assert holevo_information([(0.5, rho), (0.5, rho)]) == pytest.approx(0.0)

    @pytest.mark.parametrize("enc", ENCODINGS)
    def test_eve_learns_nothing_about_jk(self, enc):
        states = eve_view_states(enc)
        assert set(states) == set(PAIRS)
        assert ciphertext_ancilla_information(enc) == pytest.approx(0.0, abs=1e-10)

    def test_opacity_smoke(self, rng):
        res = ciphertext_opacity("dp", 400, rng, n=16)
        assert res.qubits == 400 and res.within(0.25)


class TestIdentities:
    def test_operator_table_signs(self):
        for enc in ENCODINGS:
            assert all(err < 1e-12 for _, err in operator_table(enc))

    def test_suite_passes_apart_from_documented_erratum(self):
        rows = identity_suite()
        assert not identity_failures(rows)
        notes = [r for r in rows if r.informational]
        assert [r.name for r in notes] == ["dp_resource_x_expansion_alt_sign"]
        assert not notes[0].passed

    def test_alt_sign_form_is_orthogonal(self):
        res = prepare_resource("dp").amps
        assert abs(np.vdot(res, DP_RESOURCE_X_ALT_SIGN)) < 1e-12
        assert abs(np.vdot(res, DP_RESOURCE_X)) == pytest.approx(1.0)

    def test_encoding_filter(self):
        assert {r.encoding for r in identity_suite(["r"])} == {"r"}

    @given(st.floats(-10, 10, allow_nan=False))
    def test_key_rotation_error(self, theta):
        assert key_rotation_error(theta) < 1e-12
