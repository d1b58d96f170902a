import logging

import numpy as np
import pytest

from qlottery.bits import BitString
from qlottery.keylink import (
    DECODE_TABLE,
    Announcement,
    CapabilityError,
    ClassicalParty,
    CooperationGate,
    CooperationRequired,
    Eavesdropper,
    ProtocolViolation,
    bb84_qkd,
    bell_distribute_and_check,
    codes_to_tid,
    ent_decode_block,
    ent_deliver_tid,
    ent_encode_block,
    one_key_posterior,
    open_ticket,
    semiquantum_qkd,
    split_deliver,
    tid_to_codes,
)
from qlottery.qsim import StateBatch, X, Z
from qlottery.rng import RandomStream

PID = BitString(1, 8)


def joined_gate():
    gate = CooperationGate()
    gate.join("LAT1")
    gate.join("LAT2")
    return gate


def test_bb84_honest_sessions_agree():
    for i in range(1000):
        res = bb84_qkd(RandomStream(i, "qkd"))
        assert not res.aborted
        assert res.qber_estimate == 0
        assert res.key_a.bits == res.key_b.bits
        assert res.key_a.bits.width == 256
        assert res.sample_size == 128


def test_bb84_keys_differ_between_sessions():
    a = bb84_qkd(RandomStream(1, "qkd")).key_a.bits
    b = bb84_qkd(RandomStream(2, "qkd")).key_a.bits
    assert a != b


def test_bb84_full_intercept_resend():
    qbers = []
    for i in range(300):
        res = bb84_qkd(RandomStream(i, "eve"), Eavesdropper(1.0))
        assert res.aborted and res.keys is None
        qbers.append(res.qber_estimate)
    sigma = np.sqrt(0.25 * 0.75 / 128)
    assert abs(np.mean(qbers) - 0.25) < 3 * sigma / np.sqrt(len(qbers))
    assert all(abs(q - 0.25) < 4 * sigma for q in qbers)


def test_bb84_half_intercept_is_linear():
    qbers = [bb84_qkd(RandomStream(i, "half"), Eavesdropper(0.5)).qber_estimate for i in range(300)]
    sigma = np.sqrt(0.125 * 0.875 / 128) / np.sqrt(len(qbers))
    assert abs(np.mean(qbers) - 0.125) < 3 * sigma


def test_bb84_zero_fraction_eavesdropper_is_inert():
    a = bb84_qkd(RandomStream(3, "zero"))
    b = bb84_qkd(RandomStream(3, "zero"), Eavesdropper(0.0))
    assert a == b


def test_bb84_insufficient_raw_bits():
    res = bb84_qkd(RandomStream(1, "short"), n_raw=100)
    assert res.aborted and res.reason == "insufficient sifted bits"


def test_eavesdropper_validates_parameters():
    with pytest.raises(ValueError):
        Eavesdropper(1.5)
    with pytest.raises(ValueError):
        Eavesdropper(1.0, "y")


def test_semiquantum_honest_sessions_agree():
    for i in range(300):
        res = semiquantum_qkd(RandomStream(i, "sqkd"))
        assert not res.aborted
        assert res.qber_estimate == 0
        assert res.key_a.bits == res.key_b.bits
        assert res.key_a.bits.width == 256


def test_semiquantum_intercept_resend_z():
    errors = checked = 0
    for i in range(300):
        res = semiquantum_qkd(RandomStream(i, "sqkd-eve"), Eavesdropper(1.0, "z"))
        assert res.aborted
        errors += res.errors
        checked += res.sample_size
    assert abs(errors / checked - 0.25) < 0.01


def test_classical_party_role_guard():
    party = ClassicalParty(RandomStream(1, "C"))
    batch = StateBatch.bb84(np.zeros(4, dtype=int), X)
    with pytest.raises(CapabilityError):
        party.measure(batch, X)
    with pytest.raises(CapabilityError):
        party.act(batch, np.array([0, 1, 2, 0]))
    assert not hasattr(party, "measure_x")


def test_classical_party_reflect_leaves_qubits_untouched():
    party = ClassicalParty(RandomStream(1, "C"))
    batch = StateBatch.bb84(np.array([0, 1, 0, 1]), np.array([X, X, Z, Z]))
    outcomes, returned = party.act(batch, np.zeros(4, dtype=int))
    assert np.all(outcomes == -1)
    assert np.allclose(returned.amplitudes, batch.amplitudes)


def test_split_deliver_round_trip():
    s = RandomStream(1, "xor")
    tid, k1, k2 = s.bits(256), s.bits(256), s.bits(256)
    enc = split_deliver(tid, k1, k2, PID)
    assert enc.ciphertext == tid ^ k1 ^ k2
    assert open_ticket(enc, k1, k2) == tid
    assert open_ticket(enc, k1, k1) != tid


def test_split_deliver_width_mismatch():
    with pytest.raises(ValueError):
        split_deliver(BitString(1, 8), BitString(1, 8), BitString(1, 16), PID)


def test_equal_keys_degenerate_and_logged(caplog):
    tid, k = BitString(0x5A, 8), BitString(0x33, 8)
    with caplog.at_level(logging.WARNING, logger="qlottery.keylink"):
        enc = split_deliver(tid, k, k, PID)
    assert enc.ciphertext == tid
    assert "identical authority keys" in caplog.text


def test_one_key_posterior_uniform_width_8():
    s = RandomStream(2, "posterior")
    for _ in range(5):
        tid, k1, k2 = s.bits(8), s.bits(8), s.bits(8)
        enc = split_deliver(tid, k1, k2, PID)
        for known in (k1, k2):
            counts = one_key_posterior(enc, known)
            assert len(counts) == 256
            assert set(counts.values()) == {1}
            assert tid.value in counts


def test_cooperation_gate():
    gate = CooperationGate()
    gate.join("LAT1", BitString(1, 8))
    with pytest.raises(CooperationRequired):
        gate.open(split_deliver(BitString(9, 8), BitString(1, 8), BitString(2, 8), PID))
    with pytest.raises(ValueError):
        gate.join("LAR")
    gate.join("LAT2", BitString(2, 8))
    assert gate.complete
    assert gate.open(split_deliver(BitString(9, 8), BitString(1, 8), BitString(2, 8), PID)) == BitString(9, 8)


def test_bell_check_without_adversary():
    for i in range(50):
        check = bell_distribute_and_check(RandomStream(i, "bell"))
        assert check.proceed
        assert check.violations1 == check.violations2 == 0
        assert check.checked1 == check.checked2 == 128
        assert len(check.session.set1) == len(check.session.set2) == 128
        assert check.session.available_blocks == 128
        assert len(set(check.session.checked1)) == 128


def test_bell_check_localizes_attacked_channel():
    v1 = v2 = n = 0
    for i in range(200):
        check = bell_distribute_and_check(RandomStream(i, "bell-eve"), (None, Eavesdropper(1.0, "z")))
        assert not check.proceed
        assert check.reason == "anti-correlation violation"
        v1 += check.violations1
        v2 += check.violations2
        n += check.checked2
    assert v1 == 0
    assert abs(v2 / n - 0.25) < 0.02


def test_decode_table_is_carrier_invariant_bijection():
    assert np.all(DECODE_TABLE >= 0)
    assert np.array_equal(DECODE_TABLE[0], DECODE_TABLE[1])
    for table in DECODE_TABLE:
        for row in table:
            assert sorted(row) == [0, 1, 2, 3]
        for col in table.T:
            assert sorted(col) == [0, 1, 2, 3]


def test_identity_encoding_decodes_to_zero_for_every_outcome():
    seen = set()
    for i in range(60):
        check = bell_distribute_and_check(RandomStream(i, "k0"))
        ann = ent_encode_block(check.session, 0, 0, RandomStream(i, "enc"))
        seen.add(ann.p_outcome)
        assert ent_decode_block(check.session, 0, ann, RandomStream(i, "dec"), joined_gate()) == 0
    assert seen == {0, 1, 2, 3}


def test_each_code_round_trips_per_block():
    check = bell_distribute_and_check(RandomStream(5, "codes"))
    s = RandomStream(5, "blocks")
    for block in range(64):
        k = block % 4
        ann = ent_encode_block(check.session, block, k, s.fork(f"e{block}"))
        assert isinstance(ann, Announcement)
        assert ent_decode_block(check.session, block, ann, s.fork(f"d{block}"), joined_gate()) == k


def test_block_reuse_is_a_protocol_violation():
    check = bell_distribute_and_check(RandomStream(6, "reuse"))
    ent_encode_block(check.session, 3, 1, RandomStream(6, "a"))
    with pytest.raises(ProtocolViolation):
        ent_encode_block(check.session, 3, 2, RandomStream(6, "b"))


def test_encode_rejects_bad_code():
    check = bell_distribute_and_check(RandomStream(6, "bad"))
    with pytest.raises(ValueError):
        ent_encode_block(check.session, 0, 4, RandomStream(6, "a"))


def test_single_authority_cannot_decode():
    check = bell_distribute_and_check(RandomStream(7, "lone"))
    ann = ent_encode_block(check.session, 0, 2, RandomStream(7, "a"))
    lone = CooperationGate()
    lone.join("LAT1")
    with pytest.raises(CooperationRequired):
        ent_decode_block(check.session, 0, ann, RandomStream(7, "b"), lone)
    with pytest.raises(CooperationRequired):
        ent_deliver_tid(check.session, BitString(0, 256), RandomStream(7, "c"), lone)


def test_tid_round_trip_over_swapping():
    for i in range(20):
        check = bell_distribute_and_check(RandomStream(i, "tid"))
        tid = RandomStream(i, "tid/value").bits(256)
        delivery = ent_deliver_tid(check.session, tid, RandomStream(i, "swap"), joined_gate())
        assert delivery.delivered == tid
        assert len(delivery.announcements) == 128


def test_unchecked_session_refused_unless_forced():
    check = bell_distribute_and_check(RandomStream(8, "bad"), (Eavesdropper(1.0), Eavesdropper(1.0)))
    assert not check.proceed
    with pytest.raises(ProtocolViolation):
        ent_deliver_tid(check.session, BitString(0, 256), RandomStream(8, "x"), joined_gate())


def test_forced_delivery_over_attacked_pairs_corrupts_ticket():
    corrupted = 0
    for i in range(20):
        check = bell_distribute_and_check(RandomStream(i, "forced"), (Eavesdropper(1.0), Eavesdropper(1.0)))
        tid = RandomStream(i, "forced/tid").bits(256)
        got = ent_deliver_tid(check.session, tid, RandomStream(i, "s"), joined_gate(), force=True).delivered
        corrupted += got != tid
    assert corrupted == 20


def test_insufficient_blocks():
    check = bell_distribute_and_check(RandomStream(9, "few"), n_pairs=64)
    with pytest.raises(ProtocolViolation):
        ent_deliver_tid(check.session, BitString(0, 256), RandomStream(9, "x"), joined_gate())


def test_tid_code_conversion():
    tid = BitString.from_str("00011011")
    assert list(tid_to_codes(tid)) == [0, 1, 2, 3]
    assert codes_to_tid(tid_to_codes(tid)) == tid
    with pytest.raises(ValueError):
        tid_to_codes(BitString(1, 7))
