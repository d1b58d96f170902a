from dataclasses import replace

import pytest

from qlottery.bits import BitString
from qlottery.config import AdversaryConfig, Attack, RunConfig, Scheme
from qlottery.keylink import ProtocolViolation
from qlottery.protocol import (
    LotteryAborted,
    LotteryRun,
    detection_stats,
    inject_adversary,
    run_lottery,
    run_lottery_for,
    wilson_interval,
)
from qlottery.rng import RandomStream
from qlottery.tickets import hash_commit, xor_fold
from qlottery.transcript import Phase, ProtocolTranscript, phase_barrier, verify_public

SCHEMES = list(Scheme)


def execute(cfg, adversary=None):
    run = LotteryRun(cfg)
    inject_adversary(run, adversary or cfg.adversary)
    run.execute()
    return run


def accepted_pids(t):
    return [e["payload"]["pid"] for e in t.events if e["type"] == "ticket_accepted"]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_honest_run(scheme):
    run = execute(RunConfig(scheme=scheme, n_participants=5, master_seed=17))
    t = run.transcript
    assert all(p.authenticated and p.tid_accepted for p in run.participants)
    assert len(accepted_pids(t)) == 5
    assert t.winner == xor_fold([p.tid for p in run.participants])
    assert t.verdicts[-1] == {"kind": "outcome", "subject": None, "ok": True, "reason": "ok", "culprit": None}
    assert t.rewards.total == 1
    if scheme is Scheme.ENTANGLED:
        assert all(run.decoded[p.pid_hex] == p.tid for p in run.participants)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_single_participant_wins_own_ticket(scheme):
    run = execute(RunConfig(scheme=scheme, n_participants=1, master_seed=3))
    assert run.transcript.winner == run.participants[0].tid


def test_entangled_attack_on_one_participant_excludes_only_them():
    adv = AdversaryConfig(Attack.INTERCEPT_RESEND, target=1, authority="LAT1", basis="z")
    run = execute(RunConfig(scheme=Scheme.ENTANGLED, n_participants=3, master_seed=5, adversary=adv))
    t = run.transcript
    victim = run.participants[1]
    assert victim.excluded is not None and "anti-correlation violation" in victim.excluded
    others = [run.participants[0], run.participants[2]]
    assert t.winner == xor_fold([p.tid for p in others])
    checks = [e for e in t.events if e["type"] == "bell_check" and e["payload"]["pid"] == victim.pid_hex]
    assert len(checks) == 2  # first attempt plus one retry
    assert all(c["payload"]["violations"]["LAT2"] == 0 for c in checks)


def test_bb84_attack_excludes_participant_after_retry():
    adv = AdversaryConfig(Attack.INTERCEPT_RESEND, target=0, authority="LAT2")
    run = execute(RunConfig(scheme=Scheme.BB84, n_participants=2, master_seed=8, adversary=adv))
    p0 = run.participants[0]
    assert p0.excluded.startswith("key establishment with LAT2 aborted")
    qkd = [e["payload"] for e in run.transcript.events if e["type"] == "qkd" and e["payload"]["pid"] == p0.pid_hex]
    assert [(q["authority"], q["attempt"], q["aborted"]) for q in qkd] == [
        ("LAT1", 0, False),
        ("LAT2", 0, True),
        ("LAT2", 1, True),
    ]


def test_zero_retries_excludes_on_first_abort():
    adv = AdversaryConfig(Attack.INTERCEPT_RESEND, target=0)
    run = execute(RunConfig(n_participants=2, master_seed=8, retries=0, adversary=adv))
    attempts = [e for e in run.transcript.events if e["type"] == "qkd" and e["payload"]["pid"] == run.participants[0].pid_hex]
    assert len(attempts) == 1


def test_everyone_excluded_aborts_run():
    adv = AdversaryConfig(Attack.INTERCEPT_RESEND, authority="both")
    with pytest.raises(LotteryAborted) as info:
        run_lottery(RunConfig(n_participants=2, master_seed=1, adversary=adv))
    assert info.value.reason == "no valid tickets"
    assert info.value.transcript.aborted


def test_credential_failure_excluded_at_registration():
    run = execute(RunConfig(n_participants=3, master_seed=2, credential_failures=(1,)))
    p1 = run.participants[1]
    assert p1.pid is None and p1.excluded == "credentials rejected"
    assert len(accepted_pids(run.transcript)) == 2


def test_phase_barrier_order():
    t = ProtocolTranscript({})
    with pytest.raises(ProtocolViolation):
        phase_barrier(t, Phase.REWARDS)
    phase_barrier(t, Phase.TICKETING)
    with pytest.raises(ProtocolViolation):
        phase_barrier(t, Phase.TICKETING)
    phase_barrier(t, Phase.REWARDS)
    assert [e["type"] for e in t.events] == ["phase_closed", "phase_opened", "phase_closed", "phase_opened"]


def test_ticket_desk_rules():
    run = LotteryRun(RunConfig(n_participants=2, master_seed=4, tid_width=8, pid_width=8))
    p, q = run.participants
    for rec in (p, q):
        run.register(rec)
    t = run.transcript
    assert not run.submit_ticket(p, BitString(1, 8))
    assert t.events[-1]["type"] == "late_ticket_rejected"  # ticketing not open yet
    phase_barrier(t, Phase.TICKETING)
    assert not run.submit_ticket(p, BitString(1, 8))
    assert t.events[-1]["payload"]["reason"] == "not authenticated"
    p.authenticated = True
    assert run.submit_ticket(p, BitString(1, 8))
    assert not run.submit_ticket(p, BitString(2, 8))
    assert t.events[-1]["payload"]["reason"] == "duplicate submission"
    phase_barrier(t, Phase.REWARDS)
    q.authenticated = True
    assert not run.submit_ticket(q, BitString(3, 8))
    assert t.events[-1]["type"] == "late_ticket_rejected"


@pytest.mark.parametrize("scheme", SCHEMES)
def test_late_ticket_does_not_change_winner(scheme):
    base = RunConfig(scheme=scheme, n_participants=3, master_seed=21)
    honest = run_lottery(base)
    late = run_lottery(replace(base, adversary=AdversaryConfig(Attack.LATE_TICKET, target=2)))
    assert late.winner == honest.winner
    rejected = [e for e in late.events if e["type"] == "late_ticket_rejected"]
    assert len(rejected) == 1 and rejected[0]["phase"] == "rewards"


def test_no_acceptance_after_ticketing_closes():
    t = run_lottery(RunConfig(n_participants=4, master_seed=6, adversary=AdversaryConfig(Attack.LATE_TICKET)))
    close = next(e["index"] for e in t.events if e["type"] == "phase_closed" and e["payload"]["phase"] == "ticketing")
    assert all(e["index"] < close for e in t.events if e["type"] == "ticket_accepted")


@pytest.mark.parametrize("scheme", SCHEMES)
def test_post_hoc_swap_names_cheater(scheme):
    run = execute(RunConfig(scheme=scheme, n_participants=3, master_seed=9, adversary=AdversaryConfig(Attack.POST_HOC_TID_SWAP, target=1)))
    verdict = run.transcript.verdicts[-1]
    assert not verdict["ok"]
    assert verdict["reason"] == "commitment mismatch"
    assert verdict["culprit"] == run.participants[1].pid_hex


@pytest.mark.parametrize("authority", ["LAT1", "LAT2"])
def test_corrupt_authority_named(authority):
    adv = AdversaryConfig(Attack.CORRUPT_AUTHORITY, target=0, authority=authority)
    t = run_lottery(RunConfig(n_participants=3, master_seed=10, adversary=adv))
    verdict = t.verdicts[-1]
    assert not verdict["ok"]
    assert verdict["culprit"] == authority


def test_single_authority_open_bb84_width_8():
    adv = AdversaryConfig(Attack.SINGLE_AUTHORITY_OPEN, target=0, authority="LAT2")
    t = run_lottery(RunConfig(n_participants=2, master_seed=11, tid_width=8, pid_width=8, adversary=adv))
    refused = [e["payload"] for e in t.events if e["type"] == "cooperation_refused"]
    assert len(refused) == 1
    assert refused[0]["authority"] == "LAT2"
    assert refused[0]["posterior_candidates"] == 256
    assert refused[0]["posterior_uniform"] is True
    assert t.verdicts[-1]["ok"]


def test_single_authority_open_entangled():
    adv = AdversaryConfig(Attack.SINGLE_AUTHORITY_OPEN, target=0)
    t = run_lottery(RunConfig(scheme=Scheme.ENTANGLED, n_participants=2, master_seed=12, adversary=adv))
    assert any(e["type"] == "cooperation_refused" for e in t.events)
    assert t.verdicts[-1]["ok"]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_forged_declaration_rejected(scheme):
    t = run_lottery(RunConfig(scheme=scheme, n_participants=2, master_seed=13, adversary=AdversaryConfig(Attack.FORGE_DECLARATION)))
    attempts = [e["payload"] for e in t.events if e["type"] == "impersonation_attempt"]
    assert len(attempts) == 1 and attempts[0]["accepted"] is False
    assert t.verdicts[-1]["ok"]


def test_inject_adversary_unknown_target():
    run = LotteryRun(RunConfig(n_participants=2))
    with pytest.raises(ValueError):
        inject_adversary(run, AdversaryConfig(Attack.POST_HOC_TID_SWAP, target=5))
    with pytest.raises(ValueError):
        inject_adversary(run, AdversaryConfig(Attack.CORRUPT_AUTHORITY, authority="both"))


@pytest.mark.parametrize("scheme", SCHEMES)
def test_eligibility_and_public_verification(scheme):
    for seed in range(3):
        t = run_lottery(RunConfig(scheme=scheme, n_participants=3, master_seed=seed))
        authenticated = {e["payload"]["pid"] for e in t.events if e["type"] == "authentication" and e["payload"]["accepted"]}
        assert set(accepted_pids(t)) <= authenticated
        public = t.public_events()
        assert all(e["visibility"] == "public" for e in public)
        assert verify_public(t.events, t.winner.hex()).ok
        assert verify_public(public, t.winner.hex()).ok


def test_private_events_never_feed_verification():
    t = run_lottery(RunConfig(n_participants=2, master_seed=14))
    bogus = {"index": 999, "phase": "rewards", "visibility": "private:LAT1", "type": "reveal", "payload": {"pid": "00", "tid": "ff"}}
    assert verify_public(t.events + [bogus], t.winner.hex()).ok


def test_commitments_precede_delivery():
    t = run_lottery(RunConfig(n_participants=3, master_seed=15))
    for pid in accepted_pids(t):
        commit = next(e["index"] for e in t.events if e["type"] == "commitment" and e["payload"]["pid"] == pid)
        accept = next(e["index"] for e in t.events if e["type"] == "ticket_accepted" and e["payload"]["pid"] == pid)
        assert commit < accept


@pytest.mark.parametrize("scheme", SCHEMES)
def test_deterministic_transcripts(scheme):
    cfg = RunConfig(scheme=scheme, n_participants=3, master_seed=99)
    assert run_lottery(cfg).to_json() == run_lottery(cfg).to_json()
    assert run_lottery(cfg).to_json() != run_lottery(replace(cfg, master_seed=100)).to_json()


def test_run_lottery_for_matches_config():
    cfg = RunConfig()
    a = run_lottery_for(Scheme.BB84, 2, AdversaryConfig(), cfg, 5)
    b = run_lottery(replace(cfg, n_participants=2, master_seed=5))
    assert a.to_json() == b.to_json()


def test_reduced_width_flagged():
    t = run_lottery(RunConfig(n_participants=2, tid_width=8, pid_width=8, master_seed=1))
    assert t.to_dict()["mode"] == "NON-SECURE"
    assert t.winner.width == 8
    assert run_lottery(RunConfig(n_participants=1)).to_dict()["mode"] == "secure"


def test_winner_is_fold_of_participant_ticket_streams():
    # the winner is the XOR of each participant's own ticket stream draws
    for seed in range(20):
        t = run_lottery(RunConfig(n_participants=3, tid_width=8, pid_width=8, master_seed=seed))
        root = RandomStream(seed, "lottery")
        expected = xor_fold([root.fork(f"P{i}/tid").bits(8) for i in range(3)])
        assert t.winner == expected


def test_detection_stats_bb84_intercept():
    cfg = RunConfig(n_participants=1, adversary=AdversaryConfig(Attack.INTERCEPT_RESEND), master_seed=1)
    summary = detection_stats(cfg, 200)
    assert summary.detections == 200
    assert summary.interval[0] > 0.98
    assert abs(summary.mean_error_rate - 0.25) < 0.01


def test_detection_stats_false_positives():
    summary = detection_stats(RunConfig(n_participants=1, master_seed=2), 200)
    assert summary.probability <= 0.01
    assert summary.mean_error_rate == 0


def test_zero_fraction_attack_matches_no_attack():
    base = RunConfig(n_participants=2, master_seed=3)
    a = run_lottery(base)
    b = run_lottery(replace(base, adversary=AdversaryConfig(Attack.INTERCEPT_RESEND, fraction=0.0)))
    assert a.public_events() == b.public_events()
    assert a.winner == b.winner


def test_wilson_interval_single_trial():
    for k in (0, 1):
        lo, hi = wilson_interval(k, 1)
        assert 0 <= lo <= hi <= 1
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_detection_stats_single_trial():
    summary = detection_stats(RunConfig(n_participants=1), 1)
    assert summary.trials == 1
    assert 0 <= summary.interval[0] <= summary.interval[1] <= 1


def test_commitment_mismatch_voids_ticket():
    run = LotteryRun(RunConfig(n_participants=2, master_seed=16))
    inject_adversary(run, AdversaryConfig())
    original = run.ticketing

    def tamper(p):
        original(p)
        if p.index == 0:
            p.commitment = hash_commit(p.tid.flip(0))

    run.ticketing = tamper
    t = run.execute()
    assert any(e["type"] == "ticket_void" for e in t.events)
    assert t.winner == run.participants[1].tid
