"""Full lottery runs: roles, the three phases, adversaries and detection statistics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from .bits import BitString
from .config import AdversaryConfig, Attack, RunConfig, Scheme
from .keylink import (
    CooperationGate,
    CooperationRequired,
    EncryptedTid,
    Eavesdropper,
    bb84_qkd,
    bell_distribute_and_check,
    ent_deliver_tid,
    one_key_posterior,
    semiquantum_qkd,
    split_deliver,
)
from .qds import (
    forge_actions,
    forge_declaration,
    register_bb84,
    register_semiquantum,
    verify_declaration,
    verify_semiquantum,
)
from .rng import RandomStream, unique_id
from .tickets import Commitment, compute_rewards, hash_commit, xor_fold
from .transcript import Phase, ProtocolTranscript, phase_barrier, private, verify_public

log = logging.getLogger(__name__)

AUTHORITIES = ("LAT1", "LAT2")
# exhaustive one-key posterior is only computed at diagnostic widths
POSTERIOR_MAX_WIDTH = 16


class LotteryAborted(RuntimeError):
    def __init__(self, reason: str, transcript: ProtocolTranscript):
        super().__init__(reason)
        self.reason = reason
        self.transcript = transcript


@dataclass
class ParticipantRecord:
    index: int
    credentials_ok: bool = True
    pid: Optional[BitString] = None
    declaration: Optional[object] = None
    authenticated: bool = False
    keys: dict = field(default_factory=dict)
    tid: Optional[BitString] = None
    commitment: Optional[Commitment] = None
    tid_accepted: bool = False
    excluded: Optional[str] = None

    @property
    def label(self) -> str:
        return f"P{self.index}"

    @property
    def pid_hex(self) -> str:
        return self.pid.hex()


@dataclass
class Authority:
    role: str
    signatures: dict = field(default_factory=dict)
    keys: dict = field(default_factory=dict)


class LotteryRun:
    """State of one run. Drive it with :meth:`execute` or use :func:`run_lottery`."""

    def __init__(self, config: RunConfig):
        self.config = config.validate()
        self.adversary = AdversaryConfig()
        self.root = RandomStream(config.master_seed, "lottery")
        self.transcript = ProtocolTranscript(config.to_dict(), non_secure=config.non_secure)
        self.participants = [
            ParticipantRecord(i, credentials_ok=i not in config.credential_failures)
            for i in range(config.n_participants)
        ]
        self.authorities = {role: Authority(role) for role in AUTHORITIES}
        self.allocated: set[BitString] = set()
        self._lar_stream = self.root.fork("LAR/pid")
        self.received: dict[str, object] = {}
        self.decoded: dict[str, BitString] = {}

    # -- adversary -----------------------------------------------------------------

    def _attacked(self, attack: Attack, index: int) -> bool:
        adv = self.adversary
        if adv.attack is not attack:
            return False
        if adv.target is None:
            return attack is Attack.INTERCEPT_RESEND or index == 0
        return adv.target == index

    def _eavesdropper(self, index: int, authority: str) -> Optional[Eavesdropper]:
        adv = self.adversary
        if not self._attacked(Attack.INTERCEPT_RESEND, index):
            return None
        if adv.authority not in (authority, "both"):
            return None
        return Eavesdropper(adv.fraction, adv.basis)

    # -- phases ----------------------------------------------------------------------

    def execute(self) -> ProtocolTranscript:
        t = self.transcript
        t.emit("phase_opened", {"phase": Phase.REGISTRATION.label})
        if self.config.non_secure:
            t.emit("diagnostic_mode", {"tid_width": self.config.tid_width, "pid_width": self.config.pid_width, "secure": False})
        for p in self.participants:
            self.register(p)
        phase_barrier(t, Phase.TICKETING)
        for p in self.participants:
            if p.excluded is None:
                self.ticketing(p)
        phase_barrier(t, Phase.REWARDS)
        if self._attacked(Attack.LATE_TICKET, self.participants[self._target()].index):
            self.late_submission(self.participants[self._target()])
        self.rewards()
        return t

    def _target(self) -> int:
        return 0 if self.adversary.target is None else self.adversary.target

    def _exclude(self, p: ParticipantRecord, reason: str) -> None:
        p.excluded = reason
        subject = p.pid_hex if p.pid is not None else p.label
        self.transcript.emit("excluded", {"pid": subject, "reason": reason})
        self.transcript.verdicts.append({"kind": "exclusion", "subject": subject, "ok": False, "reason": reason, "culprit": None})

    def register(self, p: ParticipantRecord) -> None:
        cfg, t = self.config, self.transcript
        if not p.credentials_ok:
            t.emit("credentials_rejected", {"participant": p.label}, private("LAR"))
            self._exclude(p, "credentials rejected")
            return
        p.pid = self._issue_pid()
        t.emit("pid_issued", {"participant": p.label, "pid": p.pid_hex}, private("LAR"))
        t.emit("registered", {"pid": p.pid_hex})
        stream = self.root.fork(f"{p.label}/registration")
        if cfg.scheme is Scheme.SEMIQUANTUM:
            record = register_semiquantum(p.pid, cfg.signature_length, stream, min_length=1)
            p.declaration = record.participant_action
            for role in AUTHORITIES:
                self.authorities[role].signatures[p.pid_hex] = record
            t.emit("semiquantum_record", {"pid": p.pid_hex, "positions": len(record), "kept": int(record.kept.sum())}, private("LAT1"))
        else:
            reg = register_bb84(p.pid, cfg.signature_length, stream, min_length=1)
            p.declaration = reg.declaration
            self.authorities["LAT1"].signatures[p.pid_hex] = reg.lat1
            self.authorities["LAT2"].signatures[p.pid_hex] = reg.lat2
            for role, sig in (("LAT1", reg.lat1), ("LAT2", reg.lat2)):
                t.emit("signature_stored", {"pid": p.pid_hex, "records": len(sig), "forwarded": int(sig.forwarded.sum())}, private(role))

    def _issue_pid(self) -> BitString:
        pid = unique_id(self._lar_stream, self.allocated, self.config.pid_width)
        self.allocated.add(pid)
        return pid

    def _authenticate(self, pid_hex: str, declaration) -> tuple[bool, dict]:
        cfg = self.config
        if cfg.scheme is Scheme.SEMIQUANTUM:
            record = self.authorities["LAT1"].signatures[pid_hex]
            res = verify_semiquantum(record, declaration, cfg.signature_threshold, cfg.min_pass_fraction)
            detail = {"joint": {"accepted": res.accepted, "mismatches": res.mismatches, "checked": res.checked, "reason": res.reason}}
            return res.accepted, detail
        results = {role: verify_declaration(self.authorities[role].signatures[pid_hex], declaration, cfg.signature_threshold) for role in AUTHORITIES}
        detail = {role: {"accepted": r.accepted, "mismatches": r.mismatches, "checked": r.checked} for role, r in results.items()}
        return all(r.accepted for r in results.values()), detail

    def ticketing(self, p: ParticipantRecord) -> None:
        cfg, t = self.config, self.transcript
        if self._attacked(Attack.FORGE_DECLARATION, p.index):
            stream = self.root.fork(f"adversary/forge/{p.label}")
            if cfg.scheme is Scheme.SEMIQUANTUM:
                forged = forge_actions(cfg.signature_length, stream)
            else:
                forged = forge_declaration(cfg.signature_length, stream)
            ok, detail = self._authenticate(p.pid_hex, forged)
            t.emit("impersonation_attempt", {"pid": p.pid_hex, "accepted": ok, **detail})

        ok, detail = self._authenticate(p.pid_hex, p.declaration)
        t.emit("authentication", {"pid": p.pid_hex, "accepted": ok, **detail})
        if not ok:
            self._exclude(p, "authentication failed")
            return
        p.authenticated = True

        if cfg.scheme is Scheme.ENTANGLED:
            self._ticket_entangled(p)
        else:
            self._ticket_qkd(p)

    def _draw_tid(self, p: ParticipantRecord) -> None:
        p.tid = draw_tid(self.root.fork(f"{p.label}/tid"), self.config.tid_width)
        p.commitment = hash_commit(p.tid)
        self.transcript.emit("commitment", {"pid": p.pid_hex, "digest": p.commitment.hex(), "scheme": p.commitment.scheme})

    def _ticket_qkd(self, p: ParticipantRecord) -> None:
        cfg, t = self.config, self.transcript
        for role in AUTHORITIES:
            result = None
            for attempt in range(cfg.retries + 1):
                stream = self.root.fork(f"{p.label}/qkd/{role}/attempt{attempt}")
                eve = self._eavesdropper(p.index, role)
                if cfg.scheme is Scheme.BB84:
                    result = bb84_qkd(stream, eve, n_raw=cfg.qkd_raw, key_length=cfg.tid_width, sample_size=cfg.qkd_sample, abort_threshold=cfg.qber_abort)
                else:
                    result = semiquantum_qkd(stream, eve, n_raw=cfg.sqkd_raw, key_length=cfg.tid_width, sample_size=cfg.qkd_sample, abort_threshold=cfg.qber_abort)
                t.emit(
                    "qkd",
                    {
                        "pid": p.pid_hex,
                        "authority": role,
                        "attempt": attempt,
                        "aborted": result.aborted,
                        "reason": result.reason,
                        "error_rate": _finite(result.qber_estimate),
                        "errors": result.errors,
                        "sample_size": result.sample_size,
                    },
                )
                if not result.aborted:
                    break
            if result.aborted:
                self._exclude(p, f"key establishment with {role} aborted: {result.reason}")
                return
            if cfg.scheme is Scheme.BB84:
                participant_key, authority_key = result.key_a, result.key_b
            else:
                authority_key, participant_key = result.key_a, result.key_b
            p.keys[role] = participant_key
            self.authorities[role].keys[p.pid_hex] = authority_key
            t.emit("key_established", {"pid": p.pid_hex, "bits": authority_key.bits.width}, private(role))

        self._draw_tid(p)
        encrypted = split_deliver(p.tid, p.keys["LAT1"], p.keys["LAT2"], p.pid)
        t.emit("ciphertext", {"pid": p.pid_hex, "ciphertext": encrypted.ciphertext.hex()})
        if self.submit_ticket(p, encrypted):
            self._single_authority_probe(p, encrypted)

    def _ticket_entangled(self, p: ParticipantRecord) -> None:
        cfg, t = self.config, self.transcript
        check = None
        for attempt in range(cfg.retries + 1):
            stream = self.root.fork(f"{p.label}/bell/attempt{attempt}")
            eves = (self._eavesdropper(p.index, "LAT1"), self._eavesdropper(p.index, "LAT2"))
            check = bell_distribute_and_check(stream, eves, n_pairs=cfg.bell_pairs, threshold=cfg.anticorrelation_abort)
            t.emit(
                "bell_check",
                {
                    "pid": p.pid_hex,
                    "attempt": attempt,
                    "aborted": not check.proceed,
                    "reason": check.reason,
                    "violation_rate": {"LAT1": check.violation_rate1, "LAT2": check.violation_rate2},
                    "violations": {"LAT1": check.violations1, "LAT2": check.violations2},
                    "checked": {"LAT1": check.checked1, "LAT2": check.checked2},
                },
            )
            if check.proceed:
                break
        if not check.proceed:
            self._exclude(p, "entanglement check aborted: anti-correlation violation")
            return

        self._draw_tid(p)
        gate = CooperationGate()
        if self._attacked(Attack.SINGLE_AUTHORITY_OPEN, p.index):
            lone = CooperationGate()
            lone.join(self._acting_authority())
            try:
                lone.require()
            except CooperationRequired as exc:
                t.emit("cooperation_refused", {"pid": p.pid_hex, "authority": self._acting_authority(), "reason": str(exc)})
        for role in AUTHORITIES:
            gate.join(role)
        delivery = ent_deliver_tid(check.session, p.tid, self.root.fork(f"{p.label}/swap"), gate)
        t.emit(
            "swap_announcements",
            {
                "pid": p.pid_hex,
                "carriers": "".join(str(a.carrier) for a in delivery.announcements),
                "outcomes": "".join(str(a.p_outcome) for a in delivery.announcements),
            },
        )
        self.decoded[p.pid_hex] = delivery.delivered
        t.emit("joint_decode", {"pid": p.pid_hex, "blocks": len(delivery.announcements)}, private("LAT1"))
        t.emit("joint_decode", {"pid": p.pid_hex, "blocks": len(delivery.announcements)}, private("LAT2"))
        self.submit_ticket(p, delivery.delivered)

    def _acting_authority(self) -> str:
        return "LAT2" if self.adversary.authority == "LAT2" else "LAT1"

    def _single_authority_probe(self, p: ParticipantRecord, encrypted: EncryptedTid) -> None:
        if not self._attacked(Attack.SINGLE_AUTHORITY_OPEN, p.index):
            return
        role = self._acting_authority()
        gate = CooperationGate()
        gate.join(role, self.authorities[role].keys[p.pid_hex])
        payload = {"pid": p.pid_hex, "authority": role}
        try:
            gate.open(encrypted)
        except CooperationRequired as exc:
            payload["reason"] = str(exc)
        if encrypted.ciphertext.width <= POSTERIOR_MAX_WIDTH:
            counts = one_key_posterior(encrypted, self.authorities[role].keys[p.pid_hex])
            payload["posterior_candidates"] = len(counts)
            payload["posterior_uniform"] = len(set(counts.values())) == 1 and len(counts) == 1 << encrypted.ciphertext.width
        self.transcript.emit("cooperation_refused", payload)

    def submit_ticket(self, p: ParticipantRecord, delivered) -> bool:
        """Ticket desk: one ticket per authenticated PID, only while ticketing is open."""
        t = self.transcript
        if t.phase is not Phase.TICKETING:
            t.emit("late_ticket_rejected", {"pid": p.pid_hex, "phase": t.phase.label})
            return False
        if not p.authenticated:
            t.emit("ticket_rejected", {"pid": p.pid_hex, "reason": "not authenticated"})
            return False
        if p.pid_hex in self.received:
            t.emit("ticket_rejected", {"pid": p.pid_hex, "reason": "duplicate submission"})
            return False
        self.received[p.pid_hex] = delivered
        p.tid_accepted = True
        t.emit("ticket_accepted", {"pid": p.pid_hex, "width": self.config.tid_width})
        return True

    def late_submission(self, p: ParticipantRecord) -> None:
        if p.pid is None:
            return
        late = draw_tid(self.root.fork(f"adversary/late/{p.label}"), self.config.tid_width)
        self.submit_ticket(p, late)

    def rewards(self) -> None:
        cfg, t = self.config, self.transcript
        gate = CooperationGate()
        for role in AUTHORITIES:
            gate.join(role)
        valid = []
        for p in self.participants:
            if not p.tid_accepted:
                continue
            item = self.received[p.pid_hex]
            if isinstance(item, EncryptedTid):
                keys = CooperationGate()
                for role in AUTHORITIES:
                    keys.join(role, self.authorities[role].keys[p.pid_hex])
                opened = keys.open(item)
            else:
                gate.require()
                opened = item
            if not p.commitment.matches(opened):
                t.emit("ticket_void", {"pid": p.pid_hex, "opened": opened.hex(), "reason": "opened ticket does not match commitment"})
                self._exclude(p, "opened ticket does not match commitment")
                continue
            valid.append((p, opened))

        if not valid:
            t.aborted = True
            t.abort_reason = "no valid tickets"
            t.emit("aborted", {"reason": t.abort_reason})
            raise LotteryAborted(t.abort_reason, t)

        published = {role: [(p.pid_hex, tid) for p, tid in valid] for role in AUTHORITIES}
        if self.adversary.attack is Attack.CORRUPT_AUTHORITY:
            role = self._acting_authority()
            target = self.participants[self._target()]
            published[role] = [(pid, tid.flip(0) if pid == target.pid_hex else tid) for pid, tid in published[role]]
        for role in AUTHORITIES:
            t.emit("tickets_opened", {"authority": role, "tickets": [{"pid": pid, "tid": tid.hex()} for pid, tid in published[role]]})

        announcer = self._acting_authority() if self.adversary.attack is Attack.CORRUPT_AUTHORITY else "LAT1"
        winner = xor_fold([tid for _, tid in published[announcer]])
        t.winner = winner
        t.emit("winner", {"winner": winner.hex(), "announced_by": announcer, "tickets": len(valid)})

        for p, _ in valid:
            revealed = p.tid
            if self._attacked(Attack.POST_HOC_TID_SWAP, p.index):
                revealed = winner if winner != p.tid else p.tid.flip(0)
            t.emit("reveal", {"pid": p.pid_hex, "tid": revealed.hex()})

        table = compute_rewards(published[announcer], winner, cfg.reward_policy)
        t.rewards = table
        t.emit(
            "rewards",
            {
                "policy": cfg.reward_policy.value,
                "no_exact_winner": table.no_exact_winner,
                "shares": [{"pid": e.participant, "distance": e.distance, "share": f"{e.share.numerator}/{e.share.denominator}"} for e in table.entries],
            },
        )
        verdict = verify_public(t.public_events(), winner.hex())
        t.verdicts.append({"kind": "outcome", "subject": None, "ok": verdict.ok, "reason": verdict.reason, "culprit": verdict.culprit})


def _finite(x: float):
    return None if x != x else float(x)


def draw_tid(stream: RandomStream, width: int) -> BitString:
    """A participant's ticket: ``width`` fresh bits from its own QRNG stream."""
    return stream.bits(width)


def inject_adversary(run: LotteryRun, adversary: AdversaryConfig) -> None:
    """Wire ``adversary`` into ``run``; the target must be a participant of the run."""
    if adversary.target is not None and not 0 <= adversary.target < len(run.participants):
        raise ValueError(f"unknown adversary target {adversary.target}")
    if adversary.authority not in ("LAT1", "LAT2", "both"):
        raise ValueError(f"unknown authority {adversary.authority!r}")
    if adversary.attack in (Attack.SINGLE_AUTHORITY_OPEN, Attack.CORRUPT_AUTHORITY) and adversary.authority == "both":
        raise ValueError("a single authority must be named for this attack")
    run.adversary = adversary
    run.transcript.emit("adversary", adversary.to_dict(), private("simulator"))


def run_lottery(config: RunConfig) -> ProtocolTranscript:
    """Registration, ticketing and rewards for ``config``.

    Raises :class:`LotteryAborted` (carrying the transcript) when no ticket survives.
    """
    run = LotteryRun(config)
    inject_adversary(run, config.adversary)
    return run.execute()


def run_lottery_for(scheme: Scheme, n_participants: int, adversary: AdversaryConfig, config: RunConfig, master_seed: int) -> ProtocolTranscript:
    return run_lottery(replace(config, scheme=scheme, n_participants=n_participants, adversary=adversary, master_seed=master_seed))


# -- detection statistics ---------------------------------------------------------------


@dataclass(frozen=True)
class DetectionSummary:
    attack: str
    scheme: str
    trials: int
    detections: int
    probability: float
    interval: tuple[float, float]
    mean_error_rate: Optional[float]
    error_rates: int
    aborted_runs: int

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "scheme": self.scheme,
            "trials": self.trials,
            "detections": self.detections,
            "detection_probability": self.probability,
            "wilson_95": list(self.interval),
            "mean_error_rate": self.mean_error_rate,
            "error_rate_samples": self.error_rates,
            "aborted_runs": self.aborted_runs,
        }


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ci = binomtest(successes, trials).proportion_ci(confidence_level=confidence, method="wilson")
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


def _attacked_channel(event: dict, adversary: AdversaryConfig, pid_of_target: Optional[str]) -> list[float]:
    p = event["payload"]
    if pid_of_target is not None and p["pid"] != pid_of_target:
        return []
    roles = AUTHORITIES if adversary.authority == "both" else (adversary.authority,)
    if event["type"] == "qkd":
        if adversary.attack is Attack.INTERCEPT_RESEND and p["authority"] not in roles:
            return []
        return [] if p["error_rate"] is None else [p["error_rate"]]
    if adversary.attack is Attack.INTERCEPT_RESEND:
        return [p["violation_rate"][r] for r in roles]
    return list(p["violation_rate"].values())


def trial_outcome(transcript: ProtocolTranscript, adversary: AdversaryConfig) -> tuple[bool, list[float]]:
    """Whether a run flagged the configured attack, and the error rates it measured."""
    events = transcript.events
    attack = adversary.attack
    target_pid = None
    if attack is Attack.INTERCEPT_RESEND and adversary.target is not None:
        target_pid = next((e["payload"]["pid"] for e in events if e["type"] == "pid_issued" and e["payload"]["participant"] == f"P{adversary.target}"), None)

    rates: list[float] = []
    sessions = [e for e in events if e["type"] in ("qkd", "bell_check") and e["payload"]["attempt"] == 0]
    for e in sessions:
        rates.extend(_attacked_channel(e, adversary, target_pid))

    if attack is Attack.NONE:
        flagged = any(e["type"] in ("excluded", "impersonation_attempt", "ticket_void", "aborted") for e in events)
        flagged = flagged or any(not v["ok"] for v in transcript.verdicts if v["kind"] == "outcome")
        flagged = flagged or any(e["payload"]["aborted"] for e in events if e["type"] in ("qkd", "bell_check"))
        return flagged, rates
    if attack is Attack.INTERCEPT_RESEND:
        roles = AUTHORITIES if adversary.authority == "both" else (adversary.authority,)
        flagged = False
        for e in events:
            p = e["payload"]
            if e["type"] not in ("qkd", "bell_check") or not p["aborted"]:
                continue
            if target_pid is not None and p["pid"] != target_pid:
                continue
            if e["type"] == "qkd" and p["authority"] not in roles:
                continue
            flagged = True
        return flagged, rates
    if attack is Attack.FORGE_DECLARATION:
        return any(e["type"] == "impersonation_attempt" and not e["payload"]["accepted"] for e in events), rates
    if attack in (Attack.POST_HOC_TID_SWAP, Attack.CORRUPT_AUTHORITY):
        return any(v["kind"] == "outcome" and not v["ok"] and v["culprit"] for v in transcript.verdicts), rates
    if attack is Attack.SINGLE_AUTHORITY_OPEN:
        return any(e["type"] == "cooperation_refused" for e in events), rates
    if attack is Attack.LATE_TICKET:
        return any(e["type"] == "late_ticket_rejected" for e in events), rates
    raise ValueError(f"unhandled attack {attack}")


def trial_seed(master_seed: int, trial: int) -> int:
    return RandomStream(master_seed, "stats").fork(f"trial{trial}").bits(64).value


def detection_stats(config: RunConfig, trials: int, master_seed: Optional[int] = None) -> DetectionSummary:
    """Repeat independent runs on forked seeds and summarise how often the attack was flagged."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = config.master_seed if master_seed is None else master_seed
    detections = 0
    aborted = 0
    rates: list[float] = []
    for i in range(trials):
        cfg = replace(config, master_seed=trial_seed(seed, i))
        try:
            transcript = run_lottery(cfg)
        except LotteryAborted as exc:
            transcript = exc.transcript
            aborted += 1
        flagged, r = trial_outcome(transcript, config.adversary)
        detections += flagged
        rates.extend(r)
    return DetectionSummary(
        attack=config.adversary.attack.value,
        scheme=config.scheme.value,
        trials=trials,
        detections=detections,
        probability=detections / trials,
        interval=wilson_interval(detections, trials),
        mean_error_rate=float(np.mean(rates)) if rates else None,
        error_rates=len(rates),
        aborted_runs=aborted,
    )
