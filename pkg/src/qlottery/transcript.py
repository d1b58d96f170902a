"""Event log of a lottery run, its JSON form, and public verification.

JSON layout (keys sorted, two-space indent, trailing newline)::

    {
      "version": 1,
      "mode": "secure" | "NON-SECURE",
      "status": "completed" | "aborted",
      "abort_reason": null | str,
      "config_echo": {...},
      "events": [{"index", "phase", "visibility", "type", "payload"}, ...],
      "winner_hex": null | str,
      "rewards": [{"pid", "tid", "distance", "share", "share_decimal"}, ...],
      "verdicts": [{"kind", "subject", "ok", "reason", "culprit"}, ...]
    }

Bit strings are lowercase big-endian hex of their canonical bytes. Visibility
is ``public`` or ``private:<role>``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .bits import BitString
from .keylink import ProtocolViolation
from .tickets import Commitment, RewardTable, Verdict, verify_outcome

VERSION = 1
PUBLIC = "public"


def private(role: str) -> str:
    return f"private:{role}"


class Phase(enum.IntEnum):
    REGISTRATION = 0
    TICKETING = 1
    REWARDS = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass
class ProtocolTranscript:
    config_echo: dict
    non_secure: bool = False
    phase: Phase = Phase.REGISTRATION
    events: list[dict] = field(default_factory=list)
    winner: Optional[BitString] = None
    rewards: Optional[RewardTable] = None
    verdicts: list[dict] = field(default_factory=list)
    aborted: bool = False
    abort_reason: Optional[str] = None

    def emit(self, kind: str, payload: dict, visibility: str = PUBLIC) -> dict:
        event = {
            "index": len(self.events),
            "phase": self.phase.label,
            "visibility": visibility,
            "type": kind,
            "payload": payload,
        }
        self.events.append(event)
        return event

    def public_events(self) -> list[dict]:
        return [e for e in self.events if e["visibility"] == PUBLIC]

    def of_type(self, kind: str) -> list[dict]:
        return [e for e in self.events if e["type"] == kind]

    def to_dict(self) -> dict:
        rewards = []
        if self.rewards is not None:
            for entry in self.rewards.entries:
                rewards.append(
                    {
                        "pid": entry.participant,
                        "tid": entry.tid.hex(),
                        "distance": entry.distance,
                        "share": f"{entry.share.numerator}/{entry.share.denominator}",
                        "share_decimal": f"{float(entry.share):.6f}",
                    }
                )
        return {
            "version": VERSION,
            "mode": "NON-SECURE" if self.non_secure else "secure",
            "status": "aborted" if self.aborted else "completed",
            "abort_reason": self.abort_reason,
            "config_echo": self.config_echo,
            "events": self.events,
            "winner_hex": None if self.winner is None else self.winner.hex(),
            "rewards": rewards,
            "verdicts": self.verdicts,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())


def dumps(data: dict) -> str:
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + "\n"


def phase_barrier(transcript: ProtocolTranscript, phase: Phase) -> None:
    """Close the current phase and open ``phase``; only the next phase is allowed."""
    if phase != transcript.phase + 1:
        raise ProtocolViolation(f"cannot move from {transcript.phase.label} to {Phase(phase).label}")
    closed = transcript.phase
    transcript.emit("phase_closed", {"phase": closed.label})
    transcript.phase = Phase(phase)
    transcript.emit("phase_opened", {"phase": transcript.phase.label})


class TranscriptFormatError(ValueError):
    pass


def verify_public(events: Iterable[dict], winner_hex: Optional[str]) -> Verdict:
    """Re-derive the outcome verdict from public events and the claimed winner.

    Order of checks: each revealed TID against its commitment (names the
    participant), each authority's published ticket list against the
    commitments (names the authority), the announced winner against the
    claimed one, then the XOR of the revealed TIDs.
    """
    events = [e for e in events if e.get("visibility") == PUBLIC]
    try:
        commitments = {}
        width = None
        for e in events:
            if e["type"] == "commitment":
                commitments[e["payload"]["pid"]] = Commitment.from_hex(e["payload"]["digest"])
            elif e["type"] == "ticket_accepted":
                width = int(e["payload"]["width"])
        reveals = [(e["payload"]["pid"], e["payload"]["tid"]) for e in events if e["type"] == "reveal"]
        opened = [e["payload"] for e in events if e["type"] == "tickets_opened"]
        announced = [e["payload"] for e in events if e["type"] == "winner"]
    except (KeyError, TypeError, ValueError) as exc:
        raise TranscriptFormatError(f"malformed public event: {exc}") from exc

    if not announced or winner_hex is None:
        return Verdict(False, "no winner announced")
    if width is None:
        return Verdict(False, "no accepted tickets")

    def bits(hex_text: str) -> BitString:
        try:
            return BitString.from_hex(hex_text, width)
        except ValueError as exc:
            raise TranscriptFormatError(f"bad bit string {hex_text!r}") from exc

    revealed = []
    for pid, tid_hex in reveals:
        if pid not in commitments:
            return Verdict(False, "reveal without commitment", pid)
        tid = bits(tid_hex)
        if not commitments[pid].matches(tid):
            return Verdict(False, "commitment mismatch", pid)
        revealed.append((pid, tid))

    for listing in opened:
        for item in listing["tickets"]:
            if not commitments.get(item["pid"], Commitment(BitString(0, 256))).matches(bits(item["tid"])):
                return Verdict(False, "published ticket contradicts commitment", listing["authority"])
        if {item["pid"] for item in listing["tickets"]} != {pid for pid, _ in reveals}:
            return Verdict(False, "revealed tickets differ from opened tickets", listing["authority"])

    claimed = bits(winner_hex)
    for a in announced:
        if bits(a["winner"]) != claimed:
            return Verdict(False, "winner mismatch")
    if not revealed:
        return Verdict(False, "no tickets")
    return verify_outcome(revealed, [commitments[pid] for pid, _ in revealed], claimed)


def verify_transcript_dict(data: dict) -> Verdict:
    if not isinstance(data, dict) or "events" not in data or "winner_hex" not in data:
        raise TranscriptFormatError("not a lottery transcript")
    if data.get("version") != VERSION:
        raise TranscriptFormatError(f"unsupported transcript version {data.get('version')!r}")
    return verify_public(data["events"], data["winner_hex"])
