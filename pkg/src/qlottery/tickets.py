"""Ticket arithmetic: commitments, the XOR-fold draw, Hamming scoring and verification."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from operator import xor
from typing import Callable, Optional, Sequence, Union

from .bits import BitString

HASH_SCHEME = "sha-256"


@dataclass(frozen=True)
class Commitment:
    digest: BitString
    scheme: str = HASH_SCHEME

    def matches(self, value: Union[BitString, bytes]) -> bool:
        return hash_commit(value).digest == self.digest

    def hex(self) -> str:
        return self.digest.hex()

    @classmethod
    def from_hex(cls, text: str) -> Commitment:
        return cls(BitString.from_hex(text, 256))


def hash_commit(value: Union[BitString, bytes]) -> Commitment:
    """SHA-256 over the canonical big-endian encoding of ``value``."""
    data = value.to_bytes() if isinstance(value, BitString) else bytes(value)
    return Commitment(BitString.from_bytes(hashlib.sha256(data).digest()))


def xor_fold(tids: Sequence[BitString]) -> BitString:
    """Winning ticket: bitwise XOR of every submitted TID."""
    tids = list(tids)
    if not tids:
        raise ValueError("xor_fold needs at least one ticket")
    return reduce(xor, tids)


def hamming(a: BitString, b: BitString) -> int:
    return (a ^ b).popcount()


class RewardPolicy(enum.Enum):
    EXACT_SPLIT = "exact"
    # closeness score (width - d) / width
    DISTANCE_PROPORTIONAL = "distance"
    # score d / width, taking "proportional to the Hamming distance" literally
    DISTANCE_LITERAL = "distance-literal"


def closeness_score(distance: int, width: int) -> Fraction:
    return Fraction(width - distance, width)


def literal_distance_score(distance: int, width: int) -> Fraction:
    return Fraction(distance, width)


@dataclass(frozen=True)
class RewardEntry:
    participant: str
    tid: BitString
    distance: int
    share: Fraction


@dataclass(frozen=True)
class RewardTable:
    entries: tuple[RewardEntry, ...]
    policy: RewardPolicy
    no_exact_winner: bool = False

    @property
    def total(self) -> Fraction:
        return sum((e.share for e in self.entries), Fraction(0))

    def share_of(self, participant: str) -> Fraction:
        return sum((e.share for e in self.entries if e.participant == participant), Fraction(0))


def compute_rewards(
    tids: Sequence[tuple[str, BitString]],
    winner: BitString,
    policy: RewardPolicy = RewardPolicy.DISTANCE_PROPORTIONAL,
    score: Optional[Callable[[int, int], Fraction]] = None,
) -> RewardTable:
    """Split a unit prize among ticket holders.

    ``EXACT_SPLIT`` pays holders of the winning ticket equally. The distance
    policies pay ``score(d, width)`` normalized over all tickets; ``score``
    overrides the policy's default scoring function.
    """
    distances = []
    for pid, tid in tids:
        if tid.width != winner.width:
            raise ValueError(f"ticket of {pid} has width {tid.width}, winner has {winner.width}")
        distances.append(hamming(tid, winner))

    if policy is RewardPolicy.EXACT_SPLIT:
        weights = [Fraction(1) if d == 0 else Fraction(0) for d in distances]
    else:
        if score is None:
            score = closeness_score if policy is RewardPolicy.DISTANCE_PROPORTIONAL else literal_distance_score
        weights = [Fraction(score(d, winner.width)) for d in distances]

    total = sum(weights, Fraction(0))
    shares = [w / total if total else Fraction(0) for w in weights]
    entries = tuple(RewardEntry(pid, tid, d, s) for (pid, tid), d, s in zip(tids, distances, shares))
    return RewardTable(entries, policy, no_exact_winner=not any(d == 0 for d in distances))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = "ok"
    culprit: Optional[str] = None

    def __str__(self) -> str:
        if self.ok:
            return "OK"
        return f"{self.reason} ({self.culprit})" if self.culprit else self.reason


COMMITMENT_MISMATCH = "commitment mismatch"
WINNER_MISMATCH = "winner mismatch"


def verify_outcome(
    announced_tids: Sequence[tuple[str, BitString]],
    commitments: Sequence[Commitment],
    winner: BitString,
) -> Verdict:
    """Check revealed tickets against their commitments and the announced winner.

    Both sequences are aligned by participant. The first participant whose
    revealed TID does not hash to its commitment is named; otherwise the XOR of
    the revealed TIDs must equal ``winner``.
    """
    if len(announced_tids) != len(commitments):
        raise ValueError("announced tickets and commitments are not aligned")
    if not announced_tids:
        return Verdict(False, "no tickets")
    for (pid, tid), commitment in zip(announced_tids, commitments):
        if not commitment.matches(tid):
            return Verdict(False, COMMITMENT_MISMATCH, pid)
    try:
        folded = xor_fold([tid for _, tid in announced_tids])
    except ValueError:
        return Verdict(False, WINNER_MISMATCH)
    if folded != winner:
        return Verdict(False, WINNER_MISMATCH)
    return Verdict(True)
