"""Participant authentication.

Two registration flows are simulated here:

* BB84 eliminated signatures. The participant sends two identical random BB84
  sequences, one to each ticketing authority. Each authority forwards every
  element to its peer with probability ``forward_probability`` or keeps it, and
  measures whatever it ends up holding in a random basis. An outcome rules out
  the orthogonal state, which is what the authority stores.
* Semi-quantum measure-or-reflect. The registration authority sends ``|+>``
  qubits that travel participant -> LAT1 -> participant -> LAT2. The
  participant either passes or Z-measures each qubit, doing the same thing on
  both passes. The authorities keep positions where they chose the same basis.

BB84 states are encoded as integers ``2 * basis + bit``: 0 ``|0>``, 1 ``|1>``,
2 ``|+>``, 3 ``|->``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .bits import BitString
from .qsim import StateBatch, X, Z
from .rng import RandomStream

DEFAULT_SIGNATURE_LENGTH = 2048
DEFAULT_THRESHOLD = 0.05
DEFAULT_MIN_PASS_FRACTION = 0.25
FORWARD_PROBABILITY = 0.5

STATE_NAMES = ("|0>", "|1>", "|+>", "|->")


class Bb84State(enum.IntEnum):
    ZERO = 0
    ONE = 1
    PLUS = 2
    MINUS = 3


class Action(enum.IntEnum):
    PASS = 0
    MEASURE_Z = 1


def state_code(bit, basis):
    return 2 * np.asarray(basis) + np.asarray(bit)


def eliminated_state(outcome, basis):
    """The BB84 state ruled out by ``outcome`` in ``basis``: the orthogonal one."""
    return 2 * np.asarray(basis) + (1 - np.asarray(outcome))


@dataclass(frozen=True)
class SignatureDeclaration:
    """Classical description of the participant's BB84 sequence, as state codes."""

    states: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=np.int8)
        if states.ndim != 1 or np.any((states < 0) | (states > 3)):
            raise ValueError("declaration must be a 1-D sequence of state codes 0..3")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class EliminatedSignature:
    """What one authority recorded for one participant.

    Each record is ``(position, eliminated state, forwarded?)``. A position can
    appear twice (kept directly and forwarded by the peer) or not at all.
    """

    length: int
    positions: np.ndarray
    eliminated: np.ndarray
    forwarded: np.ndarray

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class Bb84Registration:
    pid: BitString
    declaration: SignatureDeclaration
    lat1: EliminatedSignature
    lat2: EliminatedSignature


@dataclass(frozen=True)
class AuthResult:
    accepted: bool
    mismatches: int
    checked: int
    reason: str = ""

    @property
    def mismatch_fraction(self) -> float:
        return self.mismatches / self.checked if self.checked else 0.0


def _measure_held(states: np.ndarray, stream: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    bases = stream.fork("basis").integers(2, len(states))
    batch = StateBatch.bb84(states & 1, states >> 1)
    outcomes, _ = batch.measure(0, bases, stream.fork("measure"))
    return eliminated_state(outcomes, bases).astype(np.int8), bases


def register_bb84(
    pid: BitString,
    length: int,
    randomness: RandomStream,
    *,
    forward_probability: float = FORWARD_PROBABILITY,
    min_length: int = DEFAULT_SIGNATURE_LENGTH,
) -> Bb84Registration:
    if length < min_length:
        raise ValueError(f"signature length {length} below minimum {min_length}")
    participant = randomness.fork("participant")
    bits = participant.fork("bits").bit_array(length).astype(np.int64)
    bases = participant.fork("bases").bit_array(length).astype(np.int64)
    states = state_code(bits, bases)

    fwd1 = randomness.fork("LAT1/forward").bernoulli(forward_probability, length)
    fwd2 = randomness.fork("LAT2/forward").bernoulli(forward_probability, length)
    idx = np.arange(length)

    signatures = []
    for name, own_keep, peer_fwd in (("LAT1", ~fwd1, fwd2), ("LAT2", ~fwd2, fwd1)):
        positions = np.concatenate([idx[own_keep], idx[peer_fwd]])
        forwarded = np.concatenate([np.zeros(own_keep.sum(), bool), np.ones(peer_fwd.sum(), bool)])
        elim, _ = _measure_held(states[positions], randomness.fork(name))
        for arr in (positions, elim, forwarded):
            arr.setflags(write=False)
        signatures.append(EliminatedSignature(length, positions, elim, forwarded))

    return Bb84Registration(pid, SignatureDeclaration(states), signatures[0], signatures[1])


def verify_declaration(
    signature: EliminatedSignature,
    declaration: SignatureDeclaration,
    threshold_fraction: float = DEFAULT_THRESHOLD,
) -> AuthResult:
    """Count records whose eliminated state is exactly what the participant claims to have sent."""
    if len(declaration) != signature.length:
        raise ValueError(f"declaration length {len(declaration)} != signature length {signature.length}")
    declared = declaration.states[signature.positions]
    mismatches = int(np.sum(declared == signature.eliminated))
    checked = len(signature)
    accepted = mismatches <= threshold_fraction * checked
    return AuthResult(accepted, mismatches, checked, "" if accepted else "signature mismatches above threshold")


def verify_both(
    registration_lat1: EliminatedSignature,
    registration_lat2: EliminatedSignature,
    declaration: SignatureDeclaration,
    threshold_fraction: float = DEFAULT_THRESHOLD,
) -> tuple[bool, AuthResult, AuthResult]:
    """Both authorities must accept."""
    r1 = verify_declaration(registration_lat1, declaration, threshold_fraction)
    r2 = verify_declaration(registration_lat2, declaration, threshold_fraction)
    return r1.accepted and r2.accepted, r1, r2


def forge_declaration(length: int, randomness: RandomStream) -> SignatureDeclaration:
    """An impersonator's guess: uniformly random BB84 states."""
    return SignatureDeclaration(randomness.integers(4, length))


@dataclass(frozen=True)
class SemiQuantumRecord:
    """Ground truth of one semi-quantum registration.

    ``participant_action`` is private to the participant; the authorities see
    only their own bases and outcomes.
    """

    participant_action: np.ndarray
    lat1_basis: np.ndarray
    lat2_basis: np.ndarray
    lat1_outcome: np.ndarray
    lat2_outcome: np.ndarray

    @property
    def kept(self) -> np.ndarray:
        return self.lat1_basis == self.lat2_basis

    def __len__(self) -> int:
        return len(self.participant_action)


def register_semiquantum(
    pid: BitString,
    n: int,
    randomness: RandomStream,
    *,
    pass_probability: float = 0.5,
    min_length: int = DEFAULT_SIGNATURE_LENGTH,
) -> SemiQuantumRecord:
    if n < min_length:
        raise ValueError(f"registration length {n} below minimum {min_length}")
    actions = np.where(randomness.fork("participant/action").bernoulli(pass_probability, n), Action.PASS, Action.MEASURE_Z)
    measures = actions == Action.MEASURE_Z
    b1 = randomness.fork("LAT1/basis").integers(2, n)
    b2 = randomness.fork("LAT2/basis").integers(2, n)

    qubits = StateBatch.bb84(np.zeros(n, dtype=np.int64), X)
    _, qubits = qubits.measure(0, Z, randomness.fork("participant/pass1"), where=measures)
    o1, qubits = qubits.measure(0, b1, randomness.fork("LAT1/measure"))
    _, qubits = qubits.measure(0, Z, randomness.fork("participant/pass2"), where=measures)
    o2, _ = qubits.measure(0, b2, randomness.fork("LAT2/measure"))

    arrays = [actions.astype(np.int8), b1.astype(np.int8), b2.astype(np.int8), o1.astype(np.int8), o2.astype(np.int8)]
    for arr in arrays:
        arr.setflags(write=False)
    return SemiQuantumRecord(*arrays)


def verify_semiquantum(
    record: SemiQuantumRecord,
    declared_actions,
    threshold_fraction: float = DEFAULT_THRESHOLD,
    min_pass_fraction: float = DEFAULT_MIN_PASS_FRACTION,
) -> AuthResult:
    """Compare LAT1 and LAT2 outcomes on kept positions the participant claims to have passed."""
    declared = np.asarray(declared_actions)
    if declared.shape != (len(record),):
        raise ValueError(f"declared {declared.size} actions for {len(record)} positions")
    claimed_pass = declared == Action.PASS
    if claimed_pass.mean() < min_pass_fraction:
        return AuthResult(False, 0, 0, "insufficient pass positions")
    checked = record.kept & claimed_pass
    n_checked = int(checked.sum())
    if n_checked == 0:
        return AuthResult(False, 0, 0, "no checkable positions")
    mismatches = int(np.sum(record.lat1_outcome[checked] != record.lat2_outcome[checked]))
    accepted = mismatches <= threshold_fraction * n_checked
    return AuthResult(accepted, mismatches, n_checked, "" if accepted else "semi-quantum mismatches above threshold")


def forge_actions(n: int, randomness: RandomStream) -> np.ndarray:
    return randomness.integers(2, n).astype(np.int8)
