"""Confidential ticket delivery from a participant to the two ticketing authorities.

Three routes are modelled:

* BB84 and semi-quantum (Boyer-style) QKD producing one key per authority,
  then the TID sent under ``K_LAT1 xor K_LAT2`` (:func:`split_deliver`).
* Entanglement swapping: the participant shares singlets with both
  authorities, checks them for eavesdropping, and encodes two bits per pair of
  pairs with a local unitary followed by a Bell measurement.

Channels are noiseless; the only disturbance is an :class:`Eavesdropper`.
There is no error correction or privacy amplification.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bits import BitString
from .qsim import BellState, StateBatch, Z, apply_pauli, bell_branches, identify_bell, prepare_bell, tensor
from .rng import RandomStream

log = logging.getLogger(__name__)

KEY_LENGTH = 256
QKD_SAMPLE = 128
QKD_RAW = 4 * (KEY_LENGTH + QKD_SAMPLE)
SQKD_RAW = 8 * (KEY_LENGTH + QKD_SAMPLE)
QBER_ABORT = 0.11
BELL_PAIRS = 256
ANTICORRELATION_ABORT = 0.05

LAT_ROLES = ("LAT1", "LAT2")


class CooperationRequired(PermissionError):
    """An operation needing both ticketing authorities was attempted by one."""


class CapabilityError(PermissionError):
    """A classical party tried something only a quantum party can do."""


class ProtocolViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class Eavesdropper:
    """Intercept-resend on a fraction of transiting qubits.

    ``basis`` is ``"random"`` (Z or X per qubit) or ``"z"``.
    """

    fraction: float = 1.0
    basis: str = "random"

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be in [0, 1]")
        if self.basis not in ("random", "z"):
            raise ValueError("basis policy must be 'random' or 'z'")

    def intercept(self, batch: StateBatch, qubit: int, randomness: RandomStream) -> StateBatch:
        """Measure-and-resend: the collapsed post-state is exactly the resent state."""
        n = len(batch)
        hit = randomness.fork("hit").bernoulli(self.fraction, n)
        if self.basis == "z":
            bases = np.full(n, Z)
        else:
            bases = randomness.fork("basis").integers(2, n)
        _, batch = batch.measure(qubit, bases, randomness.fork("measure"), where=hit)
        return batch


@dataclass(frozen=True)
class SiftedKey:
    bits: BitString
    qber_estimate: float
    sample_size: int


@dataclass(frozen=True)
class QkdResult:
    """One QKD session. ``keys`` is ``(quantum/sender side, receiver side)`` unless aborted."""

    aborted: bool
    reason: str
    qber_estimate: float
    sample_size: int
    errors: int
    keys: Optional[tuple[SiftedKey, SiftedKey]] = None

    @property
    def key_a(self) -> Optional[SiftedKey]:
        return None if self.keys is None else self.keys[0]

    @property
    def key_b(self) -> Optional[SiftedKey]:
        return None if self.keys is None else self.keys[1]


def _estimate(sample_a: np.ndarray, sample_b: np.ndarray) -> tuple[int, float]:
    errors = int(np.sum(sample_a != sample_b))
    return errors, errors / len(sample_a) if len(sample_a) else 0.0


def bb84_qkd(
    randomness: RandomStream,
    eavesdropper: Optional[Eavesdropper] = None,
    *,
    n_raw: int = QKD_RAW,
    key_length: int = KEY_LENGTH,
    sample_size: int = QKD_SAMPLE,
    abort_threshold: float = QBER_ABORT,
) -> QkdResult:
    """Prepare-and-measure BB84 with basis sifting and a disclosed QBER sample."""
    alice_bits = randomness.fork("A/bits").bit_array(n_raw).astype(np.int64)
    alice_bases = randomness.fork("A/bases").bit_array(n_raw).astype(np.int64)
    qubits = StateBatch.bb84(alice_bits, alice_bases)
    if eavesdropper is not None:
        qubits = eavesdropper.intercept(qubits, 0, randomness.fork("E"))
    bob_bases = randomness.fork("B/bases").bit_array(n_raw).astype(np.int64)
    bob_bits, _ = qubits.measure(0, bob_bases, randomness.fork("B/measure"))

    sifted = np.flatnonzero(alice_bases == bob_bases)
    if len(sifted) < key_length + sample_size:
        return QkdResult(True, "insufficient sifted bits", float("nan"), 0, 0)
    order = randomness.fork("sample").permutation(len(sifted))
    sample = sifted[np.sort(order[:sample_size])]
    remaining = sifted[np.sort(order[sample_size:])][:key_length]

    errors, qber = _estimate(alice_bits[sample], bob_bits[sample])
    if qber > abort_threshold:
        return QkdResult(True, "qber above threshold", qber, sample_size, errors)
    keys = tuple(
        SiftedKey(BitString.from_array(bits[remaining]), qber, sample_size) for bits in (alice_bits, bob_bits)
    )
    return QkdResult(False, "", qber, sample_size, errors, keys)


class ClassicalParty:
    """A party restricted to reflecting qubits or measuring them in Z and resending.

    There is deliberately no way to measure in another basis.
    """

    REFLECT = 0
    SIFT = 1

    def __init__(self, randomness: RandomStream):
        self.randomness = randomness

    def measure(self, batch: StateBatch, basis: int, where=None):
        if basis != Z:
            raise CapabilityError("classical party can only measure in the computational basis")
        return batch.measure(0, Z, self.randomness.fork("measure"), where=where)

    def act(self, batch: StateBatch, actions: np.ndarray):
        """Apply REFLECT/SIFT per qubit; returns ``(sift outcomes or -1, returned batch)``."""
        actions = np.asarray(actions)
        if np.any((actions != self.REFLECT) & (actions != self.SIFT)):
            raise CapabilityError("classical party actions are REFLECT or SIFT only")
        return self.measure(batch, Z, where=actions == self.SIFT)


def semiquantum_qkd(
    randomness: RandomStream,
    eavesdropper: Optional[Eavesdropper] = None,
    *,
    n_raw: int = SQKD_RAW,
    key_length: int = KEY_LENGTH,
    sample_size: int = QKD_SAMPLE,
    abort_threshold: float = QBER_ABORT,
) -> QkdResult:
    """Boyer-style semi-quantum QKD between a quantum sender and a classical receiver.

    Key bits come from SIFT positions the sender prepared in Z. ``qber_estimate``
    is the error rate on reflected (CTRL) qubits, which the sender measures in
    its preparation basis; a disclosed SIFT sample is checked as well.
    """
    q_bits = randomness.fork("Q/bits").bit_array(n_raw).astype(np.int64)
    q_bases = randomness.fork("Q/bases").bit_array(n_raw).astype(np.int64)
    qubits = StateBatch.bb84(q_bits, q_bases)
    if eavesdropper is not None:
        qubits = eavesdropper.intercept(qubits, 0, randomness.fork("E"))

    classical = ClassicalParty(randomness.fork("C"))
    actions = randomness.fork("C/actions").bit_array(n_raw).astype(np.int64)
    c_bits, returned = classical.act(qubits, actions)
    back, _ = returned.measure(0, q_bases, randomness.fork("Q/measure"))

    ctrl = actions == ClassicalParty.REFLECT
    ctrl_errors, ctrl_rate = _estimate(q_bits[ctrl], back[ctrl])
    n_ctrl = int(ctrl.sum())

    sift_z = np.flatnonzero((actions == ClassicalParty.SIFT) & (q_bases == Z))
    if len(sift_z) < key_length + sample_size:
        return QkdResult(True, "insufficient sifted bits", ctrl_rate, n_ctrl, ctrl_errors)
    order = randomness.fork("sample").permutation(len(sift_z))
    sample = sift_z[np.sort(order[:sample_size])]
    remaining = sift_z[np.sort(order[sample_size:])][:key_length]
    _, sift_rate = _estimate(q_bits[sample], c_bits[sample])

    if ctrl_rate > abort_threshold:
        return QkdResult(True, "ctrl error rate above threshold", ctrl_rate, n_ctrl, ctrl_errors)
    if sift_rate > abort_threshold:
        return QkdResult(True, "sift error rate above threshold", ctrl_rate, n_ctrl, ctrl_errors)
    keys = tuple(SiftedKey(BitString.from_array(bits[remaining]), ctrl_rate, n_ctrl) for bits in (q_bits, c_bits))
    return QkdResult(False, "", ctrl_rate, n_ctrl, ctrl_errors, keys)


@dataclass(frozen=True)
class EncryptedTid:
    ciphertext: BitString
    pid: BitString


def _key_bits(key) -> BitString:
    return key.bits if isinstance(key, SiftedKey) else key


def split_deliver(tid: BitString, k1, k2, pid: BitString) -> EncryptedTid:
    """Encrypt ``tid`` under ``k1 xor k2`` so only both key holders together can open it."""
    k1, k2 = _key_bits(k1), _key_bits(k2)
    if k1 == k2:
        log.warning("identical authority keys: ciphertext equals the plaintext TID")
    return EncryptedTid(tid ^ k1 ^ k2, pid)


def open_ticket(encrypted: EncryptedTid, k1, k2) -> BitString:
    return encrypted.ciphertext ^ _key_bits(k1) ^ _key_bits(k2)


def one_key_posterior(encrypted: EncryptedTid, known_key) -> Counter:
    """Candidate TIDs consistent with the ciphertext and one key, over every value of the other key.

    Exhaustive, so only sensible at diagnostic widths.
    """
    known = _key_bits(known_key)
    width = encrypted.ciphertext.width
    if width > 20:
        raise ValueError("exhaustive enumeration is limited to widths <= 20")
    counts = Counter()
    for v in range(1 << width):
        counts[(encrypted.ciphertext ^ known ^ BitString(v, width)).value] += 1
    return counts


class CooperationGate:
    """Joint step that proceeds only once both ticketing authorities have joined."""

    def __init__(self):
        self._keys: dict[str, object] = {}

    def join(self, role: str, key=None) -> None:
        if role not in LAT_ROLES:
            raise ValueError(f"unknown authority role {role!r}")
        self._keys[role] = key

    @property
    def complete(self) -> bool:
        return all(r in self._keys for r in LAT_ROLES)

    def require(self) -> None:
        if not self.complete:
            missing = [r for r in LAT_ROLES if r not in self._keys]
            raise CooperationRequired(f"joint step needs {', '.join(missing)}")

    def open(self, encrypted: EncryptedTid) -> BitString:
        self.require()
        return open_ticket(encrypted, self._keys["LAT1"], self._keys["LAT2"])


# --- entanglement-swapping delivery -------------------------------------------------

# Block register order: (p1, l1, p2, l2); p* held by the participant, l1 by LAT1, l2 by LAT2.
P1, L1, P2, L2 = 0, 1, 2, 3
CARRIERS = (P1, P2)


def build_decode_table() -> np.ndarray:
    """``table[carrier, p_outcome, lat_outcome] -> pauli code`` by exhaustive enumeration.

    For each code and carrier the participant-side Bell outcome must leave the
    authorities' qubits in a definite Bell state; entries never reached stay -1.
    """
    table = np.full((2, 4, 4), -1, dtype=np.int64)
    base = tensor(prepare_bell(BellState.PSI_MINUS), prepare_bell(BellState.PSI_MINUS))
    for c, carrier in enumerate(CARRIERS):
        for k in range(4):
            encoded = apply_pauli(base, carrier, k)
            for p_out, (prob, residual) in enumerate(bell_branches(encoded, P1, P2)):
                if prob < 1e-12:
                    continue
                lat_out = identify_bell(residual)
                if lat_out is None:
                    raise AssertionError("swapping left the authorities' qubits outside the Bell basis")
                if table[c, p_out, lat_out] not in (-1, k):
                    raise AssertionError("swapping relation is not invertible")
                table[c, p_out, lat_out] = k
    return table


DECODE_TABLE = build_decode_table()


@dataclass
class BellSession:
    """Singlets shared between one participant and the two authorities.

    ``set1``/``set2`` hold the pairs (participant qubit first) still available;
    after the check they are the surviving pairs, re-indexed from zero.
    """

    set1: StateBatch
    set2: StateBatch
    checked1: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    checked2: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    passed: bool = False
    blocks: dict = field(default_factory=dict)
    used: set = field(default_factory=set)
    encoding_log: list = field(default_factory=list)

    @property
    def available_blocks(self) -> int:
        return min(len(self.set1), len(self.set2))


@dataclass(frozen=True)
class BellCheck:
    proceed: bool
    violation_rate1: float
    violation_rate2: float
    violations1: int
    violations2: int
    checked1: int
    checked2: int
    session: BellSession

    @property
    def reason(self) -> str:
        return "" if self.proceed else "anti-correlation violation"


def distribute_bell_pairs(
    randomness: RandomStream,
    eavesdroppers: tuple[Optional[Eavesdropper], Optional[Eavesdropper]] = (None, None),
    n_pairs: int = BELL_PAIRS,
) -> BellSession:
    sets = []
    for s, eve in enumerate(eavesdroppers, start=1):
        pairs = StateBatch.bell(BellState.PSI_MINUS, size=n_pairs)
        if eve is not None:
            pairs = eve.intercept(pairs, 1, randomness.fork(f"E{s}"))
        sets.append(pairs)
    return BellSession(sets[0], sets[1])


def _check_set(pairs: StateBatch, check_fraction: float, stream: RandomStream):
    n = len(pairs)
    order = stream.fork("pick").permutation(n)
    n_check = int(round(n * check_fraction))
    checked = np.sort(order[:n_check])
    keep = np.sort(order[n_check:])
    sample = pairs.take(checked)
    bases = stream.fork("basis").integers(2, n_check)
    p_out, sample = sample.measure(0, bases, stream.fork("P/measure"))
    l_out, _ = sample.measure(1, bases, stream.fork("LAT/measure"))
    violations = int(np.sum(p_out == l_out))
    return checked, keep, violations, n_check


def bell_distribute_and_check(
    randomness: RandomStream,
    eavesdroppers: tuple[Optional[Eavesdropper], Optional[Eavesdropper]] = (None, None),
    *,
    n_pairs: int = BELL_PAIRS,
    check_fraction: float = 0.5,
    threshold: float = ANTICORRELATION_ABORT,
) -> BellCheck:
    """Share ``n_pairs`` singlets per authority and spend ``check_fraction`` of each set on an
    equal-basis anti-correlation test. Any set above ``threshold`` aborts the session."""
    session = distribute_bell_pairs(randomness.fork("distribute"), eavesdroppers, n_pairs)
    c1, keep1, v1, n1 = _check_set(session.set1, check_fraction, randomness.fork("check1"))
    c2, keep2, v2, n2 = _check_set(session.set2, check_fraction, randomness.fork("check2"))
    r1 = v1 / n1 if n1 else 0.0
    r2 = v2 / n2 if n2 else 0.0
    proceed = r1 <= threshold and r2 <= threshold
    survivor = BellSession(session.set1.take(keep1), session.set2.take(keep2), c1, c2, passed=proceed)
    return BellCheck(proceed, r1, r2, v1, v2, n1, n2, survivor)


@dataclass(frozen=True)
class Announcement:
    carrier: int
    p_outcome: int


def _encode_rows(session: BellSession, rows: np.ndarray, codes: np.ndarray, randomness: RandomStream):
    for r in rows:
        if int(r) in session.used:
            raise ProtocolViolation(f"block {int(r)} already used")
        if not 0 <= int(r) < session.available_blocks:
            raise ProtocolViolation(f"block {int(r)} does not exist")
    block = session.set1.take(rows).kron(session.set2.take(rows))
    carriers = randomness.fork("carrier").integers(2, len(rows))
    block = block.apply_pauli(P1, codes, where=carriers == 0).apply_pauli(P2, codes, where=carriers == 1)
    p_out, post, _ = block.bell_measure(P1, P2, randomness.fork("P/bell"))
    for i, r in enumerate(rows):
        session.blocks[int(r)] = post.amplitudes[i]
        session.used.add(int(r))
        session.encoding_log.append((int(r), int(carriers[i]), int(p_out[i])))
    return carriers, p_out


def _decode_rows(session: BellSession, rows: np.ndarray, carriers, p_out, randomness: RandomStream, gate: CooperationGate):
    gate.require()
    missing = [int(r) for r in rows if int(r) not in session.blocks]
    if missing:
        raise ProtocolViolation(f"blocks {missing} were never encoded")
    block = StateBatch(np.stack([session.blocks.pop(int(r)) for r in rows]))
    lat_out, _, _ = block.bell_measure(L1, L2, randomness.fork("LAT/bell"))
    codes = DECODE_TABLE[np.asarray(carriers), np.asarray(p_out), lat_out]
    # outside the Bell manifold (disturbed pairs) the table can miss; read such blocks as code 0
    return np.where(codes < 0, 0, codes)


def ent_encode_block(session: BellSession, block_index: int, two_bits: int, randomness: RandomStream) -> Announcement:
    if not 0 <= two_bits <= 3:
        raise ValueError("a block encodes a value in 0..3")
    carriers, p_out = _encode_rows(session, np.array([block_index]), np.array([two_bits]), randomness)
    return Announcement(int(carriers[0]), int(p_out[0]))


def ent_decode_block(
    session: BellSession, block_index: int, announced: Announcement, randomness: RandomStream, gate: CooperationGate
) -> int:
    codes = _decode_rows(session, np.array([block_index]), [announced.carrier], [announced.p_outcome], randomness, gate)
    return int(codes[0])


def tid_to_codes(tid: BitString) -> np.ndarray:
    if tid.width % 2:
        raise ValueError("TID width must be even to split into two-bit blocks")
    bits = tid.to_array().astype(np.int64)
    return 2 * bits[0::2] + bits[1::2]


def codes_to_tid(codes: np.ndarray) -> BitString:
    codes = np.asarray(codes, dtype=np.int64)
    bits = np.empty(2 * len(codes), dtype=np.uint8)
    bits[0::2] = codes >> 1
    bits[1::2] = codes & 1
    return BitString.from_array(bits)


@dataclass(frozen=True)
class EntangledDelivery:
    announcements: tuple[Announcement, ...]
    delivered: BitString


def ent_deliver_tid(
    session: BellSession,
    tid: BitString,
    randomness: RandomStream,
    gate: CooperationGate,
    *,
    force: bool = False,
) -> EntangledDelivery:
    """Send ``tid`` two bits per block; the authorities decode it jointly through ``gate``.

    ``force`` skips the requirement that the session passed its eavesdropping check.
    """
    if not (session.passed or force):
        raise ProtocolViolation("session did not pass the eavesdropping check")
    codes = tid_to_codes(tid)
    if len(codes) > session.available_blocks:
        raise ProtocolViolation(f"need {len(codes)} blocks, {session.available_blocks} available")
    gate.require()
    rows = np.arange(len(codes))
    carriers, p_out = _encode_rows(session, rows, codes, randomness.fork("encode"))
    decoded = _decode_rows(session, rows, carriers, p_out, randomness.fork("decode"), gate)
    announcements = tuple(Announcement(int(c), int(p)) for c, p in zip(carriers, p_out))
    return EntangledDelivery(announcements, codes_to_tid(decoded))
