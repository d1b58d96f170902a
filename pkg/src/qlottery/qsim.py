"""Exact statevector simulation for the handful of qubits the protocols touch.

Conventions
-----------
* Qubit 0 is the most significant bit of the amplitude index.
* Single-qubit bases are encoded as integers: ``0`` rectilinear (Z), ``1``
  diagonal (X). Outcome ``0`` is ``|0>`` or ``|+>``, outcome ``1`` is ``|1>``
  or ``|->``.
* Bell outcomes are ordered ``psi- = 0, psi+ = 1, phi- = 2, phi+ = 3``.
* Measurement randomness always comes from an explicit :class:`RandomStream`.

:class:`StateBatch` holds many independent registers of the same size and is
what the protocol code uses; :class:`PureState` and the module-level functions
are the single-register interface built on the same kernels.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .rng import RandomStream

MAX_QUBITS = 4
NORM_TOLERANCE = 1e-9

_S = 1 / np.sqrt(2)


class Basis(enum.Enum):
    RECTILINEAR = 0
    DIAGONAL = 1
    BELL = 2

    @property
    def symbol(self) -> str:
        return {0: "Z", 1: "X", 2: "Bell"}[self.value]


Z = Basis.RECTILINEAR.value
X = Basis.DIAGONAL.value


class PauliCode(enum.IntEnum):
    """Local unitaries used to encode two bits into one half of a Bell pair."""

    U0 = 0  # identity
    U1 = 1  # phase flip
    U2 = 2  # bit flip
    U3 = 3  # |0><1| - |1><0|


class BellState(enum.IntEnum):
    PSI_MINUS = 0
    PSI_PLUS = 1
    PHI_MINUS = 2
    PHI_PLUS = 3


PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[1, 0], [0, -1]],
        [[0, 1], [1, 0]],
        [[0, 1], [-1, 0]],
    ],
    dtype=complex,
)

# rows: basis vectors for outcome 0 and 1
SINGLE_QUBIT_BASES = np.array(
    [
        [[1, 0], [0, 1]],
        [[_S, _S], [_S, -_S]],
    ],
    dtype=complex,
)

BELL_VECTORS = np.array(
    [
        [0, _S, -_S, 0],
        [0, _S, _S, 0],
        [_S, 0, 0, -_S],
        [_S, 0, 0, _S],
    ],
    dtype=complex,
)


class NormalizationError(RuntimeError):
    """A state reached a measurement without unit norm."""


class QubitIndexError(IndexError):
    pass


def _basis_codes(bases, size: int) -> np.ndarray:
    if isinstance(bases, Basis):
        if bases is Basis.BELL:
            raise ValueError("Bell basis is a two-qubit measurement; use bell_measure")
        return np.full(size, bases.value, dtype=np.int64)
    arr = np.broadcast_to(np.asarray(bases, dtype=np.int64), (size,))
    if np.any((arr != Z) & (arr != X)):
        raise ValueError("single-qubit basis codes must be 0 (Z) or 1 (X)")
    return arr


class StateBatch:
    """``B`` independent ``n``-qubit pure states, amplitudes shaped ``(B, 2**n)``."""

    __slots__ = ("_amps", "num_qubits")

    def __init__(self, amplitudes):
        amps = np.array(amplitudes, dtype=complex)
        if amps.ndim != 2:
            raise ValueError("batch amplitudes must be 2-D (batch, 2**n)")
        n = int(round(np.log2(amps.shape[1]))) if amps.shape[1] else 0
        if n < 1 or (1 << n) != amps.shape[1]:
            raise ValueError("amplitude length must be 2**n with n >= 1")
        if n > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits are supported")
        amps.setflags(write=False)
        self._amps = amps
        self.num_qubits = n

    @property
    def amplitudes(self) -> np.ndarray:
        return self._amps

    def __len__(self) -> int:
        return self._amps.shape[0]

    def __getitem__(self, index: int) -> PureState:
        return PureState(self._amps[index])

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self._amps) ** 2, axis=1)

    def take(self, rows) -> StateBatch:
        return StateBatch(self._amps[np.asarray(rows)])

    def kron(self, other: StateBatch) -> StateBatch:
        """Row-wise tensor product; ``self`` supplies the leading qubits."""
        if len(self) != len(other):
            raise ValueError("batch sizes differ")
        return StateBatch(np.einsum("bi,bj->bij", self._amps, other._amps).reshape(len(self), -1))

    @classmethod
    def bb84(cls, bits, bases) -> StateBatch:
        bits = np.asarray(bits, dtype=np.int64)
        bases = _basis_codes(bases, bits.shape[0])
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("bits must be 0 or 1")
        return cls(SINGLE_QUBIT_BASES[bases, bits])

    @classmethod
    def bell(cls, kinds, size: Optional[int] = None) -> StateBatch:
        kinds = np.asarray(kinds, dtype=np.int64)
        if size is not None:
            kinds = np.broadcast_to(kinds, (size,))
        if np.any((kinds < 0) | (kinds > 3)):
            raise ValueError("Bell kind must be in 0..3")
        return cls(BELL_VECTORS[kinds])

    def _check_qubit(self, q: int) -> None:
        if not 0 <= q < self.num_qubits:
            raise QubitIndexError(f"qubit {q} out of range for {self.num_qubits} qubits")

    def _split(self, qubits) -> np.ndarray:
        """View as ``(B, 2, ..., 2, rest)`` with ``qubits`` moved to the front."""
        b = len(self)
        t = self._amps.reshape((b,) + (2,) * self.num_qubits)
        t = np.moveaxis(t, [q + 1 for q in qubits], list(range(1, len(qubits) + 1)))
        return t.reshape(b, 1 << len(qubits), -1)

    def _join(self, t: np.ndarray, qubits) -> np.ndarray:
        b = t.shape[0]
        k = len(qubits)
        t = t.reshape((b,) + (2,) * self.num_qubits)
        t = np.moveaxis(t, list(range(1, k + 1)), [q + 1 for q in qubits])
        return t.reshape(b, -1)

    def _check_norm(self) -> None:
        if len(self) and np.max(np.abs(self.norms() - 1.0)) > NORM_TOLERANCE:
            raise NormalizationError("state is not normalized")

    def apply_pauli(self, qubit: int, codes, where=None) -> StateBatch:
        self._check_qubit(qubit)
        codes = np.broadcast_to(np.asarray(codes, dtype=np.int64), (len(self),))
        if np.any((codes < 0) | (codes > 3)):
            raise ValueError("Pauli code must be in 0..3")
        if where is not None:
            codes = np.where(np.asarray(where, dtype=bool), codes, 0)
        t = self._split([qubit])
        t = np.einsum("byx,bxr->byr", PAULI[codes], t)
        return StateBatch(self._join(t, [qubit]))

    def measure(self, qubit: int, bases, randomness: RandomStream, where=None):
        """Projective single-qubit measurement of every row (or the rows in ``where``).

        Returns ``(outcomes, post_batch)``. Rows outside ``where`` are left
        untouched and report outcome ``-1``.
        """
        self._check_qubit(qubit)
        self._check_norm()
        b = len(self)
        bases = _basis_codes(bases, b)
        u = randomness.uniform(b)
        active = np.ones(b, dtype=bool) if where is None else np.asarray(where, dtype=bool)

        vecs = SINGLE_QUBIT_BASES[bases]  # (B, 2 outcomes, 2 components)
        t = self._split([qubit])
        comps = np.einsum("bkx,bxr->bkr", vecs.conj(), t)
        p0 = np.sum(np.abs(comps[:, 0]) ** 2, axis=1)
        outcomes = (u >= p0).astype(np.int64)
        rows = np.arange(b)
        chosen = comps[rows, outcomes]
        probs = np.where(outcomes == 0, p0, 1.0 - p0)
        chosen = chosen / np.sqrt(probs)[:, None]
        collapsed = vecs[rows, outcomes][:, :, None] * chosen[:, None, :]
        new_t = np.where(active[:, None, None], collapsed, t)
        return np.where(active, outcomes, -1), StateBatch(self._join(new_t, [qubit]))

    def bell_projections(self, i: int, j: int) -> np.ndarray:
        """Unnormalized residual components ``(B, 4, 2**(n-2))`` per Bell outcome."""
        if i == j:
            raise QubitIndexError("Bell measurement needs two distinct qubits")
        self._check_qubit(i)
        self._check_qubit(j)
        return np.einsum("kx,bxr->bkr", BELL_VECTORS.conj(), self._split([i, j]))

    def bell_measure(self, i: int, j: int, randomness: RandomStream):
        """Project qubits ``(i, j)`` of every row onto the Bell basis.

        Returns ``(outcomes, post_batch, residual)`` where ``residual`` is the
        normalized state of the remaining qubits in their original order, or
        ``None`` for a two-qubit register.
        """
        comps = self.bell_projections(i, j)
        self._check_norm()
        b = len(self)
        probs = np.sum(np.abs(comps) ** 2, axis=2)
        u = randomness.uniform(b)
        cdf = np.cumsum(probs, axis=1)
        outcomes = np.minimum(np.sum(u[:, None] >= cdf, axis=1), 3)
        # guard against landing on a zero-probability outcome through rounding
        zero = probs[np.arange(b), outcomes] <= 1e-15
        if np.any(zero):
            outcomes[zero] = np.argmax(probs[zero], axis=1)
        rows = np.arange(b)
        chosen = comps[rows, outcomes] / np.sqrt(probs[rows, outcomes])[:, None]
        t = BELL_VECTORS[outcomes][:, :, None] * chosen[:, None, :]
        post = StateBatch(self._join(t, [i, j]))
        residual = StateBatch(chosen) if self.num_qubits > 2 else None
        return outcomes, post, residual


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        n = int(round(np.log2(amps.size))) if amps.size else 0
        if n < 1 or (1 << n) != amps.size:
            raise ValueError("amplitude vector length must be 2**n with n >= 1")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def num_qubits(self) -> int:
        return int(np.log2(self.amplitudes.size))

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def batch(self) -> StateBatch:
        return StateBatch(self.amplitudes[None, :])

    def equals_up_to_phase(self, other: PureState, atol: float = 1e-9) -> bool:
        if self.amplitudes.shape != other.amplitudes.shape:
            return False
        return abs(abs(np.vdot(self.amplitudes, other.amplitudes)) - 1.0) <= atol

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class MeasurementOutcome:
    value: int
    post_state: PureState
    residual: Optional[PureState] = field(default=None)


def prepare_bb84(bit: int, basis: Basis) -> PureState:
    if basis is Basis.BELL:
        raise ValueError("BB84 states live in the rectilinear or diagonal basis")
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    return PureState(SINGLE_QUBIT_BASES[basis.value, bit])


def prepare_bell(kind: int = BellState.PSI_MINUS) -> PureState:
    if not 0 <= int(kind) <= 3:
        raise ValueError("Bell kind must be in 0..3")
    return PureState(BELL_VECTORS[int(kind)])


def tensor(*states: PureState) -> PureState:
    amps = np.array([1.0 + 0j])
    for s in states:
        amps = np.kron(amps, s.amplitudes)
    return PureState(amps)


def apply_pauli(state: PureState, qubit_index: int, code: int) -> PureState:
    return state.batch().apply_pauli(qubit_index, int(code))[0]


def measure(state: PureState, qubit_index: int, basis: Basis, randomness: RandomStream) -> MeasurementOutcome:
    outcomes, post = state.batch().measure(qubit_index, basis, randomness)
    return MeasurementOutcome(int(outcomes[0]), post[0])


def bell_measure(state: PureState, i: int, j: int, randomness: RandomStream) -> MeasurementOutcome:
    outcomes, post, residual = state.batch().bell_measure(i, j, randomness)
    return MeasurementOutcome(int(outcomes[0]), post[0], None if residual is None else residual[0])


def bell_branches(state: PureState, i: int, j: int) -> list[tuple[float, Optional[PureState]]]:
    """Every Bell outcome on ``(i, j)`` with its probability and normalized residual."""
    comps = state.batch().bell_projections(i, j)[0]
    branches = []
    for k in range(4):
        p = float(np.sum(np.abs(comps[k]) ** 2))
        residual = None
        if p > 1e-15 and state.num_qubits > 2:
            residual = PureState(comps[k] / np.sqrt(p))
        branches.append((p, residual))
    return branches


def identify_bell(state: PureState, atol: float = 1e-9) -> Optional[int]:
    """Index of the Bell state equal to ``state`` up to phase, else ``None``."""
    if state.num_qubits != 2:
        return None
    for k in range(4):
        if state.equals_up_to_phase(PureState(BELL_VECTORS[k]), atol):
            return k
    return None
