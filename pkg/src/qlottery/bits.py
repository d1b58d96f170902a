"""Fixed-width bit strings used for PIDs, TIDs, keys, ciphertexts and digests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class BitString:
    """Immutable bit vector of a fixed width.

    Bit 0 is the most significant bit. The canonical byte encoding is
    big-endian, zero-padded on the left to a whole number of bytes.
    """

    value: int
    width: int

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"width must be positive, got {self.width}")
        if not 0 <= self.value < (1 << self.width):
            raise ValueError(f"value does not fit in {self.width} bits")

    @classmethod
    def zeros(cls, width: int) -> BitString:
        return cls(0, width)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> BitString:
        bits = [int(b) for b in bits]
        if any(b not in (0, 1) for b in bits):
            raise ValueError("bits must be 0 or 1")
        value = 0
        for b in bits:
            value = (value << 1) | b
        return cls(value, len(bits))

    @classmethod
    def from_str(cls, text: str) -> BitString:
        """Parse a literal like ``"1010"``."""
        return cls.from_bits(int(c) for c in text)

    @classmethod
    def from_bytes(cls, data: bytes, width: int | None = None) -> BitString:
        width = 8 * len(data) if width is None else width
        return cls(int.from_bytes(data, "big"), width)

    @classmethod
    def from_hex(cls, text: str, width: int) -> BitString:
        return cls(int(text, 16) if text else 0, width)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes((self.width + 7) // 8, "big")

    def hex(self) -> str:
        return self.to_bytes().hex()

    def to_array(self) -> np.ndarray:
        """Bits as a uint8 array, most significant first."""
        return np.array([(self.value >> (self.width - 1 - i)) & 1 for i in range(self.width)], dtype=np.uint8)

    @classmethod
    def from_array(cls, arr) -> BitString:
        return cls.from_bits(np.asarray(arr, dtype=np.uint8).tolist())

    def popcount(self) -> int:
        return bin(self.value).count("1")

    def flip(self, index: int) -> BitString:
        if not 0 <= index < self.width:
            raise IndexError(index)
        return BitString(self.value ^ (1 << (self.width - 1 - index)), self.width)

    def _check_width(self, other: BitString) -> None:
        if not isinstance(other, BitString):
            raise TypeError(f"expected BitString, got {type(other).__name__}")
        if other.width != self.width:
            raise ValueError(f"width mismatch: {self.width} != {other.width}")

    def __xor__(self, other: BitString) -> BitString:
        self._check_width(other)
        return BitString(self.value ^ other.value, self.width)

    def __len__(self) -> int:
        return self.width

    def __getitem__(self, index: int) -> int:
        if index < 0:
            index += self.width
        if not 0 <= index < self.width:
            raise IndexError(index)
        return (self.value >> (self.width - 1 - index)) & 1

    def __str__(self) -> str:
        return format(self.value, f"0{self.width}b")
