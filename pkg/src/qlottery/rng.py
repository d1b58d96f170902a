"""Deterministic labelled randomness standing in for each party's QRNG.

Every stream is keyed by ``(master_seed, label)``. A draw of any size is one
SHAKE-256 expansion of ``key || counter`` and advances the counter by one, so
the sequence of draws (not individual bits) is what replays identically.
"""

from __future__ import annotations

import hashlib
from typing import AbstractSet

import numpy as np

from .bits import BitString

SEED_BITS = 64
ID_WIDTH = 256
_DOMAIN = b"qlottery/rng/v1\x00"


class RandomStream:
    """Counter-mode SHAKE-256 stream bound to a master seed and a label."""

    def __init__(self, master_seed: int, label: str, counter: int = 0):
        if not 0 <= master_seed < (1 << SEED_BITS):
            raise ValueError(f"master_seed must fit in {SEED_BITS} unsigned bits")
        self.master_seed = master_seed
        self.label = label
        self.counter = counter
        self._key = hashlib.sha256(_DOMAIN + master_seed.to_bytes(8, "big") + label.encode("utf-8")).digest()

    def __repr__(self) -> str:
        return f"RandomStream(seed={self.master_seed}, label={self.label!r}, counter={self.counter})"

    def fork(self, name: str) -> RandomStream:
        """Child stream labelled ``label/name``; the parent's counter is untouched."""
        return RandomStream(self.master_seed, f"{self.label}/{name}")

    def _draw(self, nbytes: int) -> bytes:
        out = hashlib.shake_256(self._key + self.counter.to_bytes(8, "big")).digest(nbytes)
        self.counter += 1
        return out

    def bytes(self, n: int) -> bytes:
        return self._draw(n)

    def bit_array(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        raw = np.frombuffer(self._draw((n + 7) // 8), dtype=np.uint8)
        return np.unpackbits(raw)[:n]

    def bits(self, n: int) -> BitString:
        if n < 1:
            raise ValueError("n must be >= 1")
        raw = int.from_bytes(self._draw((n + 7) // 8), "big")
        return BitString(raw >> ((8 - n % 8) % 8), n)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` floats in [0, 1) with 53 bits of resolution."""
        words = np.frombuffer(self._draw(8 * n), dtype=">u8")
        return (words >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def integers(self, high: int, n: int) -> np.ndarray:
        """``n`` integers in ``[0, high)``; exact for powers of two."""
        if high < 1:
            raise ValueError("high must be >= 1")
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)

    def bernoulli(self, p: float, n: int) -> np.ndarray:
        return self.uniform(n) < p

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")


def unique_id(stream: RandomStream, existing: AbstractSet[BitString], width: int = ID_WIDTH) -> BitString:
    """Draw a ``width``-bit identifier not in ``existing``, redrawing on collision."""
    if len(existing) >= (1 << width):
        raise ValueError("identifier space exhausted")
    while True:
        candidate = stream.bits(width)
        if candidate not in existing:
            return candidate
