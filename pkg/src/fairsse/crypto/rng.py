"""Seedable deterministic random byte generator.

HMAC-SHA256 in counter mode keyed by a hash of the seed. Every simulated party
draws from its own ``fork`` so that adding draws in one place does not shift
the stream seen elsewhere.
"""

from __future__ import annotations

import hashlib
import hmac
import os

from ..errors import EntropyError


def draw(rng, n: int) -> bytes:
    """Draw ``n`` bytes from any object with ``randbytes``, checking the length."""
    try:
        out = rng.randbytes(n)
    except Exception as exc:  # noqa: BLE001 - any RNG failure is an entropy failure
        raise EntropyError(f"random source failed: {exc}") from exc
    if not isinstance(out, (bytes, bytearray)) or len(out) != n:
        raise EntropyError(f"random source returned {len(out) if out is not None else 0} of {n} bytes")
    return bytes(out)


class DeterministicRng:
    def __init__(self, seed: int | bytes | str | None = None):
        if seed is None:
            seed_bytes = os.urandom(32)
        elif isinstance(seed, int):
            if seed < 0:
                raise ValueError("seed must be non-negative")
            seed_bytes = seed.to_bytes(max(8, (seed.bit_length() + 7) // 8), "big")
        elif isinstance(seed, str):
            seed_bytes = seed.encode("utf-8")
        else:
            seed_bytes = bytes(seed)
        self._key = hashlib.sha256(b"fairsse-rng|" + seed_bytes).digest()
        self._counter = 0

    def randbytes(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("n must be non-negative")
        out = bytearray()
        while len(out) < n:
            out += hmac.digest(self._key, self._counter.to_bytes(8, "big"), "sha256")
            self._counter += 1
        return bytes(out[:n])

    def randbelow(self, bound: int) -> int:
        """Uniform-enough integer in [0, bound) (64 surplus bits, bias < 2^-64)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        nbytes = (bound.bit_length() + 7) // 8 + 8
        return int.from_bytes(self.randbytes(nbytes), "big") % bound

    def fork(self, label: str) -> "DeterministicRng":
        child = DeterministicRng.__new__(DeterministicRng)
        child._key = hmac.digest(self._key, b"fork|" + label.encode("utf-8"), "sha256")
        child._counter = 0
        return child


def as_rng(rng: DeterministicRng | int | None) -> DeterministicRng:
    if isinstance(rng, DeterministicRng):
        return rng
    return DeterministicRng(rng)
