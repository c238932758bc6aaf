"""Hash-based commitments: value = H(key || m), opened by revealing the key."""

from __future__ import annotations

import hmac
from dataclasses import dataclass

from .prf import DEFAULT_LAMBDA, hash_h, key_length
from .rng import draw


@dataclass(frozen=True)
class Commitment:
    value: bytes


def commit_msg(m: bytes, rng, lam: int = DEFAULT_LAMBDA) -> tuple[Commitment, bytes]:
    key = draw(rng, key_length(lam))
    return Commitment(hash_h(key + m)), key


def open_commitment(c: Commitment, key: bytes, m: bytes) -> bool:
    return hmac.compare_digest(c.value, hash_h(key + m))
