"""Keyed PRFs, the keystream expander and the plain hash."""

from __future__ import annotations

import hashlib
import hmac

from ..errors import EmptyOutputError, KeyLengthError

DEFAULT_LAMBDA = 256
SUPPORTED_LAMBDAS = (128, 192, 256)
# PRF tags are 32 bytes and get reused as keys (K1, K2), so 32 is always valid.
KEY_LENGTHS = frozenset(lam // 8 for lam in SUPPORTED_LAMBDAS)
TAG_LEN = 32
DIGEST_LEN = 32


def key_length(lam: int = DEFAULT_LAMBDA) -> int:
    if lam not in SUPPORTED_LAMBDAS:
        raise KeyLengthError(f"unsupported security parameter {lam}; pick one of {SUPPORTED_LAMBDAS}")
    return lam // 8


def check_key(key: bytes) -> bytes:
    if not isinstance(key, (bytes, bytearray)) or len(key) not in KEY_LENGTHS:
        n = len(key) if isinstance(key, (bytes, bytearray)) else type(key).__name__
        raise KeyLengthError(f"key must be one of {sorted(KEY_LENGTHS)} bytes, got {n}")
    return bytes(key)


def prf_f(key: bytes, data: bytes) -> bytes:
    """HMAC-SHA256; used for label derivation and per-keyword subkeys."""
    return hmac.digest(check_key(key), data, "sha256")


def prf_g_expand(key: bytes, nonce: bytes, out_len: int) -> bytes:
    """Keystream of ``out_len`` bytes: HMAC-SHA256(key, b"G" || nonce || i) blocks."""
    key = check_key(key)
    if out_len <= 0:
        raise EmptyOutputError("keystream length must be positive")
    prefix = b"G" + len(nonce).to_bytes(2, "big") + nonce
    blocks = []
    for i in range((out_len + TAG_LEN - 1) // TAG_LEN):
        blocks.append(hmac.digest(key, prefix + i.to_bytes(4, "big"), "sha256"))
    return b"".join(blocks)[:out_len]


def hash_h(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("xor operands differ in length")
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")
