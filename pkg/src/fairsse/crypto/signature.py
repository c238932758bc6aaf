"""Ed25519 signatures with keys derived from the deterministic RNG."""

from __future__ import annotations

from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from ..errors import DecodeError
from .rng import draw

SIGNATURE_LEN = 64
VERIFY_KEY_LEN = 32


@dataclass(frozen=True)
class SignKeyPair:
    signing_key: bytes  # 32-byte seed
    verify_key: bytes  # 32-byte raw public key


def sig_keygen(rng) -> SignKeyPair:
    seed = draw(rng, 32)
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    vk = sk.public_key().public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    return SignKeyPair(seed, vk)


def sign(signing_key: bytes, m: bytes) -> bytes:
    return Ed25519PrivateKey.from_private_bytes(signing_key).sign(m)


def verify_sig(verify_key: bytes, m: bytes, sig: bytes) -> bool:
    """Return True iff ``sig`` is a valid signature on ``m``.

    Raises DecodeError when the signature or key is not well formed, so a
    caller can tell garbage input apart from a forged-but-well-formed one.
    """
    if not isinstance(sig, (bytes, bytearray)) or len(sig) != SIGNATURE_LEN:
        raise DecodeError("signature must be 64 bytes")
    if not isinstance(verify_key, (bytes, bytearray)) or len(verify_key) != VERIFY_KEY_LEN:
        raise DecodeError("verification key must be 32 bytes")
    try:
        vk = Ed25519PublicKey.from_public_bytes(bytes(verify_key))
    except ValueError as exc:
        raise DecodeError(str(exc)) from exc
    try:
        vk.verify(bytes(sig), m)
    except InvalidSignature:
        return False
    return True


def check_sig(verify_key: bytes, m: bytes, sig: bytes) -> bool:
    """Like verify_sig but malformed input counts as a rejection."""
    try:
        return verify_sig(verify_key, m, sig)
    except DecodeError:
        return False
