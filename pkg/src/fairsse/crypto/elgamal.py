"""Hybrid ElGamal (KEM-DEM) over a prime-order subgroup of Z_p^*, with a
Fiat-Shamir proof of correct decryption.

A ciphertext is ``A || body`` where ``A = g^y`` (fixed width) and
``body = m XOR KDF(A^x)``. To prove that ``m`` is the plaintext, the key holder
reveals the shared element ``S = A^x`` together with a Chaum-Pedersen proof that
``log_g(pk) == log_A(S)``. The verifier then recomputes ``body XOR KDF(S)``
itself, so a proof can only ever vouch for the one true plaintext.

A ciphertext whose ``A`` is not a subgroup element has no plaintext. The claim
``m = None`` with an empty transcript is accepted for exactly those ciphertexts.
"""

from __future__ import annotations

from dataclasses import dataclass

import gmpy2

from ..errors import DecodeError
from .prf import hash_h, prf_g_expand, xor_bytes
from .rng import draw

# 2048-bit modulus with a 256-bit prime-order subgroup (DSA-style parameters).
P = int(
    "e3d68051c0661f8e98eb77e83ccfd8745b3e49aab709f9224aac3913542ae408"
    "f634237e003f83b1ab024178d0418390ea53801e5f0a2471f17fb2e7f5b86d9c"
    "265689be8cba63b46310aba6a1299710c4bb10069b7cd43e0b69d066c76b4fe4"
    "ca0906b05a7467cfb8ccce0ad3b8382882234dc32fd49565e319994136ce12ec"
    "384433879e779aec4df0b89f2323a5cf0c9e6a546e0b46fc78bfd72215f96e3a"
    "747d1a3d50c2f2c6bf043ea6b0a9c2cbe6e44b8e1a2228d991d8c8b9bd85344d"
    "a79a7813c140c2d36bb671fc1715df846b8d5d687751d5f1616ca5fa2fe8a2ae"
    "b1bae3b07f67bb7aa197437d136ea1c33e506a86d8e61bf430442f80ede4c323",
    16,
)
Q = int("83edcb5ff4b94c27e862e20e8116d284656d0bb31aa0aee940b094e4065fa781", 16)
G = int(
    "7a8823bf7fddece7969b6804071c56b2c454ee511f4b41d9cacd13d99495890a"
    "8a32ac52c3b590d44951935bc06c27c1e962ec44787ce330080c086bbf752292"
    "ba316dee3705a5b9e6b78a93c1d977e65ca7df2f8250a3a3d11b07789c57ae37"
    "27179de476a227559086c4e7c7ef54cf4d0ba1431030460b0a568abc32a1ccf6"
    "de60c9fa8c7095be44075b18475b4bd6a2feef3c06e0e03527055e3eaa3b7e03"
    "620310f8d7f41535b4d9e07f89c37d4d9eaa915c9b361b436cc6a43f6d65abdc"
    "768d23d82b90a2a1dd3ea0927f70973e94da69e94261f17333803e03db311278"
    "4fd52593d5278142eede05f5377fe7c793ea6900baaa63c58850df95abd92734",
    16,
)
ELEMENT_LEN = (P.bit_length() + 7) // 8  # 256
SCALAR_LEN = (Q.bit_length() + 7) // 8  # 32
PROOF_LEN = ELEMENT_LEN + 2 * SCALAR_LEN

_P = gmpy2.mpz(P)
_Q = gmpy2.mpz(Q)


def _pow(base: int, exp: int) -> int:
    return int(gmpy2.powmod(base, exp, _P))


def _enc(x: int) -> bytes:
    return x.to_bytes(ELEMENT_LEN, "big")


def is_element(x: int) -> bool:
    return 1 < x < P and _pow(x, Q) == 1


def decode_element(raw: bytes) -> int:
    if len(raw) != ELEMENT_LEN:
        raise DecodeError(f"group element must be {ELEMENT_LEN} bytes")
    x = int.from_bytes(raw, "big")
    if not is_element(x):
        raise DecodeError("value is not in the prime-order subgroup")
    return x


def _random_scalar(rng) -> int:
    while True:
        x = int.from_bytes(draw(rng, SCALAR_LEN + 8), "big") % Q
        if x:
            return x


def _kdf(shared: int, n: int) -> bytes:
    if n == 0:
        return b""
    return prf_g_expand(hash_h(b"kem|" + _enc(shared)), b"dem", n)


@dataclass(frozen=True)
class EncKeyPair:
    secret: int
    public: bytes  # encoded group element g^secret


def enc_keygen(rng) -> EncKeyPair:
    x = _random_scalar(rng)
    return EncKeyPair(x, _enc(_pow(G, x)))


def pke_encrypt(pk: bytes, m: bytes, rng) -> bytes:
    h = decode_element(pk)
    y = _random_scalar(rng)
    a = _pow(G, y)
    shared = _pow(h, y)
    return _enc(a) + xor_bytes(m, _kdf(shared, len(m)))


def split_ciphertext(c: bytes) -> tuple[int, bytes]:
    if len(c) < ELEMENT_LEN:
        raise DecodeError("ciphertext shorter than its KEM header")
    return decode_element(c[:ELEMENT_LEN]), c[ELEMENT_LEN:]


def pke_decrypt(sk: int, c: bytes) -> bytes:
    a, body = split_ciphertext(c)
    return xor_bytes(body, _kdf(_pow(a, sk), len(body)))


def is_well_formed(c: bytes) -> bool:
    try:
        split_ciphertext(c)
    except DecodeError:
        return False
    return True


@dataclass(frozen=True)
class DecryptionProof:
    transcript: bytes


def _challenge(pk: bytes, a: int, s: int, t1: int, t2: int, c: bytes, m: bytes) -> int:
    data = b"|".join(
        [b"fairsse-dleq", pk, _enc(a), _enc(s), _enc(t1), _enc(t2), hash_h(c), hash_h(m)]
    )
    return int.from_bytes(hash_h(data), "big") % Q


class SigmaProofBackend:
    """Non-interactive Chaum-Pedersen proof of correct decryption."""

    name = "sigma"

    def prove(self, keys: EncKeyPair, c: bytes, m: bytes | None, rng) -> DecryptionProof:
        # Proves whatever the ciphertext actually decrypts to; a false ``m`` simply
        # yields a proof that fails verification.
        if not is_well_formed(c):
            return DecryptionProof(b"")
        a, _ = split_ciphertext(c)
        x = keys.secret
        s = _pow(a, x)
        k = _random_scalar(rng)
        t1, t2 = _pow(G, k), _pow(a, k)
        e = _challenge(keys.public, a, s, t1, t2, c, m or b"")
        z = (k + e * x) % Q
        return DecryptionProof(_enc(s) + e.to_bytes(SCALAR_LEN, "big") + z.to_bytes(SCALAR_LEN, "big"))

    def verify(self, pk: bytes, c: bytes, m: bytes | None, proof: DecryptionProof) -> bool:
        if not is_well_formed(c):
            return m is None and proof.transcript == b""
        if m is None:
            return False
        if len(proof.transcript) != PROOF_LEN:
            raise DecodeError(f"proof transcript must be {PROOF_LEN} bytes")
        h = decode_element(pk)
        a, body = split_ciphertext(c)
        try:
            s = decode_element(proof.transcript[:ELEMENT_LEN])
        except DecodeError:
            return False
        e = int.from_bytes(proof.transcript[ELEMENT_LEN : ELEMENT_LEN + SCALAR_LEN], "big")
        z = int.from_bytes(proof.transcript[ELEMENT_LEN + SCALAR_LEN :], "big")
        if e >= Q or z >= Q:
            return False
        t1 = _pow(G, z) * _pow(h, Q - e) % P
        t2 = _pow(a, z) * _pow(s, Q - e) % P
        if _challenge(pk, a, s, t1, t2, c, m) != e:
            return False
        return xor_bytes(body, _kdf(s, len(body))) == m


class MockProofBackend:
    """Transparent stand-in for fast runs: the verifier is handed the secret key.

    Only sound inside the simulator, where the verifier is trusted not to leak it.
    """

    name = "mock"

    def __init__(self):
        self._keys: dict[bytes, int] = {}

    def register(self, keys: EncKeyPair) -> None:
        self._keys[keys.public] = keys.secret

    def _tag(self, c: bytes, m: bytes) -> bytes:
        return hash_h(b"fairsse-mock|" + hash_h(c) + hash_h(m))

    def prove(self, keys: EncKeyPair, c: bytes, m: bytes | None, rng) -> DecryptionProof:
        self.register(keys)
        if not is_well_formed(c):
            return DecryptionProof(b"")
        return DecryptionProof(self._tag(c, m or b""))

    def verify(self, pk: bytes, c: bytes, m: bytes | None, proof: DecryptionProof) -> bool:
        if not is_well_formed(c):
            return m is None and proof.transcript == b""
        if m is None:
            return False
        if len(proof.transcript) != 32:
            raise DecodeError("mock proof transcript must be 32 bytes")
        sk = self._keys.get(pk)
        if sk is None:
            return False
        return proof.transcript == self._tag(c, m) and pke_decrypt(sk, c) == m


def make_backend(name: str):
    if name == "sigma":
        return SigmaProofBackend()
    if name == "mock":
        return MockProofBackend()
    raise ValueError(f"unknown proof backend {name!r}")


_default = SigmaProofBackend()


def prove_decryption(keys: EncKeyPair, c: bytes, m: bytes | None, rng) -> DecryptionProof:
    return _default.prove(keys, c, m, rng)


def verify_decryption(pk: bytes, c: bytes, m: bytes | None, proof: DecryptionProof) -> bool:
    return _default.verify(pk, c, m, proof)
