from .commitment import Commitment, commit_msg, open_commitment
from .elgamal import (
    DecryptionProof,
    EncKeyPair,
    MockProofBackend,
    SigmaProofBackend,
    enc_keygen,
    make_backend,
    pke_decrypt,
    pke_encrypt,
    prove_decryption,
    verify_decryption,
)
from .prf import DEFAULT_LAMBDA, hash_h, key_length, prf_f, prf_g_expand, xor_bytes
from .rng import DeterministicRng, as_rng
from .signature import SignKeyPair, check_sig, sig_keygen, sign, verify_sig

__all__ = [
    "Commitment",
    "DEFAULT_LAMBDA",
    "DecryptionProof",
    "DeterministicRng",
    "EncKeyPair",
    "MockProofBackend",
    "SigmaProofBackend",
    "SignKeyPair",
    "as_rng",
    "check_sig",
    "commit_msg",
    "enc_keygen",
    "hash_h",
    "key_length",
    "make_backend",
    "open_commitment",
    "pke_decrypt",
    "pke_encrypt",
    "prf_f",
    "prf_g_expand",
    "prove_decryption",
    "sig_keygen",
    "sign",
    "verify_decryption",
    "verify_sig",
    "xor_bytes",
]
