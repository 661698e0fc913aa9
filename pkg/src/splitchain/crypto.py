"""Hashing, deterministic signatures, and the sortition VRF.

All operations are pure functions of their inputs.  Signatures are Ed25519
(RFC 8032), which is deterministic: signing the same message twice yields
identical bytes.  Determinism matters because the sortition VRF is built as
``hash(sign(sk, seed || round))`` -- a randomized scheme would let a key
holder grind signatures until the VRF passes sortition.

Digest conventions: chain linkage, block hashes and signed tuples use the
full 32-byte digest; Merkle interior/leaf digests are truncated to
``MERKLE_HASH_LEN`` bytes (the cost model's per-node hash size).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

DIGEST_LEN = 32
MERKLE_HASH_LEN = 10
SIGNATURE_LEN = 64


def hash_bytes(data: bytes) -> bytes:
    """Full 32-byte SHA-256 digest."""
    return hashlib.sha256(data).digest()


def truncated_hash(data: bytes, n: int = MERKLE_HASH_LEN) -> bytes:
    """First ``n`` bytes of the SHA-256 digest (Merkle node size)."""
    return hashlib.sha256(data).digest()[:n]


def truncate(digest: bytes, n: int = MERKLE_HASH_LEN) -> bytes:
    return digest[:n]


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 signing key plus its raw 32-byte verification key."""

    signing_key: Ed25519PrivateKey
    verification_key: bytes

    @classmethod
    def generate(cls) -> "KeyPair":
        sk = Ed25519PrivateKey.generate()
        return cls(sk, sk.public_key().public_bytes_raw())

    @classmethod
    def from_seed(cls, seed: bytes) -> "KeyPair":
        """Deterministic keypair from a 32-byte seed (seeded scenarios)."""
        if len(seed) != 32:
            seed = hash_bytes(seed)
        sk = Ed25519PrivateKey.from_private_bytes(seed)
        return cls(sk, sk.public_key().public_bytes_raw())


def sign(keypair: KeyPair, message: bytes) -> bytes:
    return keypair.signing_key.sign(message)


# Verification results and public-key objects are cached: inside a
# simulation the same (vk, message, signature) triple is checked by many
# observers and recomputing a ~100us Ed25519 verify per observer would
# dominate the run time.  Verification is a pure function, so memoizing it
# is semantics-preserving.
_pk_cache: dict[bytes, Ed25519PublicKey] = {}
_verify_cache: dict[bytes, bool] = {}
_VERIFY_CACHE_MAX = 1 << 21


def clear_caches() -> None:
    _pk_cache.clear()
    _verify_cache.clear()


def verify(verification_key: bytes, message: bytes, signature: bytes) -> bool:
    key = hashlib.sha256(
        verification_key + signature + message
    ).digest()
    hit = _verify_cache.get(key)
    if hit is not None:
        return hit
    pk = _pk_cache.get(verification_key)
    if pk is None:
        try:
            pk = Ed25519PublicKey.from_public_bytes(verification_key)
        except ValueError:
            return False
        _pk_cache[verification_key] = pk
    try:
        pk.verify(signature, message)
        ok = True
    except InvalidSignature:
        ok = False
    if len(_verify_cache) >= _VERIFY_CACHE_MAX:
        _verify_cache.clear()
    _verify_cache[key] = ok
    return ok


@dataclass(frozen=True)
class VrfOutput:
    """Sortition VRF: ``value = hash(proof)``, ``proof = sign(sk, msg)``."""

    value: bytes
    proof: bytes


def vrf_message(seed: bytes, round_no: int) -> bytes:
    return seed + round_no.to_bytes(8, "big")


def compute_vrf(keypair: KeyPair, seed: bytes, round_no: int) -> VrfOutput:
    proof = sign(keypair, vrf_message(seed, round_no))
    return VrfOutput(value=hash_bytes(proof), proof=proof)


def verify_vrf(
    verification_key: bytes, seed: bytes, round_no: int, out: VrfOutput
) -> bool:
    if out.value != hash_bytes(out.proof):
        return False
    return verify(verification_key, vrf_message(seed, round_no), out.proof)


def sortition_member(vrf: VrfOutput, k_bits: int) -> bool:
    """True iff the low ``k_bits`` of the VRF value are all zero.

    Acceptance probability over uniform values is 2**-k_bits.
    """
    if k_bits < 0:
        raise ValueError("k_bits must be >= 0")
    if k_bits == 0:
        return True
    return int.from_bytes(vrf.value, "big") & ((1 << k_bits) - 1) == 0
