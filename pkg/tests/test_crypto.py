import hashlib

import pytest

from splitchain import crypto


def test_hash_deterministic():
    assert crypto.hash_bytes(b"abc") == crypto.hash_bytes(b"abc")


def test_hash_empty_known_answer():
    # SHA-256("") from the function's published test vectors.
    expected = bytes.fromhex(
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
    )
    assert crypto.hash_bytes(b"") == expected


def test_truncation_length():
    assert len(crypto.truncated_hash(b"x", 10)) == 10
    assert crypto.truncated_hash(b"x", 10) == crypto.hash_bytes(b"x")[:10]


def test_sign_deterministic():
    kp = crypto.KeyPair.from_seed(b"\x01" * 32)
    msg = b"hello"
    assert crypto.sign(kp, msg) == crypto.sign(kp, msg)


def test_sign_roundtrip():
    kp = crypto.KeyPair.generate()
    sig = crypto.sign(kp, b"msg")
    assert crypto.verify(kp.verification_key, b"msg", sig)


def test_verify_rejects_tampered_message():
    kp = crypto.KeyPair.generate()
    msg = bytearray(b"msg-to-flip")
    sig = crypto.sign(kp, bytes(msg))
    msg[0] ^= 0x01
    assert not crypto.verify(kp.verification_key, bytes(msg), sig)


def test_keypair_from_seed_reproducible():
    a = crypto.KeyPair.from_seed(b"\x07" * 32)
    b = crypto.KeyPair.from_seed(b"\x07" * 32)
    assert a.verification_key == b.verification_key


def test_vrf_distinct_keys_distinct_values():
    seed = crypto.hash_bytes(b"block")
    a = crypto.compute_vrf(crypto.KeyPair.from_seed(b"\x01" * 32), seed, 12)
    b = crypto.compute_vrf(crypto.KeyPair.from_seed(b"\x02" * 32), seed, 12)
    assert a.value != b.value


def test_vrf_roundtrip_and_tamper():
    kp = crypto.KeyPair.from_seed(b"\x03" * 32)
    seed = crypto.hash_bytes(b"seed")
    out = crypto.compute_vrf(kp, seed, 99)
    assert out.value == crypto.hash_bytes(out.proof)
    assert crypto.verify_vrf(kp.verification_key, seed, 99, out)
    bad_proof = bytearray(out.proof)
    bad_proof[3] ^= 0x10
    tampered = crypto.VrfOutput(
        value=crypto.hash_bytes(bytes(bad_proof)), proof=bytes(bad_proof)
    )
    assert not crypto.verify_vrf(kp.verification_key, seed, 99, tampered)
    # proof/value mismatch is also rejected
    mismatched = crypto.VrfOutput(value=out.value, proof=bytes(bad_proof))
    assert not crypto.verify_vrf(kp.verification_key, seed, 99, mismatched)


def test_sortition_zero_bits_always_member():
    out = crypto.VrfOutput(value=crypto.hash_bytes(b"v"), proof=b"\x00" * 64)
    assert crypto.sortition_member(out, 0)


def test_sortition_bit_boundary():
    value = (1).to_bytes(31, "big") + (0b1000).to_bytes(1, "big")
    out = crypto.VrfOutput(value=value, proof=b"\x00" * 64)
    assert crypto.sortition_member(out, 3)
    assert not crypto.sortition_member(out, 4)


def test_sortition_negative_bits_rejected():
    out = crypto.VrfOutput(value=b"\x00" * 32, proof=b"\x00" * 64)
    with pytest.raises(ValueError):
        crypto.sortition_member(out, -1)


def test_sortition_acceptance_rate():
    # Monte-Carlo counting oracle: fraction of uniform values passing
    # k-bit sortition converges to 2**-k.
    k = 9
    trials = 10 ** 6
    hits = 0
    state = b"seed"
    for i in range(trials // 8):
        state = hashlib.sha256(state).digest()
        v = int.from_bytes(state, "big")
        for j in range(8):
            if (v >> (j * 32)) & ((1 << k) - 1) == 0:
                hits += 1
    n = (trials // 8) * 8
    p = 2 ** -k
    sigma = (n * p * (1 - p)) ** 0.5
    assert abs(hits - n * p) <= 3 * sigma
