import hashlib
import secrets

import pytest

from veilblock.protocol.crypto import GroupElement, Scalar, blind, decrypt_sig, derive_id, derive_key, encrypt_sig, \
    hash_to_group, keygen, object_hash, sign, unblind, verify, EDWARDS_SCALE, FIELD_P, IDENTITY_ENCODING, LABEL_ID, \
    MONTGOMERY_A, _edwards_encoding, _elligator2, _fe_sqrt, _montgomery_rhs
from veilblock.protocol.definitions import *


def test_object_hash_empty_string():
    assert object_hash(b"").hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_hash_to_group_is_deterministic_and_valid():
    d = object_hash(b"some object")
    p = hash_to_group(d)
    assert p == hash_to_group(d)
    assert len(p.encoding) == ELEMENT_LEN
    assert p.encoding != IDENTITY_ENCODING
    # decodes as a canonical subgroup element
    assert GroupElement.decode(p.encoding) == p
    assert hash_to_group(object_hash(b"other object")) != p


def test_hash_to_group_rejects_short_digest():
    with pytest.raises(HashToGroupError):
        hash_to_group(b"\x00" * 31)


def test_blinding_identity():
    for i in range(1000):
        p = hash_to_group(object_hash(f"object-{i}".encode()))
        a, b = Scalar.random(), Scalar.random()
        assert unblind(blind(blind(p, a), b), a) == blind(p, b)


def test_blind_unblind_roundtrip():
    p = hash_to_group(object_hash(b"x"))
    s = Scalar.random()
    assert unblind(blind(p, s), s) == p


@pytest.mark.parametrize("data", [
    b"\x00" * 31,
    b"\x00" * 33,
    IDENTITY_ENCODING,
    b"\xff" * 32,
])
def test_decode_rejects_bad_elements(data):
    with pytest.raises(InvalidElementError):
        GroupElement.decode(data)


def test_decode_rejects_small_order_point():
    # order-2 point (0, -1)
    small = bytes.fromhex("ecffffffffffffffffffffffffffffffffffffffffffffffffffffffffffff7f")
    with pytest.raises(InvalidElementError):
        GroupElement.decode(small)


def test_scalar_range():
    with pytest.raises(InvalidScalarError):
        Scalar(0)
    with pytest.raises(InvalidScalarError):
        Scalar.from_bytes(b"\x01" * 31)
    s = Scalar.random()
    assert Scalar.from_bytes(s.to_bytes()) == s


def test_derive_id_and_key_are_separated():
    c = hash_to_group(object_hash(b"x"))
    assert len(derive_id(c)) == DIGEST_LEN
    assert len(derive_key(c)) == SYMKEY_LEN
    assert derive_id(c) != derive_key(c)
    assert derive_key(c) != derive_key(c, LABEL_ID)
    with pytest.raises(UnknownLabelError):
        derive_key(c, b"other")


def test_sign_verify():
    kp = keygen()
    sig = sign(kp.secret_key, b"message")
    assert len(sig) == SIGNATURE_LEN
    assert verify(kp.public_key, b"message", sig)
    assert not verify(kp.public_key, b"messagf", sig)
    assert not verify(keygen().public_key, b"message", sig)
    assert not verify(kp.public_key, b"message", sig[:-1])
    assert not verify(b"\x00" * 31, b"message", sig)


def test_signature_encryption():
    kp = keygen()
    sig = sign(kp.secret_key, b"m")
    key = derive_key(hash_to_group(object_hash(b"m")))
    ct = encrypt_sig(key, sig, 0)
    assert len(ct) == SIGNATURE_LEN
    assert ct != sig
    assert decrypt_sig(key, ct, 0) == sig
    # the slot is part of the nonce
    assert encrypt_sig(key, sig, 1) != ct
    assert decrypt_sig(key, ct, 1) != sig


def test_wrong_key_does_not_decrypt():
    sig = sign(keygen().secret_key, b"m")
    k1 = derive_key(hash_to_group(object_hash(b"a")))
    k2 = derive_key(hash_to_group(object_hash(b"b")))
    assert decrypt_sig(k2, encrypt_sig(k1, sig, 0), 0) != sig


def test_object_hash_is_sha256():
    assert object_hash(b"abc") == hashlib.sha256(b"abc").digest()


def scan_sizes(fast, full):
    return [fast, pytest.param(full, marks=pytest.mark.slow)]


@pytest.mark.parametrize("count", scan_sizes(1000, 10_000))
def test_no_collisions_in_hash_to_group_or_derive_id(count):
    elements = [hash_to_group(object_hash(f"object-{i}".encode())) for i in range(count)]
    assert len(set(elements)) == count
    assert all(GroupElement.decode(p.encoding) == p for p in elements)
    assert len({derive_id(p) for p in elements}) == count


@pytest.mark.parametrize("count", scan_sizes(1000, 100_000))
def test_id_and_key_outputs_never_collide(count):
    elements = [hash_to_group(secrets.token_bytes(DIGEST_LEN)) for _ in range(count)]
    ids = {derive_id(c) for c in elements}
    keys = {derive_key(c) for c in elements}
    assert all(derive_id(c) != derive_key(c) for c in elements[:100])
    assert len(ids) == len(keys) == count
    assert not ids & keys


def test_blinding_commutes():
    for i in range(1000):
        p = hash_to_group(object_hash(f"object-{i}".encode()))
        a, b = Scalar.random(), Scalar.random()
        assert blind(blind(p, a), b) == blind(blind(p, b), a)


def test_wrong_key_decryption_never_verifies():
    kp = keygen()
    for i in range(1000):
        digest = object_hash(f"object-{i}".encode())
        sig = sign(kp.secret_key, digest)
        right = derive_key(hash_to_group(digest))
        wrong = derive_key(hash_to_group(secrets.token_bytes(DIGEST_LEN)))
        assert not verify(kp.public_key, digest, decrypt_sig(wrong, encrypt_sig(right, sig, i % 4), i % 4))


def test_elligator_lands_on_curve25519():
    for i in range(200):
        r = int.from_bytes(secrets.token_bytes(32), "little") % FIELD_P
        u, v = _elligator2(r)
        assert v * v % FIELD_P == _montgomery_rhs(u)
    assert EDWARDS_SCALE * EDWARDS_SCALE % FIELD_P == -(MONTGOMERY_A + 2) % FIELD_P


def test_curve_map_sends_the_montgomery_base_point_to_the_edwards_base_point():
    base = bytes.fromhex("5866666666666666666666666666666666666666666666666666666666666666")
    v = _fe_sqrt(_montgomery_rhs(9))
    assert base in {_edwards_encoding(9, v), _edwards_encoding(9, FIELD_P - v)}
