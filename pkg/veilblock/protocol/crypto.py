# =================================================================
# Copyright (C) 2024 by the veilblock authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# =================================================================
"""
Group arithmetic, hashing, signatures and signature encryption.

The group is the prime-order subgroup of edwards25519 as exposed by libsodium
through PyNaCl. Elements travel as canonical 32-byte encodings; the identity,
small-order points and points outside the prime-order subgroup are rejected at
decode time.
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Tuple
from typing_extensions import Self

import nacl.bindings
import nacl.exceptions
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from nacl.signing import SigningKey, VerifyKey

from .definitions import Digest, SymKey, Signature, SigCiphertext, PublicKey, DIGEST_LEN, ELEMENT_LEN, \
    SCALAR_LEN, SIGNATURE_LEN, SYMKEY_LEN, PUBLIC_KEY_LEN, InvalidElementError, InvalidScalarError, \
    UnknownLabelError, HashToGroupError, CryptoError

LOGGER = logging.getLogger(__name__)

LABEL_ID = b"id"
LABEL_KEY = b"key"
LABELS = (LABEL_ID, LABEL_KEY)
LABEL_SEPARATOR = b"\x00"

HASH_TO_GROUP_DST = b"veilblock-h2g-v2"
HKDF_INFO = b"veilblock-hkey-v1"

IDENTITY_ENCODING = b"\x01" + b"\x00" * 31

FIELD_P = 2 ** 255 - 19
MONTGOMERY_A = 486662
# non-square in the field
ELLIGATOR_Z = 2
SQRT_M1 = pow(2, (FIELD_P - 1) // 4, FIELD_P)


@dataclass(frozen=True, slots=True)
class GroupParams:
    group_order_p: int
    element_encoding_len: int
    scalar_encoding_len: int
    security_param_lambda: int

    def is_identity(self, encoding: bytes) -> bool:
        return encoding == IDENTITY_ENCODING


DEFAULT_GROUP = GroupParams(
    group_order_p=2 ** 252 + 27742317777372353535851937790883648493,
    element_encoding_len=ELEMENT_LEN,
    scalar_encoding_len=SCALAR_LEN,
    security_param_lambda=128,
)


@dataclass(frozen=True, slots=True)
class GroupElement:
    encoding: bytes

    @classmethod
    def decode(cls, data: bytes) -> Self:
        """
        Parse a canonical element encoding

        :param data: 32 bytes received from a peer

        :returns: validated `GroupElement`
        """
        if len(data) != ELEMENT_LEN:
            raise InvalidElementError(f"element must be {ELEMENT_LEN} bytes, got {len(data)}")
        if DEFAULT_GROUP.is_identity(data):
            raise InvalidElementError("identity element rejected")
        if not nacl.bindings.crypto_core_ed25519_is_valid_point(data):
            raise InvalidElementError("non-canonical or non-subgroup encoding rejected")
        return cls(bytes(data))

    def __bytes__(self) -> bytes:
        return self.encoding


@dataclass(frozen=True, slots=True)
class Scalar:
    value: int

    def __post_init__(self):
        if not 1 <= self.value < DEFAULT_GROUP.group_order_p:
            raise InvalidScalarError()

    @classmethod
    def random(cls) -> Self:
        # libsodium rejection-samples a nonzero canonical scalar
        return cls.from_bytes(nacl.bindings.crypto_core_ed25519_scalar_random())

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        if len(data) != SCALAR_LEN:
            raise InvalidScalarError(f"scalar must be {SCALAR_LEN} bytes")
        return cls(int.from_bytes(data, "little"))

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(SCALAR_LEN, "little")

    def inverse(self) -> Self:
        return Scalar.from_bytes(nacl.bindings.crypto_core_ed25519_scalar_invert(self.to_bytes()))


@dataclass(frozen=True, slots=True)
class SigningKeypair:
    public_key: PublicKey
    secret_key: SigningKey

    @classmethod
    def from_seed(cls, seed: bytes) -> Self:
        sk = SigningKey(seed)
        return cls(public_key=bytes(sk.verify_key), secret_key=sk)

    def seed(self) -> bytes:
        return bytes(self.secret_key)


def object_hash(object_bytes: bytes) -> Digest:
    return hashlib.sha256(object_bytes).digest()


def _fe_inv(a: int) -> int:
    return pow(a, FIELD_P - 2, FIELD_P)


def _fe_sqrt(a: int) -> int | None:
    """a square root of `a` in GF(2^255 - 19), or None for a non-residue"""
    a %= FIELD_P
    r = pow(a, (FIELD_P + 3) // 8, FIELD_P)
    if r * r % FIELD_P != a:
        r = r * SQRT_M1 % FIELD_P
    return r if r * r % FIELD_P == a else None


# sqrt(-486664), relating curve25519 and edwards25519 x-coordinates
EDWARDS_SCALE = _fe_sqrt(-(MONTGOMERY_A + 2))


def _montgomery_rhs(u: int) -> int:
    return (u * u * u + MONTGOMERY_A * u * u + u) % FIELD_P


def _elligator2(r: int) -> Tuple[int, int]:
    """map a field element onto curve25519; returns Montgomery coordinates (u, v)"""
    denominator = (1 + ELLIGATOR_Z * r * r) % FIELD_P
    u1 = -MONTGOMERY_A * _fe_inv(denominator) % FIELD_P if denominator else -MONTGOMERY_A % FIELD_P
    u2 = (-u1 - MONTGOMERY_A) % FIELD_P
    # exactly one of the two right-hand sides is a square; both roots are always computed
    v1, v2 = _fe_sqrt(_montgomery_rhs(u1)), _fe_sqrt(_montgomery_rhs(u2))
    if v1 is not None:
        return u1, v1 if v1 & 1 else -v1 % FIELD_P
    if v2 is None:
        raise HashToGroupError()
    return u2, -v2 % FIELD_P if v2 & 1 else v2


def _edwards_encoding(u: int, v: int) -> bytes:
    """birational map from curve25519 to edwards25519, then the standard point encoding"""
    if v == 0 or (u + 1) % FIELD_P == 0:
        raise HashToGroupError("exceptional point")
    x = EDWARDS_SCALE * u % FIELD_P * _fe_inv(v) % FIELD_P
    y = (u - 1) * _fe_inv(u + 1) % FIELD_P
    return (y | (x & 1) << 255).to_bytes(ELEMENT_LEN, "little")


def hash_to_group(d: Digest) -> GroupElement:
    """
    Deterministically map a digest to a non-identity element of the prime-order subgroup.

    The digest is expanded to a field element and sent through Elligator 2 onto curve25519,
    carried over to edwards25519 and multiplied by the cofactor. Every input goes through the
    same sequence of field operations; there is no retry loop. Every step is public, so anyone
    can recompute the mapping.

    :param d: 32-byte digest

    :returns: `GroupElement`
    """
    if len(d) != DIGEST_LEN:
        raise HashToGroupError(f"digest must be {DIGEST_LEN} bytes")

    r = int.from_bytes(hashlib.sha512(HASH_TO_GROUP_DST + d).digest(), "little") % FIELD_P
    point = _edwards_encoding(*_elligator2(r))
    # three doublings clear the cofactor 8; add() only requires an on-curve input
    for _ in range(3):
        point = nacl.bindings.crypto_core_ed25519_add(point, point)
    if DEFAULT_GROUP.is_identity(point) or not nacl.bindings.crypto_core_ed25519_is_valid_point(point):
        raise HashToGroupError()
    return GroupElement(point)


def blind(p: GroupElement, s: Scalar) -> GroupElement:
    if s.value == 1:
        return p
    try:
        out = nacl.bindings.crypto_scalarmult_ed25519_noclamp(s.to_bytes(), p.encoding)
    except nacl.exceptions.RuntimeError as ex:
        raise InvalidElementError(f"scalar multiplication failed: {ex}")
    return GroupElement(out)


def unblind(q: GroupElement, s: Scalar) -> GroupElement:
    return blind(q, s.inverse())


def derive_id(c_prime: GroupElement) -> Digest:
    return hashlib.sha256(c_prime.encoding + LABEL_SEPARATOR + LABEL_ID).digest()


def derive_key(c_prime: GroupElement, label: bytes = LABEL_KEY) -> SymKey:
    if label not in LABELS:
        raise UnknownLabelError(f"unknown label {label!r}")
    hkdf = HKDF(algorithm=hashes.SHA256(), length=SYMKEY_LEN, salt=None, info=HKDF_INFO)
    return hkdf.derive(c_prime.encoding + LABEL_SEPARATOR + label)


def keygen() -> SigningKeypair:
    sk = SigningKey.generate()
    return SigningKeypair(public_key=bytes(sk.verify_key), secret_key=sk)


def sign(sk: SigningKey, m: bytes) -> Signature:
    return sk.sign(m).signature


def verify(pk: PublicKey, m: bytes, sig: Signature) -> bool:
    if len(pk) != PUBLIC_KEY_LEN or len(sig) != SIGNATURE_LEN:
        return False
    try:
        VerifyKey(pk).verify(m, sig)
        return True
    except (nacl.exceptions.CryptoError, ValueError, TypeError):
        return False


def _keystream_xor(k: SymKey, data: bytes, slot: int) -> bytes:
    if len(k) != SYMKEY_LEN:
        raise CryptoError(f"key must be {SYMKEY_LEN} bytes")
    # 4-byte block counter followed by the 12-byte nonce carrying the curator slot
    nonce = (0).to_bytes(4, "little") + slot.to_bytes(12, "big")
    encryptor = Cipher(algorithms.ChaCha20(k, nonce), mode=None).encryptor()
    return encryptor.update(data) + encryptor.finalize()


def encrypt_sig(k: SymKey, sig: Signature, slot: int) -> SigCiphertext:
    """
    Length-preserving, deterministic encryption of a curator signature.

    Integrity is not provided here; the decrypted signature is verified against the object's
    hash by the caller.
    """
    if len(sig) != SIGNATURE_LEN:
        raise CryptoError(f"signature must be {SIGNATURE_LEN} bytes")
    return _keystream_xor(k, sig, slot)


def decrypt_sig(k: SymKey, ct: SigCiphertext, slot: int) -> Signature:
    return _keystream_xor(k, ct, slot)
