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
import re
import time
from enum import Enum
from typing import Annotated, TypeAlias

from pydantic import BeforeValidator, PlainSerializer, StringConstraints

Digest: TypeAlias = bytes
SymKey: TypeAlias = bytes
Signature: TypeAlias = bytes
SigCiphertext: TypeAlias = bytes
PublicKey: TypeAlias = bytes
Timestamp: TypeAlias = int  # seconds since epoch


def _parse_hex(value):
    return bytes.fromhex(value) if isinstance(value, str) else value


# bytes that travel as hex strings in JSON and YAML documents
HexBytes = Annotated[bytes, BeforeValidator(_parse_hex), PlainSerializer(lambda v: v.hex(), return_type=str)]

# curator ids name files on disk and travel behind a one-byte length prefix
CURATOR_ID_PATTERN = r"^[A-Za-z0-9_-][A-Za-z0-9_.-]{0,63}$"
CuratorId = Annotated[str, StringConstraints(pattern=CURATOR_ID_PATTERN)]


def is_valid_curator_id(value) -> bool:
    return isinstance(value, str) and re.fullmatch(CURATOR_ID_PATTERN, value) is not None


DIGEST_LEN = 32
SYMKEY_LEN = 32
ELEMENT_LEN = 32
SCALAR_LEN = 32
PUBLIC_KEY_LEN = 32
SIGNATURE_LEN = 64

DEFAULT_CLOCK_SKEW = 300


def now_ts() -> Timestamp:
    return int(time.time())


class RejectReason(str, Enum):
    """Distinct reasons a client refuses data from the enforcer"""
    ENFORCER_SIGNATURE = "enforcer-signature"
    WITNESS_SIGNATURE = "witness-signature"
    WITNESS_QUORUM = "witness-quorum"
    DB_HASH_MISMATCH = "db-hash-mismatch"
    INCLUSION = "inclusion"


class VeilblockError(Exception):
    """Base class of all errors raised by veilblock"""

    def __init__(self, msg: str = None, user_msg: str = None):
        self.message = msg or self.default_msg
        self.user_msg = user_msg or self.message
        super().__init__(self.message)

    default_msg = "generic error"


class CryptoError(VeilblockError):
    default_msg = "cryptographic operation failed"


class InvalidElementError(CryptoError):
    default_msg = "invalid group element encoding"


class InvalidScalarError(CryptoError):
    default_msg = "scalar out of range"


class UnknownLabelError(CryptoError):
    default_msg = "unknown derivation label"


class HashToGroupError(CryptoError):
    default_msg = "hash to group failed"


class TransparencyError(VeilblockError):
    default_msg = "transparency log error"


class ClockRegressionError(TransparencyError):
    default_msg = "timestamp earlier than previous checkpoint"


class ProofError(TransparencyError):
    default_msg = "cannot produce proof"


class WitnessRefusal(TransparencyError):
    default_msg = "witness refused to attest"

    def __init__(self, msg: str = None, evidence=None):
        super().__init__(msg)
        self.evidence = evidence


class CuratorError(VeilblockError):
    default_msg = "curator error"


class UnauthorizedError(CuratorError):
    default_msg = "requester not authorized"


class InvalidCuratorIdError(CuratorError):
    default_msg = "invalid curator id"


class EntryNotFoundError(CuratorError):
    default_msg = "entry not found"


class EnforcerError(VeilblockError):
    default_msg = "enforcer error"


class EpochOrderError(EnforcerError):
    default_msg = "snapshot epochs out of order"


class ClientError(VeilblockError):
    default_msg = "client error"


class SnapshotRejected(ClientError):
    default_msg = "snapshot rejected"

    def __init__(self, reason: RejectReason, msg: str = None):
        super().__init__(msg or f"snapshot rejected: {reason.value}")
        self.reason = reason


class QueryStateError(ClientError):
    default_msg = "query state already consumed"


class AppealError(ClientError):
    default_msg = "cannot export appeal"


class PirError(VeilblockError):
    default_msg = "pir error"


class BucketBudgetError(PirError):
    default_msg = "bucket commitments exceed response budget"


class MalformedQueryError(PirError):
    default_msg = "malformed pir query"


class ProtocolError(VeilblockError):
    default_msg = "protocol error"


class FrameTooLargeError(ProtocolError):
    default_msg = "frame too large"


class MalformedFrameError(ProtocolError):
    default_msg = "malformed frame"


class ConfigError(VeilblockError):
    default_msg = "invalid configuration"


class UnknownFieldError(ConfigError):
    default_msg = "unknown configuration field"


class MissingKeyFileError(ConfigError):
    default_msg = "key file not found"


class InvalidPolicyError(ConfigError):
    default_msg = "invalid policy"


class ByteReader:
    """Sequential big-endian reader over a binary blob"""

    def __init__(self, data: bytes):
        self._data = bytes(data)
        self.offset = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.offset + n > len(self._data):
            raise MalformedFrameError(f"truncated input: wanted {n} bytes at offset {self.offset}")
        out = self._data[self.offset:self.offset + n]
        self.offset += n
        return out

    def uint(self, n: int) -> int:
        return int.from_bytes(self.take(n), "big")

    @property
    def remaining(self) -> int:
        return len(self._data) - self.offset

    def expect_end(self):
        if self.remaining:
            raise MalformedFrameError(f"{self.remaining} trailing bytes")
