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
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Dict, Set, TypeAlias
from typing_extensions import Self

from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from .crypto import SigningKeypair, keygen, sign, verify, object_hash
from .definitions import ByteReader, CuratorId, Digest, HexBytes, PublicKey, Signature, Timestamp, \
    DEFAULT_CLOCK_SKEW, DIGEST_LEN, PUBLIC_KEY_LEN, SIGNATURE_LEN, ClockRegressionError, EntryNotFoundError, \
    InvalidCuratorIdError, MalformedFrameError, UnauthorizedError, is_valid_curator_id, now_ts

LOGGER = logging.getLogger(__name__)

PAYLOAD_TAG = b"entry-v1"
EXPORT_MAGIC = b"VBEXPv1\x00"
EXPORT_RECORD_LEN = 8 + DIGEST_LEN + SIGNATURE_LEN + 8


class RevocationMode(str, Enum):
    STATIC = "static"
    ROTATION = "rotation"
    TIMESTAMP = "timestamp"


def signed_payload(obj_hash: Digest, signed_at: Timestamp | None = None) -> bytes:
    return PAYLOAD_TAG + (signed_at or 0).to_bytes(8, "big") + obj_hash


@dataclass(frozen=True, slots=True)
class CuratorEntry:
    idx: int
    obj_hash: Digest
    sig: Signature
    signed_at: Timestamp | None = None

    def payload(self) -> bytes:
        return signed_payload(self.obj_hash, self.signed_at)


class KeyPeriod(BaseModel):
    model_config = ConfigDict(frozen=True)

    public_key: HexBytes
    not_before: Timestamp = 0
    not_after: Timestamp | None = None

    @field_validator("public_key")
    @classmethod
    def _check_length(cls, value: bytes) -> bytes:
        if len(value) != PUBLIC_KEY_LEN:
            raise ValueError(f"public key must be {PUBLIC_KEY_LEN} bytes")
        return value


class CuratorKeyring(BaseModel):
    """
    Public verification material of one curator.

    Shared with enforcers, clients and auditors; everything needed to decide whether a signature
    is live at a given time is in here.
    """
    model_config = ConfigDict(extra="forbid")

    curator_id: CuratorId
    mode: RevocationMode = RevocationMode.STATIC
    validity_window: int = 0
    keys: List[KeyPeriod]
    timestamps: List[Timestamp] = []

    @model_validator(mode="after")
    def _check_window(self) -> Self:
        if self.mode != RevocationMode.STATIC and self.validity_window <= 0:
            raise ValueError(f"validity_window must be positive in {self.mode.value} mode")
        if not self.keys:
            raise ValueError("keyring holds no keys")
        return self

    @property
    def current_key(self) -> PublicKey:
        return self.keys[-1].public_key

    def _period_end(self, period: KeyPeriod) -> float:
        end = period.not_after if period.not_after is not None else float("inf")
        if self.mode == RevocationMode.ROTATION:
            end = min(end, period.not_before + self.validity_window)
        return end

    def active_keys(self, now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW) -> List[PublicKey]:
        if self.mode != RevocationMode.ROTATION:
            return [p.public_key for p in self.keys]
        return [p.public_key for p in self.keys if p.not_before - skew <= now < self._period_end(p) + skew]

    def is_fresh(self, signed_at: Timestamp, now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW) -> bool:
        return signed_at - skew <= now < signed_at + self.validity_window + skew

    def fresh_timestamps(self, now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW) -> List[Timestamp]:
        """published timestamps still inside the validity window, newest first"""
        return sorted((t for t in set(self.timestamps) if self.is_fresh(t, now, skew)), reverse=True)

    def match(self, obj_hash: Digest, sig: Signature, now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW,
              signed_at: Timestamp | None = None) -> Timestamp | None:
        """
        Find the signing time under which `sig` is a live signature over `obj_hash`

        :param obj_hash: object hash
        :param sig: candidate signature
        :param now: verifier's clock
        :param skew: clock skew allowance in seconds
        :param signed_at: timestamp carried next to the signature, if known

        :returns: the matching timestamp (0 for untimestamped signatures), or `None`
        """
        if self.mode == RevocationMode.TIMESTAMP:
            if signed_at is not None:
                candidates = [signed_at] if self.is_fresh(signed_at, now, skew) else []
            else:
                candidates = self.fresh_timestamps(now, skew)
        else:
            candidates = [0]

        keys = self.active_keys(now, skew)
        for t in candidates:
            payload = signed_payload(obj_hash, t)
            for pk in keys:
                if verify(pk, payload, sig):
                    return t
        return None

    def verify(self, obj_hash: Digest, sig: Signature, now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW,
               signed_at: Timestamp | None = None) -> bool:
        return self.match(obj_hash, sig, now, skew, signed_at) is not None


Keyrings: TypeAlias = Dict[str, CuratorKeyring]


@dataclass
class CuratorIdentity:
    curator_id: str
    keypair: SigningKeypair
    validity_window: int = 0
    mode: RevocationMode = RevocationMode.STATIC


@dataclass
class CuratorExport:
    curator_id: str
    public_key: PublicKey
    entries: List[CuratorEntry]

    def to_bytes(self) -> bytes:
        cid = self.curator_id.encode("utf-8")
        out = [EXPORT_MAGIC, len(cid).to_bytes(1, "big"), cid, self.public_key]
        for e in self.entries:
            out.append(EXPORT_RECORD_LEN.to_bytes(2, "big"))
            out.append(e.idx.to_bytes(8, "big") + e.obj_hash + e.sig + (e.signed_at or 0).to_bytes(8, "big"))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = ByteReader(data)
        if reader.take(len(EXPORT_MAGIC)) != EXPORT_MAGIC:
            raise MalformedFrameError("not a curator export")
        try:
            curator_id = reader.take(reader.uint(1)).decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedFrameError("curator id is not utf-8")
        if not is_valid_curator_id(curator_id):
            raise MalformedFrameError(f"invalid curator id {curator_id!r}")
        public_key = reader.take(PUBLIC_KEY_LEN)
        entries = []
        while reader.remaining:
            record = ByteReader(reader.take(reader.uint(2)))
            idx = record.uint(8)
            obj_hash = record.take(DIGEST_LEN)
            sig = record.take(SIGNATURE_LEN)
            signed_at = record.uint(8) or None
            record.expect_end()
            entries.append(CuratorEntry(idx, obj_hash, sig, signed_at))
        return cls(curator_id, public_key, entries)


@dataclass
class CuratorDatabase:
    """
    Append-only set of harmful objects held by one curator.

    Entries are never removed; a withdrawn entry simply stops being renewed and its signature
    lapses with its key period or timestamp.
    """
    identity: CuratorIdentity
    keyring: CuratorKeyring
    entries: List[CuratorEntry] = field(default_factory=list)
    objects: Dict[int, bytes] = field(default_factory=dict)
    withdrawn: Set[int] = field(default_factory=set)
    auditors: Set[str] = field(default_factory=set)

    @classmethod
    def create(cls, curator_id: str, mode: RevocationMode = RevocationMode.STATIC, validity_window: int = 0,
               now: Timestamp = None, auditors: Set[str] = None) -> Self:
        if not is_valid_curator_id(curator_id):
            raise InvalidCuratorIdError(f"invalid curator id {curator_id!r}",
                                        "curator ids are 1-64 letters, digits, '.', '_' or '-'")
        now = now_ts() if now is None else now
        keypair = keygen()
        identity = CuratorIdentity(curator_id, keypair, validity_window, mode)
        keyring = CuratorKeyring(curator_id=curator_id, mode=mode, validity_window=validity_window,
                                 keys=[KeyPeriod(public_key=keypair.public_key, not_before=now)])
        return cls(identity, keyring, auditors=set(auditors or ()))

    @property
    def curator_id(self) -> str:
        return self.identity.curator_id

    @property
    def current_timestamp(self) -> Timestamp | None:
        return self.keyring.timestamps[-1] if self.keyring.timestamps else None

    def publish_timestamp(self, now: Timestamp) -> Timestamp:
        if self.current_timestamp is not None and now < self.current_timestamp:
            raise ClockRegressionError()
        self.keyring = self.keyring.model_copy(update={"timestamps": self.keyring.timestamps + [now]})
        LOGGER.info(f"curator {self.curator_id} published timestamp {now}")
        return now

    def _sign(self, idx: int, obj_hash: Digest, now: Timestamp) -> CuratorEntry:
        signed_at = None
        if self.identity.mode == RevocationMode.TIMESTAMP:
            signed_at = self.current_timestamp
            if signed_at is None or not self.keyring.is_fresh(signed_at, now, 0):
                signed_at = self.publish_timestamp(now)
        sig = sign(self.identity.keypair.secret_key, signed_payload(obj_hash, signed_at))
        return CuratorEntry(idx, obj_hash, sig, signed_at)

    def add_object(self, object_bytes: bytes, now: Timestamp = None) -> CuratorEntry:
        now = now_ts() if now is None else now
        idx = self.entries[-1].idx + 1 if self.entries else 1
        entry = self._sign(idx, object_hash(object_bytes), now)
        self.entries.append(entry)
        self.objects[idx] = bytes(object_bytes)
        LOGGER.debug(f"curator {self.curator_id} added entry {idx}")
        return entry

    def export_set(self) -> List[CuratorEntry]:
        return list(self.entries)

    def export(self) -> CuratorExport:
        return CuratorExport(self.curator_id, self.keyring.current_key, self.export_set())

    def disclose_object(self, idx: int, requester: str) -> bytes:
        if requester not in self.auditors:
            LOGGER.warning(f"curator {self.curator_id} refused disclosure of {idx} to unauthorized requester")
            raise UnauthorizedError()
        if idx not in self.objects:
            raise EntryNotFoundError(f"no entry with idx {idx}")
        return self.objects[idx]

    def withdraw(self, idx: int):
        if idx not in self.objects:
            raise EntryNotFoundError(f"no entry with idx {idx}")
        if self.identity.mode == RevocationMode.STATIC:
            LOGGER.warning(f"curator {self.curator_id} uses static keys; withdrawn entry {idx} never expires")
        self.withdrawn.add(idx)

    def rotate_key(self, now: Timestamp = None) -> CuratorIdentity:
        """
        Replace the signing key. The previous key stays in the keyring with its period closed at `now`.

        :returns: the new `CuratorIdentity`
        """
        now = now_ts() if now is None else now
        keypair = keygen()
        keys = list(self.keyring.keys)
        keys[-1] = keys[-1].model_copy(update={"not_after": now})
        keys.append(KeyPeriod(public_key=keypair.public_key, not_before=now))
        self.keyring = self.keyring.model_copy(update={"keys": keys})
        self.identity = replace(self.identity, keypair=keypair)
        LOGGER.info(f"curator {self.curator_id} rotated signing key")
        return self.identity

    def renew_signatures(self, now: Timestamp = None) -> List[CuratorEntry]:
        """Re-sign every entry that was not withdrawn so it stays live past the current window"""
        now = now_ts() if now is None else now
        if self.identity.mode == RevocationMode.ROTATION and \
                self.identity.keypair.public_key not in self.keyring.active_keys(now, 0):
            self.rotate_key(now)
        elif self.identity.mode == RevocationMode.TIMESTAMP:
            self.publish_timestamp(now)

        renewed = []
        for pos, entry in enumerate(self.entries):
            if entry.idx in self.withdrawn:
                continue
            self.entries[pos] = self._sign(entry.idx, entry.obj_hash, now)
            renewed.append(self.entries[pos])
        LOGGER.info(f"curator {self.curator_id} renewed {len(renewed)} signatures")
        return renewed
