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
"""Blinded records, database snapshots and their canonical byte encodings"""
import hashlib
from dataclasses import dataclass
from typing import Tuple, Iterable, Dict
from typing_extensions import Self

from .transparency import Checkpoint, InclusionProof
from .definitions import *

SNAPSHOT_MAGIC = b"VBSNAP1\x00"
DIFF_MAGIC = b"VBDIFF1\x00"


@dataclass(frozen=True, slots=True)
class BlindedRecord:
    blinded_id: Digest
    enc_sigs: Tuple[Tuple[str, SigCiphertext], ...]

    def to_bytes(self) -> bytes:
        out = [self.blinded_id, len(self.enc_sigs).to_bytes(1, "big")]
        for curator_id, ct in self.enc_sigs:
            encoded = curator_id.encode("utf-8")
            out.append(len(encoded).to_bytes(1, "big") + encoded + ct)
        return b"".join(out)

    @classmethod
    def read(cls, reader: ByteReader) -> Self:
        blinded_id = reader.take(DIGEST_LEN)
        enc_sigs = []
        for _ in range(reader.uint(1)):
            curator_id = reader.take(reader.uint(1)).decode("utf-8")
            enc_sigs.append((curator_id, reader.take(SIGNATURE_LEN)))
        if not enc_sigs:
            raise MalformedFrameError("record without signatures")
        return cls(blinded_id, tuple(enc_sigs))


def database_hash(records: Iterable[BlindedRecord]) -> Digest:
    """h_DB over the canonical serialization; records must already be sorted by blinded_id"""
    h = hashlib.sha256()
    for record in records:
        h.update(record.to_bytes())
    return h.digest()


def sort_records(records: Iterable[BlindedRecord]) -> Tuple[BlindedRecord, ...]:
    return tuple(sorted(records, key=lambda r: r.blinded_id))


@dataclass(frozen=True, slots=True)
class DatabaseSnapshot:
    epoch: int
    records: Tuple[BlindedRecord, ...]
    db_hash: Digest
    checkpoint: Checkpoint
    inclusion: InclusionProof
    enforcer_pk: PublicKey

    @property
    def is_empty(self) -> bool:
        return not self.records

    def to_bytes(self) -> bytes:
        out = [SNAPSHOT_MAGIC, self.epoch.to_bytes(8, "big"), len(self.records).to_bytes(4, "big"), self.enforcer_pk,
               self.db_hash]
        out.extend(r.to_bytes() for r in self.records)
        out.append(self.checkpoint.to_bytes())
        out.append(self.inclusion.to_bytes())
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = ByteReader(data)
        if reader.take(len(SNAPSHOT_MAGIC)) != SNAPSHOT_MAGIC:
            raise MalformedFrameError("not a database snapshot")
        epoch = reader.uint(8)
        count = reader.uint(4)
        enforcer_pk = reader.take(PUBLIC_KEY_LEN)
        db_hash = reader.take(DIGEST_LEN)
        records = tuple(BlindedRecord.read(reader) for _ in range(count))
        checkpoint = Checkpoint.read(reader)
        inclusion = InclusionProof.read(reader)
        reader.expect_end()
        return cls(epoch, records, db_hash, checkpoint, inclusion, enforcer_pk)


@dataclass(frozen=True, slots=True)
class SnapshotDiff:
    from_epoch: int
    to_epoch: int
    added: Tuple[BlindedRecord, ...]
    removed: Tuple[Digest, ...]

    @property
    def is_empty(self) -> bool:
        return not self.added and not self.removed

    def to_bytes(self) -> bytes:
        out = [DIFF_MAGIC, self.from_epoch.to_bytes(8, "big"), self.to_epoch.to_bytes(8, "big"),
               len(self.added).to_bytes(4, "big")]
        out.extend(r.to_bytes() for r in self.added)
        out.append(len(self.removed).to_bytes(4, "big"))
        out.extend(self.removed)
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = ByteReader(data)
        if reader.take(len(DIFF_MAGIC)) != DIFF_MAGIC:
            raise MalformedFrameError("not a snapshot diff")
        from_epoch, to_epoch = reader.uint(8), reader.uint(8)
        added = tuple(BlindedRecord.read(reader) for _ in range(reader.uint(4)))
        removed = tuple(reader.take(DIGEST_LEN) for _ in range(reader.uint(4)))
        reader.expect_end()
        return cls(from_epoch, to_epoch, added, removed)


def records_by_id(records: Iterable[BlindedRecord]) -> Dict[Digest, BlindedRecord]:
    return {r.blinded_id: r for r in records}
