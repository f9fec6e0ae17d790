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
import hashlib
import math
from dataclasses import dataclass
from typing import Tuple, List
from typing_extensions import Self

from ..definitions import *
from ..records import BlindedRecord
from ..transparency import Checkpoint, InclusionProof

CURATOR_INDEX_LEN = 1
SLOT_HEADER_LEN = DIGEST_LEN + 1
CURATOR_SLOT_LEN = CURATOR_INDEX_LEN + SIGNATURE_LEN
MAX_CURATORS = 255

DEFAULT_RING_DIMENSION = 4096
PLAINTEXT_BITS_PER_COEFFICIENT = 20


def slot_width(max_curators: int) -> int:
    """bytes per bucket entry able to carry `max_curators` signatures"""
    return SLOT_HEADER_LEN + max(1, max_curators) * CURATOR_SLOT_LEN


def plaintext_slot_bytes(ring_dimension: int = DEFAULT_RING_DIMENSION) -> int:
    return ring_dimension * PLAINTEXT_BITS_PER_COEFFICIENT // 8


def bucket_capacity(slot_bytes: int = None, entry_bytes: int = None) -> int:
    """
    Number of entries that fit into one plaintext slot

    :param slot_bytes: plaintext bytes per ciphertext, defaults to the 4096 ring dimension
    :param entry_bytes: bytes per entry, defaults to one curator

    :returns: entries per bucket
    """
    slot_bytes = plaintext_slot_bytes() if slot_bytes is None else slot_bytes
    entry_bytes = slot_width(1) if entry_bytes is None else entry_bytes
    return slot_bytes // entry_bytes


def max_blocklist_size(prefix_bits: int, slot_bytes: int = None, entry_bytes: int = None) -> int:
    return (1 << prefix_bits) * bucket_capacity(slot_bytes, entry_bytes)


def prefix_of(blinded_id: Digest, prefix_bits: int) -> int:
    """first `prefix_bits` bits of the id, big-endian"""
    return int.from_bytes(blinded_id, "big") >> (DIGEST_LEN * 8 - prefix_bits)


def commitment_budget(prefix_bits: int) -> int:
    return (1 << prefix_bits) * DIGEST_LEN


def encode_slot(record: BlindedRecord | None, curators: Tuple[str, ...], width: int) -> bytes:
    if record is None:
        return bytes(width)
    out = [record.blinded_id, len(record.enc_sigs).to_bytes(1, "big")]
    for curator_id, ct in record.enc_sigs:
        out.append(curators.index(curator_id).to_bytes(CURATOR_INDEX_LEN, "big") + ct)
    encoded = b"".join(out)
    if len(encoded) > width:
        raise PirError(f"record needs {len(encoded)} bytes, slot holds {width}")
    return encoded + bytes(width - len(encoded))


def decode_slot(data: bytes, curators: Tuple[str, ...]) -> BlindedRecord | None:
    reader = ByteReader(data)
    blinded_id = reader.take(DIGEST_LEN)
    count = reader.uint(1)
    if count == 0:
        return None
    enc_sigs = []
    for _ in range(count):
        index = reader.uint(CURATOR_INDEX_LEN)
        if index >= len(curators):
            raise MalformedFrameError(f"curator index {index} outside table of {len(curators)}")
        enc_sigs.append((curators[index], reader.take(SIGNATURE_LEN)))
    return BlindedRecord(blinded_id, tuple(enc_sigs))


def _write_curators(curators: Tuple[str, ...]) -> bytes:
    out = [len(curators).to_bytes(1, "big")]
    for curator_id in curators:
        encoded = curator_id.encode("utf-8")
        out.append(len(encoded).to_bytes(1, "big") + encoded)
    return b"".join(out)


def _read_curators(reader: ByteReader) -> Tuple[str, ...]:
    return tuple(reader.take(reader.uint(1)).decode("utf-8") for _ in range(reader.uint(1)))


def _write_blobs(blobs: Tuple[bytes, ...]) -> bytes:
    return len(blobs).to_bytes(4, "big") + b"".join(len(b).to_bytes(4, "big") + b for b in blobs)


def _read_blobs(reader: ByteReader) -> Tuple[bytes, ...]:
    return tuple(reader.take(reader.uint(4)) for _ in range(reader.uint(4)))


@dataclass(frozen=True, slots=True)
class Bucket:
    slots: Tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        return b"".join(self.slots)

    def commitment(self) -> Digest:
        return hashlib.sha256(self.to_bytes()).digest()

    @classmethod
    def from_bytes(cls, data: bytes, width: int) -> Self:
        if width <= 0 or len(data) % width:
            raise MalformedFrameError(f"bucket of {len(data)} bytes is not a multiple of {width}")
        return cls(tuple(data[i:i + width] for i in range(0, len(data), width)))


def commitments_hash(coms: Tuple[Digest, ...]) -> Digest:
    return hashlib.sha256(b"".join(coms)).digest()


@dataclass(frozen=True, slots=True)
class BucketedDB:
    prefix_bits_k: int
    bucket_size_S: int
    slot_width: int
    curators: Tuple[str, ...]
    buckets: Tuple[Bucket, ...]
    coms: Tuple[Digest, ...]
    db_hash: Digest
    checkpoint: Checkpoint | None = None
    inclusion: InclusionProof | None = None

    @property
    def bucket_bytes(self) -> int:
        return self.bucket_size_S * self.slot_width


@dataclass(frozen=True, slots=True)
class PirQuery:
    backend: str
    prefix_bits: int
    ciphertexts: Tuple[bytes, ...]

    def to_bytes(self) -> bytes:
        name = self.backend.encode("utf-8")
        return len(name).to_bytes(1, "big") + name + self.prefix_bits.to_bytes(1, "big") + _write_blobs(self.ciphertexts)

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = ByteReader(data)
        backend = reader.take(reader.uint(1)).decode("utf-8")
        prefix_bits = reader.uint(1)
        ciphertexts = _read_blobs(reader)
        reader.expect_end()
        return cls(backend, prefix_bits, ciphertexts)


@dataclass(frozen=True, slots=True)
class PirAnswer:
    ciphertexts: Tuple[bytes, ...]
    bucket_size_S: int
    slot_width: int
    curators: Tuple[str, ...]
    coms: Tuple[Digest, ...]
    checkpoint: Checkpoint
    inclusion: InclusionProof

    def to_bytes(self) -> bytes:
        """backend blobs followed by the fixed-layout trailer"""
        return b"".join([
            _write_blobs(self.ciphertexts),
            self.bucket_size_S.to_bytes(4, "big"),
            self.slot_width.to_bytes(2, "big"),
            _write_curators(self.curators),
            len(self.coms).to_bytes(4, "big"),
            b"".join(self.coms),
            self.inclusion.to_bytes(),
            self.checkpoint.to_bytes(),
        ])

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = ByteReader(data)
        ciphertexts = _read_blobs(reader)
        bucket_size = reader.uint(4)
        width = reader.uint(2)
        curators = _read_curators(reader)
        coms = tuple(reader.take(DIGEST_LEN) for _ in range(reader.uint(4)))
        inclusion = InclusionProof.read(reader)
        checkpoint = Checkpoint.read(reader)
        reader.expect_end()
        return cls(ciphertexts, bucket_size, width, curators, coms, checkpoint, inclusion)

    def trailer_bytes(self) -> int:
        return len(self.to_bytes()) - len(_write_blobs(self.ciphertexts))


def chunk_count(payload_bytes: int, slot_bytes: int) -> int:
    return max(1, math.ceil(payload_bytes / slot_bytes))


def split_chunks(payload: bytes, slot_bytes: int) -> List[bytes]:
    count = chunk_count(len(payload), slot_bytes)
    padded = payload + bytes(count * slot_bytes - len(payload))
    return [padded[i * slot_bytes:(i + 1) * slot_bytes] for i in range(count)]
