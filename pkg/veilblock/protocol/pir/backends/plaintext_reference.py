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
Plaintext stand-in for a lattice FHE scheme. NOT PRIVATE.

"Ciphertexts" are the plaintext vectors themselves, reduced modulo 256, tagged with the id of the
key that produced them. The server sees the selection vector in the clear. The backend exists so
the bucketed protocol can be exercised and compared against the direct lookup path.
"""
import logging
import secrets
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np

from . import FheBackend
from ..util import plaintext_slot_bytes, DEFAULT_RING_DIMENSION
from ...definitions import MalformedQueryError

LOGGER = logging.getLogger(__name__)

PLAINTEXT_MODULUS = 256
KEY_ID_LEN = 16


@dataclass(frozen=True, slots=True)
class ReferenceKey:
    key_id: bytes


@dataclass(frozen=True, slots=True)
class ReferenceCiphertext:
    key_id: bytes
    values: np.ndarray  # uint8, arithmetic mod 256


class PlaintextReferenceBackend(FheBackend):
    name = "plaintext-reference"
    private = False

    def __init__(self, params: Dict = None):
        super().__init__(params)
        self.ring_dimension = int(self.params.get("ring_dimension", DEFAULT_RING_DIMENSION))

    @property
    def plaintext_slot_bytes(self) -> int:
        return plaintext_slot_bytes(self.ring_dimension)

    def keygen(self) -> ReferenceKey:
        return ReferenceKey(secrets.token_bytes(KEY_ID_LEN))

    def enc(self, sk: ReferenceKey, value: int) -> ReferenceCiphertext:
        return ReferenceCiphertext(sk.key_id, np.array([value % PLAINTEXT_MODULUS], dtype=np.uint8))

    def _same_key(self, cts: Sequence[ReferenceCiphertext]) -> bytes:
        key_ids = {ct.key_id for ct in cts}
        if len(key_ids) != 1:
            raise MalformedQueryError("ciphertexts under different keys")
        return key_ids.pop()

    def add(self, cts: Sequence[ReferenceCiphertext]) -> ReferenceCiphertext:
        if not cts:
            raise MalformedQueryError("nothing to add")
        key_id = self._same_key(cts)
        total = np.zeros(max(len(ct.values) for ct in cts), dtype=np.uint64)
        for ct in cts:
            total[:len(ct.values)] += ct.values
        return ReferenceCiphertext(key_id, (total % PLAINTEXT_MODULUS).astype(np.uint8))

    def multiply(self, a: ReferenceCiphertext, b: ReferenceCiphertext) -> ReferenceCiphertext:
        key_id = self._same_key([a, b])
        product = a.values.astype(np.uint64) * b.values.astype(np.uint64)
        return ReferenceCiphertext(key_id, (product % PLAINTEXT_MODULUS).astype(np.uint8))

    def absorb(self, ct: ReferenceCiphertext, plaintext: bytes) -> ReferenceCiphertext:
        if len(plaintext) > self.plaintext_slot_bytes:
            raise MalformedQueryError(f"plaintext of {len(plaintext)} bytes exceeds {self.plaintext_slot_bytes}")
        m = np.frombuffer(plaintext, dtype=np.uint8).astype(np.uint64)
        return ReferenceCiphertext(ct.key_id, ((ct.values.astype(np.uint64) * m) % PLAINTEXT_MODULUS).astype(np.uint8))

    def dec(self, sk: ReferenceKey, ct: ReferenceCiphertext) -> bytes:
        if ct.key_id != sk.key_id:
            # a real scheme decrypts to noise under the wrong key
            return secrets.token_bytes(len(ct.values))
        return ct.values.tobytes()

    def serialize(self, ct: ReferenceCiphertext) -> bytes:
        return ct.key_id + ct.values.tobytes()

    def deserialize(self, data: bytes) -> ReferenceCiphertext:
        if len(data) <= KEY_ID_LEN:
            raise MalformedQueryError("ciphertext too short")
        return ReferenceCiphertext(data[:KEY_ID_LEN], np.frombuffer(data[KEY_ID_LEN:], dtype=np.uint8).copy())
