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
from typing import Any, Dict, Iterable, List, Tuple

from .backends import FheBackend
from .util import *
from ..client import Verdict, evaluate_record
from ..crypto import GroupElement, object_hash
from ..curator import Keyrings
from ..transparency import TransparencyLog, check_checkpoint, verify_inclusion

LOGGER = logging.getLogger(__name__)


def build_buckets(records: Iterable[BlindedRecord], prefix_bits: int, log: TransparencyLog = None,
                  now: Timestamp = None, max_response_bytes: int = None) -> BucketedDB:
    """
    Partition records by id prefix, pad every bucket to the same size and commit to the result

    :param records: blinded records, sorted by blinded_id
    :param prefix_bits: k, number of leading id bits selecting the bucket
    :param log: transparency log receiving the database hash; uncommitted if `None`
    :param now: checkpoint timestamp
    :param max_response_bytes: upper bound for the 2^k commitments sent with every answer

    :returns: `BucketedDB`
    """
    if prefix_bits < 1:
        raise PirError(f"prefix_bits must be at least 1, got {prefix_bits}")
    if max_response_bytes is not None and commitment_budget(prefix_bits) > max_response_bytes:
        raise BucketBudgetError(f"{1 << prefix_bits} commitments need {commitment_budget(prefix_bits)} bytes, "
                                f"budget is {max_response_bytes}")

    records = list(records)
    curators = tuple(sorted({curator_id for r in records for curator_id, _ in r.enc_sigs}))
    if len(curators) > MAX_CURATORS:
        raise PirError(f"{len(curators)} curators exceed the slot encoding limit of {MAX_CURATORS}")
    width = slot_width(max((len(r.enc_sigs) for r in records), default=1))

    groups: List[List[BlindedRecord]] = [[] for _ in range(1 << prefix_bits)]
    for record in records:
        groups[prefix_of(record.blinded_id, prefix_bits)].append(record)
    bucket_size = max(1, max(len(g) for g in groups))

    buckets = tuple(
        Bucket(tuple(encode_slot(r, curators, width) for r in group)
               + tuple(encode_slot(None, curators, width) for _ in range(bucket_size - len(group))))
        for group in groups
    )
    coms = tuple(b.commitment() for b in buckets)
    db_hash = commitments_hash(coms)

    checkpoint, inclusion = None, None
    if log is not None:
        checkpoint, inclusion = log.append_leaf(db_hash, now_ts() if now is None else now)
    LOGGER.info(f"bucketed {len(records)} records into {len(buckets)} buckets of {bucket_size} slots")
    return BucketedDB(prefix_bits, bucket_size, width, curators, buckets, coms, db_hash, checkpoint, inclusion)


def client_pir_query(lookup_key: Digest, prefix_bits: int, backend: FheBackend) -> Tuple[PirQuery, Any]:
    sk = backend.keygen()
    alpha = prefix_of(lookup_key, prefix_bits)
    cts = tuple(backend.serialize(backend.enc(sk, 1 if j == alpha else 0)) for j in range(1 << prefix_bits))
    return PirQuery(backend.name, prefix_bits, cts), sk


def server_pir_answer(query: PirQuery, db: BucketedDB, backend: FheBackend) -> PirAnswer:
    """
    Obliviously select one bucket: absorb every bucket into its selector ciphertext and add them up.

    Every bucket is touched for every query; nothing depends on the selector plaintext.
    """
    if db.checkpoint is None or db.inclusion is None:
        raise PirError("bucketed database is not committed to the log")
    if query.backend != backend.name:
        raise MalformedQueryError(f"query for backend {query.backend}, server runs {backend.name}")
    if query.prefix_bits != db.prefix_bits_k or len(query.ciphertexts) != len(db.buckets):
        raise MalformedQueryError(f"expected {len(db.buckets)} selector ciphertexts for k={db.prefix_bits_k}, "
                                  f"got {len(query.ciphertexts)} for k={query.prefix_bits}")
    selectors = [backend.deserialize(ct) for ct in query.ciphertexts]

    slot_bytes = backend.plaintext_slot_bytes
    chunked = [split_chunks(bucket.to_bytes(), slot_bytes) for bucket in db.buckets]
    answers = []
    for c in range(chunk_count(db.bucket_bytes, slot_bytes)):
        answers.append(backend.add([backend.absorb(sel, chunks[c]) for sel, chunks in zip(selectors, chunked)]))

    return PirAnswer(tuple(backend.serialize(a) for a in answers), db.bucket_size_S, db.slot_width, db.curators,
                     db.coms, db.checkpoint, db.inclusion)


def decode_bucket(answer: PirAnswer, sk: Any, backend: FheBackend) -> Bucket:
    payload = b"".join(backend.dec(sk, backend.deserialize(ct)) for ct in answer.ciphertexts)
    expected = answer.bucket_size_S * answer.slot_width
    if len(payload) < expected:
        raise MalformedFrameError(f"answer decodes to {len(payload)} bytes, expected {expected}")
    return Bucket.from_bytes(payload[:expected], answer.slot_width)


def client_pir_decode(answer: PirAnswer, sk: Any, lookup_key: Digest, unblinded: GroupElement, obj_bytes: bytes,
                      keyrings: Keyrings, pk_E: PublicKey, witness_pks: Dict[str, PublicKey], policy_m: int,
                      now: Timestamp, backend: FheBackend, quorum: int = 0,
                      skew: int = DEFAULT_CLOCK_SKEW) -> Verdict:
    """
    Check the answer against the logged commitments and evaluate the matching slot, if any.

    Every failure yields a benign verdict, as in the direct lookup path.
    """
    try:
        reason = check_checkpoint(answer.checkpoint, pk_E, witness_pks, quorum)
        if reason is not None:
            return Verdict.benign(f"checkpoint rejected: {reason.value}")

        n = len(answer.coms)
        if n < 2 or n & (n - 1):
            return Verdict.benign(f"{n} commitments is not a power of two")
        alpha = prefix_of(lookup_key, n.bit_length() - 1)

        bucket = decode_bucket(answer, sk, backend)
        if bucket.commitment() != answer.coms[alpha]:
            return Verdict.benign("bucket does not match its commitment")
        if not verify_inclusion(answer.checkpoint, commitments_hash(answer.coms), answer.inclusion, pk_E,
                                witness_pks):
            return Verdict.benign("commitments not included in the log")

        for slot in bucket.slots:
            record = decode_slot(slot, answer.curators)
            if record is not None and record.blinded_id == lookup_key:
                return evaluate_record(object_hash(obj_bytes), unblinded, record.enc_sigs, keyrings, policy_m,
                                       now, skew)
        return Verdict.benign("not in bucket")
    except Exception as ex:
        LOGGER.debug(f"pir decode failed: {ex}")
        return Verdict.benign(f"pir decode failed: {ex}")
