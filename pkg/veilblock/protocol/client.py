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
from dataclasses import dataclass
from enum import Enum
from types import MappingProxyType
from typing import List, Dict, Tuple, Mapping

from pydantic import BaseModel

from .crypto import GroupElement, Scalar, object_hash, hash_to_group, blind, unblind, derive_id, derive_key, \
    decrypt_sig
from .curator import Keyrings
from .definitions import *
from .records import DatabaseSnapshot, database_hash
from .transparency import Checkpoint, check_checkpoint, verify_inclusion

LOGGER = logging.getLogger(__name__)

EncSigs: TypeAlias = Tuple[Tuple[str, SigCiphertext], ...]


class VerdictStatus(str, Enum):
    BENIGN = "benign"
    HARMFUL = "harmful"


@dataclass(frozen=True, slots=True)
class Evidence:
    curator_id: str
    signature: Signature
    signed_at: Timestamp | None = None


@dataclass(frozen=True, slots=True)
class Verdict:
    status: VerdictStatus
    attesting_curators: Tuple[str, ...] = ()
    evidence: Tuple[Evidence, ...] = ()
    epoch: int | None = None
    diagnostics: str | None = None  # why a lookup ended benign; never shown to the enforcer

    @property
    def harmful(self) -> bool:
        return self.status == VerdictStatus.HARMFUL

    @classmethod
    def benign(cls, diagnostics: str = None, epoch: int = None) -> "Verdict":
        return cls(VerdictStatus.BENIGN, epoch=epoch, diagnostics=diagnostics)

    def to_record(self) -> Dict:
        return {
            "status": self.status.value,
            "curators": list(self.attesting_curators),
            "epoch": self.epoch,
        }


@dataclass(frozen=True)
class VerifiedDB:
    lookup: Mapping[Digest, EncSigs]
    epoch: int
    checkpoint: Checkpoint
    db_hash: Digest
    enforcer_pk: PublicKey

    def __len__(self):
        return len(self.lookup)


class QueryState:
    """Client secret of one in-flight detection query. Single use."""
    __slots__ = ("randomness_A", "obj_hash", "request", "consumed")

    def __init__(self, randomness_A: Scalar, obj_hash: Digest, request: GroupElement):
        self.randomness_A = randomness_A
        self.obj_hash = obj_hash
        self.request = request
        self.consumed = False

    def __reduce__(self):
        raise TypeError("query state must not leave the client")

    def __repr__(self):
        return f"QueryState(consumed={self.consumed})"


class AppealSignature(BaseModel):
    curator_id: str
    signature: HexBytes
    signed_at: Timestamp | None = None


class AppealBundle(BaseModel):
    """Object plus the curator signatures that made it harmful; verifiable with public keys only"""
    object_bytes: HexBytes
    signatures: List[AppealSignature]
    epoch: int | None = None


def verify_snapshot(snapshot: DatabaseSnapshot, pk_E: PublicKey, witness_pks: Dict[str, PublicKey] = None,
                    quorum: int = 0) -> VerifiedDB:
    """
    Accept a snapshot only if every commitment check passes

    :param snapshot: snapshot received from the enforcer
    :param pk_E: enforcer public key
    :param witness_pks: known witnesses
    :param quorum: minimum number of witness signatures

    :returns: `VerifiedDB`
    :raises SnapshotRejected: with the first failing `RejectReason`
    """
    reason = check_checkpoint(snapshot.checkpoint, pk_E, witness_pks, quorum)
    if reason is None and database_hash(snapshot.records) != snapshot.db_hash:
        reason = RejectReason.DB_HASH_MISMATCH
    if reason is None and not verify_inclusion(snapshot.checkpoint, snapshot.db_hash, snapshot.inclusion,
                                               pk_E, witness_pks):
        reason = RejectReason.INCLUSION
    if reason is not None:
        LOGGER.warning(f"snapshot for epoch {snapshot.epoch} rejected: {reason.value}")
        raise SnapshotRejected(reason)

    lookup = MappingProxyType({r.blinded_id: r.enc_sigs for r in snapshot.records})
    LOGGER.info(f"verified epoch {snapshot.epoch} with {len(lookup)} records")
    return VerifiedDB(lookup, snapshot.epoch, snapshot.checkpoint, snapshot.db_hash, pk_E)


def begin_query(obj_bytes: bytes) -> Tuple[GroupElement, QueryState]:
    obj_hash = object_hash(obj_bytes)
    a = Scalar.random()
    request = blind(hash_to_group(obj_hash), a)
    return request, QueryState(a, obj_hash, request)


def complete_query(state: QueryState, resp: GroupElement | bytes) -> Tuple[Digest, GroupElement]:
    if state.consumed:
        raise QueryStateError()
    state.consumed = True
    if not isinstance(resp, GroupElement):
        resp = GroupElement.decode(resp)
    unblinded = unblind(resp, state.randomness_A)
    return derive_id(unblinded), unblinded


def evaluate_record(obj_hash: Digest, unblinded: GroupElement, enc_sigs: EncSigs, keyrings: Keyrings,
                    policy_m: int, now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW, epoch: int = None) -> Verdict:
    """Decrypt and check the signatures of one matched record; shared by both lookup paths"""
    key = derive_key(unblinded)
    evidence = []
    seen = set()
    failures = []
    for slot, (curator_id, ct) in enumerate(enc_sigs):
        keyring = keyrings.get(curator_id)
        if keyring is None:
            failures.append(f"unknown curator {curator_id}")
            continue
        sig = decrypt_sig(key, ct, slot)
        signed_at = keyring.match(obj_hash, sig, now, skew)
        if signed_at is None:
            failures.append(f"signature of {curator_id} does not verify")
            continue
        if curator_id not in seen:
            seen.add(curator_id)
            evidence.append(Evidence(curator_id, sig, signed_at or None))

    if len(seen) < policy_m:
        return Verdict.benign(f"{len(seen)} of {policy_m} required signatures verified: {'; '.join(failures)}",
                              epoch)
    return Verdict(VerdictStatus.HARMFUL, tuple(e.curator_id for e in evidence), tuple(evidence), epoch)


def evaluate(obj_bytes: bytes, unblinded: GroupElement, db: VerifiedDB, keyrings: Keyrings, policy_m: int,
             now: Timestamp = None, skew: int = DEFAULT_CLOCK_SKEW) -> Verdict:
    """
    Decide locally whether an object is harmful. Every anomaly yields a benign verdict.

    :param obj_bytes: object under test
    :param unblinded: C' recovered by `complete_query`
    :param db: verified database
    :param keyrings: curator keyrings
    :param policy_m: number of distinct curators required
    :param now: local clock for freshness checks

    :returns: `Verdict`
    """
    now = now_ts() if now is None else now
    try:
        enc_sigs = db.lookup.get(derive_id(unblinded))
        if enc_sigs is None:
            return Verdict.benign("not in database", db.epoch)
        return evaluate_record(object_hash(obj_bytes), unblinded, enc_sigs, keyrings, policy_m, now, skew, db.epoch)
    except Exception as ex:
        LOGGER.debug(f"evaluation failed: {ex}")
        return Verdict.benign(f"evaluation failed: {ex}", db.epoch)


def export_appeal(obj_bytes: bytes, verdict: Verdict) -> AppealBundle:
    if not verdict.harmful:
        raise AppealError("only harmful verdicts can be appealed")
    return AppealBundle(
        object_bytes=obj_bytes,
        signatures=[AppealSignature(curator_id=e.curator_id, signature=e.signature, signed_at=e.signed_at)
                    for e in verdict.evidence],
        epoch=verdict.epoch,
    )
