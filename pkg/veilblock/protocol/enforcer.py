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
from collections import defaultdict
from dataclasses import dataclass, field
from typing import List, Dict, Tuple, Iterable

from .crypto import Scalar, GroupElement, SigningKeypair, blind, hash_to_group, derive_id, derive_key, \
    encrypt_sig, keygen
from .curator import CuratorEntry, Keyrings
from .definitions import *
from .pir.buckets import build_buckets
from .pir.util import BucketedDB
from .records import BlindedRecord, DatabaseSnapshot, SnapshotDiff, database_hash, sort_records, records_by_id
from .transparency import TransparencyLog

LOGGER = logging.getLogger(__name__)

CuratorSets: TypeAlias = Dict[str, List[CuratorEntry]]


@dataclass
class EnforcerState:
    blind_B: Scalar
    keypair: SigningKeypair
    policy_m: int
    log: TransparencyLog
    epoch: int = 0
    curator_sets: CuratorSets = field(default_factory=dict)
    update_interval: int = 3600
    clock_skew: int = DEFAULT_CLOCK_SKEW
    last_published: Timestamp | None = None
    snapshot: DatabaseSnapshot | None = None

    def __post_init__(self):
        if self.policy_m < 1:
            raise InvalidPolicyError(f"policy_m must be at least 1, got {self.policy_m}")

    @classmethod
    def create(cls, policy_m: int = 1, keypair: SigningKeypair = None, blind_B: Scalar = None,
               log: TransparencyLog = None, **kwargs) -> "EnforcerState":
        keypair = keypair or keygen()
        return cls(blind_B=blind_B or Scalar.random(), keypair=keypair, policy_m=policy_m,
                   log=log or TransparencyLog(keypair), **kwargs)

    @property
    def public_key(self) -> PublicKey:
        return self.keypair.public_key


def blind_object_hash(obj_hash: Digest, blind_B: Scalar) -> GroupElement:
    return blind(hash_to_group(obj_hash), blind_B)


def blind_record(obj_hash: Digest, signatures: Iterable[Tuple[str, Signature]], blind_B: Scalar) -> BlindedRecord:
    """
    Turn one object hash and its curator signatures into a blinded record

    :param obj_hash: object hash h
    :param signatures: (curator_id, signature) in slot order
    :param blind_B: enforcer blinding scalar

    :returns: `BlindedRecord`
    """
    c_prime = blind_object_hash(obj_hash, blind_B)
    key = derive_key(c_prime)
    enc_sigs = tuple((curator_id, encrypt_sig(key, sig, slot)) for slot, (curator_id, sig) in enumerate(signatures))
    return BlindedRecord(derive_id(c_prime), enc_sigs)


def _check_curator_ids(curator_sets: CuratorSets):
    for curator_id in curator_sets:
        if not is_valid_curator_id(curator_id):
            raise InvalidCuratorIdError(f"refusing entries of curator {curator_id!r}")


def merge_entries(existing: List[CuratorEntry], additions: List[CuratorEntry]) -> List[CuratorEntry]:
    """newer entries replace older ones with the same idx"""
    by_idx = {e.idx: e for e in existing}
    by_idx.update({e.idx: e for e in additions})
    return [by_idx[idx] for idx in sorted(by_idx)]


def collect_signers(curator_sets: CuratorSets, keyrings: Keyrings, now: Timestamp,
                    skew: int = DEFAULT_CLOCK_SKEW) -> Dict[Digest, Dict[str, Signature]]:
    signers: Dict[Digest, Dict[str, Signature]] = defaultdict(dict)
    for curator_id in sorted(curator_sets):
        keyring = keyrings.get(curator_id)
        if keyring is None:
            LOGGER.warning(f"no keyring for curator {curator_id}; dropping {len(curator_sets[curator_id])} entries")
            continue
        dropped = 0
        for entry in curator_sets[curator_id]:
            if keyring.match(entry.obj_hash, entry.sig, now, skew, entry.signed_at) is None:
                dropped += 1
                continue
            signers[entry.obj_hash][curator_id] = entry.sig
        if dropped:
            LOGGER.warning(f"dropped {dropped} invalid or expired signatures from curator {curator_id}")
    return signers


def blind_records(curator_sets: CuratorSets, keyrings: Keyrings, blind_B: Scalar, policy_m: int,
                  now: Timestamp, skew: int = DEFAULT_CLOCK_SKEW) -> Tuple[BlindedRecord, ...]:
    records = []
    for obj_hash, sigs in collect_signers(curator_sets, keyrings, now, skew).items():
        if len(sigs) < policy_m:
            continue
        records.append(blind_record(obj_hash, sorted(sigs.items()), blind_B))
    return sort_records(records)


def commit_records(state: EnforcerState, records: Tuple[BlindedRecord, ...], now: Timestamp) -> DatabaseSnapshot:
    db_hash = database_hash(records)
    chkpt, proof = state.log.append_leaf(db_hash, now)
    state.epoch += 1
    state.last_published = now
    state.snapshot = DatabaseSnapshot(state.epoch, records, db_hash, chkpt, proof, state.public_key)
    if not records:
        LOGGER.warning(f"epoch {state.epoch} published an empty database")
    LOGGER.info(f"published epoch {state.epoch} with {len(records)} records")
    return state.snapshot


def build_database(state: EnforcerState, curator_sets: CuratorSets, keyrings: Keyrings,
                   now: Timestamp = None) -> DatabaseSnapshot:
    """
    Build, commit and publish the blinded database from curator exports

    :param state: enforcer state; its accumulated curator sets are replaced
    :param curator_sets: export lists keyed by curator id
    :param keyrings: curator keyrings keyed by curator id
    :param now: build time, also the checkpoint timestamp

    :returns: `DatabaseSnapshot` for the new epoch
    """
    now = now_ts() if now is None else now
    _check_curator_ids(curator_sets)
    state.curator_sets = {cid: merge_entries([], entries) for cid, entries in curator_sets.items()}
    records = blind_records(state.curator_sets, keyrings, state.blind_B, state.policy_m, now, state.clock_skew)
    return commit_records(state, records, now)


def respond_psi(state: EnforcerState, req: GroupElement | bytes) -> GroupElement:
    if not isinstance(req, GroupElement):
        req = GroupElement.decode(req)
    return blind(req, state.blind_B)


def publish_update(state: EnforcerState, additions: CuratorSets, keyrings: Keyrings,
                   now: Timestamp = None) -> DatabaseSnapshot:
    """
    Merge new or renewed curator entries and publish the next epoch.

    Revocation is implicit: every signature is re-verified at `now`, so expired ones drop out.
    """
    now = now_ts() if now is None else now
    if state.last_published is not None and now - state.last_published < state.update_interval:
        LOGGER.warning(f"update {now - state.last_published}s after the previous one, "
                       f"inside the advertised interval of {state.update_interval}s")
    _check_curator_ids(additions)
    for curator_id, entries in additions.items():
        state.curator_sets[curator_id] = merge_entries(state.curator_sets.get(curator_id, []), entries)
    records = blind_records(state.curator_sets, keyrings, state.blind_B, state.policy_m, now, state.clock_skew)
    return commit_records(state, records, now)


def rotate_blinding(state: EnforcerState, keyrings: Keyrings, now: Timestamp = None) -> DatabaseSnapshot:
    now = now_ts() if now is None else now
    state.blind_B = Scalar.random()
    LOGGER.info("blinding value rotated; rebuilding every record")
    records = blind_records(state.curator_sets, keyrings, state.blind_B, state.policy_m, now, state.clock_skew)
    return commit_records(state, records, now)


def snapshot_diff(old: DatabaseSnapshot, new: DatabaseSnapshot) -> SnapshotDiff:
    if old.epoch >= new.epoch:
        raise EpochOrderError(f"epoch {old.epoch} is not older than {new.epoch}")
    old_by_id = records_by_id(old.records)
    new_ids = {r.blinded_id for r in new.records}
    added = tuple(r for r in new.records if old_by_id.get(r.blinded_id) != r)
    removed = tuple(bid for bid in sorted(old_by_id) if bid not in new_ids)
    return SnapshotDiff(old.epoch, new.epoch, added, removed)


def apply_diff(old_records: Iterable[BlindedRecord], diff: SnapshotDiff) -> Tuple[BlindedRecord, ...]:
    by_id = records_by_id(old_records)
    for bid in diff.removed:
        by_id.pop(bid, None)
    by_id.update(records_by_id(diff.added))
    return sort_records(by_id.values())


def publish_bucketed(state: EnforcerState, snapshot: DatabaseSnapshot, prefix_bits: int, now: Timestamp = None,
                     max_response_bytes: int = None) -> BucketedDB:
    """Publish the bucketed view of `snapshot` to the same log"""
    now = now_ts() if now is None else now
    return build_buckets(snapshot.records, prefix_bits, log=state.log, now=now,
                         max_response_bytes=max_response_bytes)
