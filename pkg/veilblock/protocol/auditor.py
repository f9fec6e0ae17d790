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
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Mapping, Tuple, Any

from .client import AppealBundle, evaluate_record
from .crypto import Scalar, object_hash, derive_id, verify as verify_signature
from .curator import Keyrings
from .definitions import *
from .enforcer import blind_object_hash
from .records import DatabaseSnapshot, database_hash
from .transparency import Checkpoint, ConsistencyProof, check_checkpoint, verify_consistency, verify_inclusion

LOGGER = logging.getLogger(__name__)

# asks the enforcer for a consistency proof between two tree sizes; raises if it refuses
ProofOracle: TypeAlias = Callable[[int, int], ConsistencyProof]


class ViolationKind(str, Enum):
    INCONSISTENCY = "inconsistency"
    OSCILLATION = "oscillation"
    STALE = "stale"
    SIGNATURE = "signature"
    CONTENT_MISMATCH = "content-mismatch"


@dataclass(frozen=True, slots=True)
class AuditPolicy:
    min_update_interval: int = 3600
    max_checkpoint_age: int = 86400
    witness_quorum: int = 0

    def __post_init__(self):
        if self.min_update_interval <= 0 or self.max_checkpoint_age <= 0:
            raise InvalidPolicyError("audit durations must be positive")
        if self.witness_quorum < 0:
            raise InvalidPolicyError("witness quorum must not be negative")


@dataclass(frozen=True, slots=True)
class Violation:
    kind: ViolationKind
    evidence: bytes
    detail: str = ""


@dataclass
class AuditReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations

    @property
    def verdict(self) -> str:
        return "clean" if self.clean else "violations"

    def add(self, kind: ViolationKind, evidence: bytes, detail: str = ""):
        LOGGER.warning(f"audit violation {kind.value}: {detail}")
        self.violations.append(Violation(kind, evidence, detail))

    def of_kind(self, kind: ViolationKind) -> List[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def to_records(self) -> List[Dict]:
        return [{"kind": v.kind.value, "detail": v.detail, "evidence": v.evidence.hex()} for v in self.violations]


@dataclass(frozen=True, slots=True)
class AppealResult:
    valid: bool
    reasons: Tuple[str, ...] = ()

    def __bool__(self):
        return self.valid


def encode_pair(first: Checkpoint, second: Checkpoint) -> bytes:
    a, b = first.to_bytes(), second.to_bytes()
    return len(a).to_bytes(4, "big") + a + len(b).to_bytes(4, "big") + b


def decode_pair(evidence: bytes) -> Tuple[Checkpoint, Checkpoint]:
    reader = ByteReader(evidence)
    first = Checkpoint.from_bytes(reader.take(reader.uint(4)))
    second = Checkpoint.from_bytes(reader.take(reader.uint(4)))
    reader.expect_end()
    return first, second


def check_split_view_evidence(evidence: bytes, pk_E: PublicKey) -> bool:
    """
    Re-verify fork evidence without trusting the reporter

    :param evidence: two checkpoints as produced by `encode_pair`
    :param pk_E: enforcer public key

    :returns: True iff both checkpoints carry valid enforcer signatures and commit to different
              trees of the same size
    """
    try:
        first, second = decode_pair(evidence)
    except (VeilblockError, ValueError):
        return False
    return (verify_signature(pk_E, first.canonical(), first.enforcer_sig)
            and verify_signature(pk_E, second.canonical(), second.enforcer_sig)
            and first.size == second.size
            and first.root != second.root)


def audit_checkpoints(checkpoints: List[Checkpoint], proof_oracle: ProofOracle, pk_E: PublicKey,
                      witness_pks: Dict[str, PublicKey] = None, policy: AuditPolicy = None,
                      now: Timestamp = None) -> AuditReport:
    """
    Unprivileged audit of gossiped checkpoints, using public data only.

    :param checkpoints: checkpoints in gossip order
    :param proof_oracle: source of consistency proofs, usually the enforcer
    :param pk_E: enforcer public key
    :param witness_pks: known witnesses
    :param policy: update and freshness policy
    :param now: if given, the newest checkpoint must not be older than `max_checkpoint_age`

    :returns: `AuditReport`
    """
    if not checkpoints:
        raise TransparencyError("no checkpoints to audit")
    policy = policy or AuditPolicy()
    report = AuditReport()

    valid: List[Checkpoint] = []
    for chkpt in checkpoints:
        reason = check_checkpoint(chkpt, pk_E, witness_pks, policy.witness_quorum)
        if reason is not None:
            report.add(ViolationKind.SIGNATURE, chkpt.to_bytes(), f"checkpoint of size {chkpt.size}: {reason.value}")
        else:
            valid.append(chkpt)
    if not valid:
        return report

    by_size: Dict[int, Checkpoint] = {}
    last_update: Timestamp | None = None
    for prev, cur in zip([None] + valid[:-1], valid):
        seen = by_size.setdefault(cur.size, cur)
        if seen.root != cur.root:
            report.add(ViolationKind.INCONSISTENCY, encode_pair(seen, cur), f"split view at size {cur.size}")
        if prev is None:
            last_update = cur.timestamp
            continue
        if cur.timestamp < prev.timestamp:
            report.add(ViolationKind.INCONSISTENCY, encode_pair(prev, cur), "checkpoint timestamps regressed")
        if cur.size < prev.size:
            report.add(ViolationKind.INCONSISTENCY, encode_pair(prev, cur), "log size regressed")
        # leaves appended at one instant form a single publication
        if cur.size > prev.size and cur.timestamp != last_update:
            if cur.timestamp - last_update < policy.min_update_interval:
                report.add(ViolationKind.OSCILLATION, encode_pair(prev, cur),
                           f"update {cur.timestamp - last_update}s after the previous one")
            last_update = cur.timestamp

    latest = max(valid, key=lambda c: (c.size, c.timestamp))
    for chkpt in valid:
        if chkpt.size >= latest.size:
            continue
        try:
            proof = proof_oracle(chkpt.size, latest.size)
        except Exception as ex:
            report.add(ViolationKind.INCONSISTENCY, encode_pair(chkpt, latest),
                       f"enforcer refused consistency proof {chkpt.size}->{latest.size}: {ex}")
            continue
        if not verify_consistency(chkpt, latest, proof):
            report.add(ViolationKind.INCONSISTENCY, encode_pair(chkpt, latest),
                       f"consistency proof {chkpt.size}->{latest.size} does not verify")

    if now is not None and now - latest.timestamp > policy.max_checkpoint_age:
        report.add(ViolationKind.STALE, latest.to_bytes(), f"newest checkpoint is {now - latest.timestamp}s old")

    LOGGER.info(f"audited {len(checkpoints)} checkpoints: {report.verdict}")
    return report


def privileged_audit(snapshot: DatabaseSnapshot, objects: Mapping[Any, bytes], blind_B: Scalar, keyrings: Keyrings,
                     policy_m: int, now: Timestamp = None, pk_E: PublicKey = None,
                     skew: int = DEFAULT_CLOCK_SKEW) -> AuditReport:
    """
    Rebuild the blinded ids from raw objects and re-run the client checks on every record

    :param snapshot: published snapshot
    :param objects: raw objects disclosed by the curators, keyed by their idx
    :param blind_B: the enforcer's blinding value
    :param keyrings: curator keyrings
    :param policy_m: the enforcer's m-of-n policy
    :param now: verification time for signature freshness
    :param pk_E: if given, the snapshot commitment is checked against the log as well

    :returns: `AuditReport`
    """
    now = now_ts() if now is None else now
    report = AuditReport()

    if database_hash(snapshot.records) != snapshot.db_hash:
        report.add(ViolationKind.CONTENT_MISMATCH, snapshot.db_hash, "records do not hash to the committed db_hash")
    if pk_E is not None and not verify_inclusion(snapshot.checkpoint, snapshot.db_hash, snapshot.inclusion, pk_E):
        report.add(ViolationKind.INCONSISTENCY, snapshot.checkpoint.to_bytes(), "db_hash not included at checkpoint")

    known = {}
    for obj in objects.values():
        h = object_hash(obj)
        c_prime = blind_object_hash(h, blind_B)
        known[derive_id(c_prime)] = (h, c_prime)

    for record in snapshot.records:
        match = known.get(record.blinded_id)
        if match is None:
            report.add(ViolationKind.CONTENT_MISMATCH, record.blinded_id,
                       f"record {record.blinded_id.hex()} matches no disclosed object")
            continue
        h, c_prime = match
        verdict = evaluate_record(h, c_prime, record.enc_sigs, keyrings, policy_m, now, skew, snapshot.epoch)
        if not verdict.harmful:
            report.add(ViolationKind.CONTENT_MISMATCH, record.blinded_id,
                       f"record {record.blinded_id.hex()}: {verdict.diagnostics}")

    LOGGER.info(f"privileged audit of epoch {snapshot.epoch}: {report.verdict}")
    return report


def verify_appeal(bundle: AppealBundle, keyrings: Keyrings, now: Timestamp = None,
                  skew: int = DEFAULT_CLOCK_SKEW) -> AppealResult:
    now = now_ts() if now is None else now
    h = object_hash(bundle.object_bytes)
    reasons = []
    if not bundle.signatures:
        reasons.append("bundle carries no signatures")
    for entry in bundle.signatures:
        keyring = keyrings.get(entry.curator_id)
        if keyring is None:
            reasons.append(f"unknown curator {entry.curator_id}")
        elif keyring.match(h, entry.signature, now, skew, entry.signed_at) is None:
            reasons.append(f"signature of {entry.curator_id} does not verify over the object")
    return AppealResult(not reasons, tuple(reasons))
