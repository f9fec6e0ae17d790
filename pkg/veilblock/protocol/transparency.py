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
import base64
import hashlib
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import List, Dict, Tuple, TypeAlias
from typing_extensions import Self

from .crypto import SigningKeypair, sign, verify
from .definitions import *

LOGGER = logging.getLogger(__name__)

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"
EMPTY_ROOT = hashlib.sha256(b"").digest()

WitnessSig: TypeAlias = Tuple[str, Signature]


def leaf_hash(leaf: Digest) -> Digest:
    return hashlib.sha256(LEAF_PREFIX + leaf).digest()


def node_hash(left: Digest, right: Digest) -> Digest:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


def _split(n: int) -> int:
    """largest power of two strictly smaller than n"""
    return 1 << ((n - 1).bit_length() - 1)


def _read_path(reader: ByteReader) -> Tuple[Digest, ...]:
    return tuple(reader.take(DIGEST_LEN) for _ in range(reader.uint(1)))


@dataclass(frozen=True, slots=True)
class InclusionProof:
    index: int
    size: int
    path: Tuple[Digest, ...] = ()

    def to_bytes(self) -> bytes:
        return (self.index.to_bytes(8, "big") + self.size.to_bytes(8, "big")
                + len(self.path).to_bytes(1, "big") + b"".join(self.path))

    @classmethod
    def read(cls, reader: ByteReader) -> Self:
        return cls(index=reader.uint(8), size=reader.uint(8), path=_read_path(reader))


@dataclass(frozen=True, slots=True)
class ConsistencyProof:
    old_size: int
    new_size: int
    path: Tuple[Digest, ...] = ()

    def to_bytes(self) -> bytes:
        return (self.old_size.to_bytes(8, "big") + self.new_size.to_bytes(8, "big")
                + len(self.path).to_bytes(1, "big") + b"".join(self.path))

    @classmethod
    def read(cls, reader: ByteReader) -> Self:
        return cls(old_size=reader.uint(8), new_size=reader.uint(8), path=_read_path(reader))


@dataclass(frozen=True, slots=True)
class Checkpoint:
    root: Digest
    size: int
    timestamp: Timestamp
    enforcer_sig: Signature = b""
    witness_sigs: Tuple[WitnessSig, ...] = ()

    def canonical(self) -> bytes:
        """Bytes covered by the enforcer and witness signatures"""
        return self.root + self.size.to_bytes(8, "big") + self.timestamp.to_bytes(8, "big")

    def with_witness(self, witness_id: str, sig: Signature) -> Self:
        kept = tuple(w for w in self.witness_sigs if w[0] != witness_id)
        return replace(self, witness_sigs=kept + ((witness_id, sig),))

    def same_state(self, other: Self) -> bool:
        return self.canonical() == other.canonical()

    def to_bytes(self) -> bytes:
        out = [self.canonical(), self.enforcer_sig, len(self.witness_sigs).to_bytes(2, "big")]
        for witness_id, sig in self.witness_sigs:
            encoded = witness_id.encode("utf-8")
            out.append(len(encoded).to_bytes(1, "big") + encoded + sig)
        return b"".join(out)

    @classmethod
    def read(cls, reader: ByteReader) -> Self:
        root = reader.take(DIGEST_LEN)
        size = reader.uint(8)
        timestamp = reader.uint(8)
        enforcer_sig = reader.take(SIGNATURE_LEN)
        witnesses = []
        for _ in range(reader.uint(2)):
            witness_id = reader.take(reader.uint(1)).decode("utf-8")
            witnesses.append((witness_id, reader.take(SIGNATURE_LEN)))
        return cls(root, size, timestamp, enforcer_sig, tuple(witnesses))

    @classmethod
    def from_bytes(cls, data: bytes) -> Self:
        reader = ByteReader(data)
        chkpt = cls.read(reader)
        reader.expect_end()
        return chkpt

    def to_line(self) -> str:
        return base64.b64encode(self.to_bytes()).decode("ascii")

    @classmethod
    def from_line(cls, line: str) -> Self:
        return cls.from_bytes(base64.b64decode(line.strip(), validate=True))


class MerkleTree:
    """
    Append-only, left-balanced Merkle tree with the usual transparency-log hashing.

    Subtree hashes are cached by their leaf range; ranges are immutable once all their leaves exist.
    """

    def __init__(self, leaves: List[Digest] = None):
        self._leaves: List[Digest] = []
        self._cache: Dict[Tuple[int, int], Digest] = {}
        for leaf in leaves or []:
            self.append(leaf)

    def __len__(self):
        return len(self._leaves)

    @property
    def size(self) -> int:
        return len(self._leaves)

    @property
    def leaves(self) -> List[Digest]:
        return list(self._leaves)

    def append(self, leaf: Digest) -> int:
        if len(leaf) != DIGEST_LEN:
            raise TransparencyError(f"leaf must be {DIGEST_LEN} bytes")
        self._leaves.append(bytes(leaf))
        return len(self._leaves) - 1

    def _subtree(self, lo: int, hi: int) -> Digest:
        key = (lo, hi)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        if hi - lo == 1:
            digest = leaf_hash(self._leaves[lo])
        else:
            k = _split(hi - lo)
            digest = node_hash(self._subtree(lo, lo + k), self._subtree(lo + k, hi))
        self._cache[key] = digest
        return digest

    def root(self, size: int = None) -> Digest:
        size = self.size if size is None else size
        if size > self.size:
            raise ProofError(f"tree has only {self.size} leaves")
        if size == 0:
            return EMPTY_ROOT
        return self._subtree(0, size)

    def _path(self, m: int, lo: int, hi: int) -> List[Digest]:
        if hi - lo == 1:
            return []
        k = _split(hi - lo)
        if m - lo < k:
            return self._path(m, lo, lo + k) + [self._subtree(lo + k, hi)]
        return self._path(m, lo + k, hi) + [self._subtree(lo, lo + k)]

    def prove_inclusion(self, index: int, size: int = None) -> InclusionProof:
        size = self.size if size is None else size
        if not 0 <= index < size <= self.size:
            raise ProofError(f"no inclusion proof for leaf {index} in tree of size {size}")
        return InclusionProof(index, size, tuple(self._path(index, 0, size)))

    def _subproof(self, m: int, lo: int, hi: int, complete: bool) -> List[Digest]:
        n = hi - lo
        if m == n:
            return [] if complete else [self._subtree(lo, hi)]
        k = _split(n)
        if m <= k:
            return self._subproof(m, lo, lo + k, complete) + [self._subtree(lo + k, hi)]
        return self._subproof(m - k, lo + k, hi, False) + [self._subtree(lo, lo + k)]

    def prove_consistency(self, old_size: int, new_size: int) -> ConsistencyProof:
        if old_size > new_size:
            raise ProofError(f"old size {old_size} exceeds new size {new_size}")
        if new_size > self.size:
            raise ProofError(f"tree has only {self.size} leaves")
        if old_size == 0 or old_size == new_size:
            return ConsistencyProof(old_size, new_size)
        return ConsistencyProof(old_size, new_size, tuple(self._subproof(old_size, 0, new_size, True)))


def verify_inclusion_path(root: Digest, leaf: Digest, index: int, size: int, path: Tuple[Digest, ...]) -> bool:
    if not 0 <= index < size:
        return False
    fn, sn = index, size - 1
    r = leaf_hash(leaf)
    for p in path:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            r = node_hash(p, r)
            if not fn & 1:
                while not fn & 1 and fn != 0:
                    fn >>= 1
                    sn >>= 1
        else:
            r = node_hash(r, p)
        fn >>= 1
        sn >>= 1
    return sn == 0 and r == root


def verify_consistency_path(old_size: int, old_root: Digest, new_size: int, new_root: Digest,
                            path: Tuple[Digest, ...]) -> bool:
    if old_size > new_size:
        return False
    if old_size == new_size:
        return not path and old_root == new_root
    if old_size == 0:
        return not path
    if not path:
        return False

    path = list(path)
    if old_size & (old_size - 1) == 0:
        path.insert(0, old_root)
    fn, sn = old_size - 1, new_size - 1
    while fn & 1:
        fn >>= 1
        sn >>= 1
    fr = sr = path[0]
    for c in path[1:]:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            fr = node_hash(c, fr)
            sr = node_hash(c, sr)
            if not fn & 1:
                while not fn & 1 and fn != 0:
                    fn >>= 1
                    sn >>= 1
        else:
            sr = node_hash(sr, c)
        fn >>= 1
        sn >>= 1
    return fr == old_root and sr == new_root and sn == 0


def check_checkpoint(chkpt: Checkpoint, pk_E: PublicKey, witness_pks: Dict[str, PublicKey] = None,
                     quorum: int = 0) -> RejectReason | None:
    """
    Check the signatures on a checkpoint

    :param chkpt: checkpoint to check
    :param pk_E: enforcer public key
    :param witness_pks: known witnesses by id; every attached witness signature must verify
    :param quorum: minimum number of distinct witnesses

    :returns: `None` if acceptable, else the first failing `RejectReason`
    """
    if not verify(pk_E, chkpt.canonical(), chkpt.enforcer_sig):
        return RejectReason.ENFORCER_SIGNATURE
    witness_pks = witness_pks or {}
    attested = set()
    for witness_id, sig in chkpt.witness_sigs:
        pk = witness_pks.get(witness_id)
        if pk is None or not verify(pk, chkpt.canonical(), sig):
            return RejectReason.WITNESS_SIGNATURE
        attested.add(witness_id)
    if len(attested) < quorum:
        return RejectReason.WITNESS_QUORUM
    return None


def verify_inclusion(chkpt: Checkpoint, leaf: Digest, proof: InclusionProof, pk_E: PublicKey,
                     witness_pks: Dict[str, PublicKey] = None) -> bool:
    """True iff the checkpoint is validly signed and `leaf` is its rightmost entry"""
    try:
        if check_checkpoint(chkpt, pk_E, witness_pks) is not None:
            return False
        if proof.size != chkpt.size or proof.index != chkpt.size - 1:
            return False
        return verify_inclusion_path(chkpt.root, leaf, proof.index, proof.size, proof.path)
    except (TypeError, ValueError, AttributeError):
        return False


def prove_consistency(tree: MerkleTree, old_size: int, new_size: int) -> ConsistencyProof:
    return tree.prove_consistency(old_size, new_size)


def verify_consistency(chkpt_old: Checkpoint, chkpt_new: Checkpoint, proof: ConsistencyProof) -> bool:
    try:
        if proof.old_size != chkpt_old.size or proof.new_size != chkpt_new.size:
            return False
        return verify_consistency_path(chkpt_old.size, chkpt_old.root, chkpt_new.size, chkpt_new.root, proof.path)
    except (TypeError, ValueError, AttributeError):
        return False


class CheckpointStore(ABC):
    """Gossip channel for checkpoints: a public bulletin board in append order"""

    @abstractmethod
    def publish(self, chkpt: Checkpoint):
        pass

    @abstractmethod
    def fetch(self) -> List[Checkpoint]:
        pass


class MemoryCheckpointStore(CheckpointStore):

    def __init__(self):
        self._checkpoints: List[Checkpoint] = []

    def publish(self, chkpt: Checkpoint):
        self._checkpoints.append(chkpt)

    def fetch(self) -> List[Checkpoint]:
        return list(self._checkpoints)


def fetch_checkpoints(store: CheckpointStore) -> List[Checkpoint]:
    return store.fetch()


def witness_attest(chkpt: Checkpoint, witness_keypair: SigningKeypair, prior: Checkpoint | None,
                   proof: ConsistencyProof | None, pk_E: PublicKey) -> Signature:
    """
    Cosign `chkpt` after checking it against the witness's last-seen checkpoint

    :raises WitnessRefusal: evidence is `(prior, chkpt)` whenever the two cannot describe one log
    """
    if not verify(pk_E, chkpt.canonical(), chkpt.enforcer_sig):
        raise WitnessRefusal("enforcer signature does not verify")
    if prior is not None:
        evidence = (prior, chkpt)
        if chkpt.timestamp < prior.timestamp:
            raise WitnessRefusal("checkpoint timestamp regressed", evidence)
        if chkpt.size < prior.size:
            raise WitnessRefusal("checkpoint size regressed", evidence)
        if chkpt.size == prior.size:
            if chkpt.root != prior.root:
                raise WitnessRefusal("split view: equal size, different roots", evidence)
        elif proof is None or not verify_consistency(prior, chkpt, proof):
            raise WitnessRefusal("consistency proof does not verify", evidence)
    return sign(witness_keypair.secret_key, chkpt.canonical())


@dataclass
class Witness:
    """In-process witness; remembers the last checkpoint it cosigned"""
    witness_id: str
    keypair: SigningKeypair
    last_seen: Checkpoint | None = None
    evidence: List[Tuple[Checkpoint, Checkpoint]] = field(default_factory=list)

    def attest(self, chkpt: Checkpoint, proof: ConsistencyProof | None, pk_E: PublicKey) -> Signature:
        try:
            sig = witness_attest(chkpt, self.keypair, self.last_seen, proof, pk_E)
        except WitnessRefusal as ex:
            if ex.evidence is not None:
                self.evidence.append(ex.evidence)
            LOGGER.warning(f"witness {self.witness_id} refused checkpoint of size {chkpt.size}: {ex.message}")
            raise
        self.last_seen = chkpt
        LOGGER.debug(f"witness {self.witness_id} attested size {chkpt.size}")
        return sig


class TransparencyLog:
    """The enforcer's log: tree, signing key, published checkpoints and attached witnesses"""

    def __init__(self, keypair: SigningKeypair, tree: MerkleTree = None, store: CheckpointStore = None,
                 witnesses: List[Witness] = None, last_checkpoint: Checkpoint = None):
        self.keypair = keypair
        self.tree = tree if tree is not None else MerkleTree()
        self.store = store if store is not None else MemoryCheckpointStore()
        self.witnesses = witnesses or []
        self.last_checkpoint = last_checkpoint

    @property
    def public_key(self) -> PublicKey:
        return self.keypair.public_key

    def sign_checkpoint(self, now: Timestamp) -> Checkpoint:
        chkpt = Checkpoint(self.tree.root(), self.tree.size, now)
        return replace(chkpt, enforcer_sig=sign(self.keypair.secret_key, chkpt.canonical()))

    def cosign(self, chkpt: Checkpoint) -> Checkpoint:
        for witness in self.witnesses:
            old = witness.last_seen.size if witness.last_seen else 0
            proof = self.tree.prove_consistency(old, chkpt.size) if old <= chkpt.size else None
            try:
                chkpt = chkpt.with_witness(witness.witness_id, witness.attest(chkpt, proof, self.public_key))
            except WitnessRefusal:
                continue
        return chkpt

    def append_leaf(self, leaf: Digest, now: Timestamp) -> Tuple[Checkpoint, InclusionProof]:
        """
        Append a leaf, sign and publish the resulting checkpoint

        :param leaf: 32-byte digest, usually a database hash
        :param now: checkpoint timestamp, not earlier than the previous checkpoint

        :returns: the checkpoint and a proof that `leaf` is its rightmost entry
        """
        if self.last_checkpoint is not None and now < self.last_checkpoint.timestamp:
            raise ClockRegressionError(f"{now} is earlier than previous checkpoint {self.last_checkpoint.timestamp}")
        index = self.tree.append(leaf)
        chkpt = self.cosign(self.sign_checkpoint(now))
        self.store.publish(chkpt)
        self.last_checkpoint = chkpt
        LOGGER.info(f"checkpoint published: size {chkpt.size}, {len(chkpt.witness_sigs)} witness signatures")
        return chkpt, self.tree.prove_inclusion(index, chkpt.size)

    def prove_consistency(self, old_size: int, new_size: int) -> ConsistencyProof:
        return self.tree.prove_consistency(old_size, new_size)
