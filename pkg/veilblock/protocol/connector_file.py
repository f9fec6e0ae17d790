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
import json
import logging
import os
from dataclasses import replace
from pathlib import Path
from typing import List, Dict

from filelock import FileLock
from pydantic import BaseModel

from .crypto import SigningKeypair, Scalar
from .curator import CuratorDatabase, CuratorIdentity, CuratorKeyring, CuratorExport, RevocationMode, Keyrings
from .definitions import *
from .enforcer import EnforcerState
from .pir.buckets import build_buckets
from .pir.util import BucketedDB
from .records import DatabaseSnapshot
from .transparency import Checkpoint, CheckpointStore, InclusionProof, MerkleTree, TransparencyLog, Witness

LOGGER = logging.getLogger(__name__)

LOCK_TIMEOUT = 30


def _lock(path: Path) -> FileLock:
    return FileLock(str(path) + ".lock", timeout=LOCK_TIMEOUT)


def _write_atomic(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_seed(path: Path | str, keypair: SigningKeypair):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(path, keypair.seed().hex().encode("ascii"))
    os.chmod(path, 0o600)


def load_seed(path: Path | str) -> SigningKeypair:
    path = Path(path)
    if not path.is_file():
        raise MissingKeyFileError(f"key file {path} not found")
    try:
        return SigningKeypair.from_seed(bytes.fromhex(path.read_text().strip()))
    except ValueError as ex:
        raise ConfigError(f"key file {path} is malformed: {ex}")


def save_scalar(path: Path | str, scalar: Scalar):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(path, scalar.to_bytes().hex().encode("ascii"))
    os.chmod(path, 0o600)


def load_scalar(path: Path | str) -> Scalar:
    path = Path(path)
    if not path.is_file():
        raise MissingKeyFileError(f"blinding file {path} not found")
    return Scalar.from_bytes(bytes.fromhex(path.read_text().strip()))


def load_public_key(path: Path | str) -> PublicKey:
    """a public key file holds 64 hex characters"""
    path = Path(path)
    if not path.is_file():
        raise MissingKeyFileError(f"public key file {path} not found")
    key = bytes.fromhex(path.read_text().strip())
    if len(key) != PUBLIC_KEY_LEN:
        raise ConfigError(f"public key file {path} does not hold {PUBLIC_KEY_LEN} bytes")
    return key


def save_public_key(path: Path | str, key: PublicKey):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(path, key.hex().encode("ascii"))


def save_keyring(path: Path | str, keyring: CuratorKeyring):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_atomic(path, keyring.model_dump_json(indent=2).encode("utf-8"))


def load_keyring(path: Path | str) -> CuratorKeyring:
    path = Path(path)
    if not path.is_file():
        raise MissingKeyFileError(f"keyring {path} not found")
    return CuratorKeyring.model_validate(json.loads(path.read_text()))


def load_keyrings(paths: List[Path | str]) -> Keyrings:
    keyrings = [load_keyring(p) for p in paths]
    return {k.curator_id: k for k in keyrings}


class FileCheckpointStore(CheckpointStore):
    """Append-only gossip file, one base64 checkpoint per line"""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def publish(self, chkpt: Checkpoint):
        with _lock(self.path):
            with open(self.path, "a", encoding="ascii") as fh:
                fh.write(chkpt.to_line() + "\n")

    def fetch(self) -> List[Checkpoint]:
        if not self.path.exists():
            return []
        with _lock(self.path):
            lines = self.path.read_text(encoding="ascii").splitlines()
        return [Checkpoint.from_line(line) for line in lines if line.strip()]


class _CuratorMeta(BaseModel):
    curator_id: str
    mode: RevocationMode
    validity_window: int
    withdrawn: List[int] = []
    auditors: List[str] = []


class CuratorStore:
    """
    Curator state directory:

        curator.key     hex seed of the current signing key
        keyring.json    public keyring
        meta.json       identity and bookkeeping
        entries.bin     entries in export format
        objects/<idx>   raw object bytes
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)

    @property
    def keyring_path(self) -> Path:
        return self.directory / "keyring.json"

    def exists(self) -> bool:
        return (self.directory / "meta.json").exists()

    def save(self, db: CuratorDatabase):
        self.directory.mkdir(parents=True, exist_ok=True)
        with _lock(self.directory / "state"):
            save_seed(self.directory / "curator.key", db.identity.keypair)
            save_keyring(self.keyring_path, db.keyring)
            meta = _CuratorMeta(curator_id=db.curator_id, mode=db.identity.mode,
                                validity_window=db.identity.validity_window,
                                withdrawn=sorted(db.withdrawn), auditors=sorted(db.auditors))
            _write_atomic(self.directory / "meta.json", meta.model_dump_json(indent=2).encode("utf-8"))
            _write_atomic(self.directory / "entries.bin", db.export().to_bytes())
            objects = self.directory / "objects"
            objects.mkdir(exist_ok=True)
            for idx, data in db.objects.items():
                target = objects / str(idx)
                if not target.exists():
                    target.write_bytes(data)

    def load(self) -> CuratorDatabase:
        if not self.exists():
            raise MissingKeyFileError(f"no curator state in {self.directory}")
        with _lock(self.directory / "state"):
            meta = _CuratorMeta.model_validate(json.loads((self.directory / "meta.json").read_text()))
            keypair = load_seed(self.directory / "curator.key")
            keyring = load_keyring(self.keyring_path)
            export = CuratorExport.from_bytes((self.directory / "entries.bin").read_bytes())
            objects = {int(p.name): p.read_bytes() for p in (self.directory / "objects").iterdir()} \
                if (self.directory / "objects").exists() else {}
        identity = CuratorIdentity(meta.curator_id, keypair, meta.validity_window, meta.mode)
        return CuratorDatabase(identity, keyring, export.entries, objects, set(meta.withdrawn), set(meta.auditors))


class _EnforcerMeta(BaseModel):
    policy_m: int
    epoch: int = 0
    update_interval: int = 3600
    clock_skew: int = DEFAULT_CLOCK_SKEW
    last_published: Timestamp | None = None
    last_checkpoint: str | None = None


class EnforcerStore:
    """
    Enforcer state directory:

        enforcer.key        hex seed of the log signing key
        blinding            hex of B; handed to privileged auditors out of band
        meta.json           policy, epoch and last checkpoint
        leaves.bin          log leaves, 32 bytes each
        curators/<id>.bin   accumulated curator exports
        snapshot.bin        current snapshot
        bucketed.bin        prefix bits and log position of the bucketed view
    """

    def __init__(self, directory: Path | str, gossip: CheckpointStore = None):
        self.directory = Path(directory)
        self.gossip = gossip or FileCheckpointStore(self.directory / "checkpoints.log")

    @property
    def blinding_path(self) -> Path:
        return self.directory / "blinding"

    @property
    def snapshot_path(self) -> Path:
        return self.directory / "snapshot.bin"

    @property
    def bucketed_path(self) -> Path:
        return self.directory / "bucketed.bin"

    def exists(self) -> bool:
        return (self.directory / "meta.json").exists()

    def save_bucketed(self, db: BucketedDB):
        if db.checkpoint is None or db.inclusion is None:
            raise EnforcerError("bucketed view is not committed to the log")
        data = db.prefix_bits_k.to_bytes(1, "big") + db.db_hash + db.inclusion.to_bytes() + db.checkpoint.to_bytes()
        with _lock(self.directory / "state"):
            _write_atomic(self.bucketed_path, data)

    def load_bucketed(self, snapshot: DatabaseSnapshot) -> BucketedDB | None:
        """
        Rebuild the bucketed view of `snapshot` and attach its logged position

        :returns: `BucketedDB`, or `None` if no bucketed view was published
        :raises EnforcerError: the stored view does not belong to `snapshot`
        """
        if not self.bucketed_path.exists():
            return None
        reader = ByteReader(self.bucketed_path.read_bytes())
        prefix_bits, db_hash = reader.uint(1), reader.take(DIGEST_LEN)
        inclusion = InclusionProof.read(reader)
        checkpoint = Checkpoint.read(reader)
        reader.expect_end()
        db = build_buckets(snapshot.records, prefix_bits)
        if db.db_hash != db_hash:
            raise EnforcerError(f"bucketed view does not match the snapshot of epoch {snapshot.epoch}")
        return replace(db, checkpoint=checkpoint, inclusion=inclusion)

    def save(self, state: EnforcerState):
        self.directory.mkdir(parents=True, exist_ok=True)
        with _lock(self.directory / "state"):
            save_seed(self.directory / "enforcer.key", state.keypair)
            save_scalar(self.blinding_path, state.blind_B)
            last = state.log.last_checkpoint.to_line() if state.log.last_checkpoint else None
            meta = _EnforcerMeta(policy_m=state.policy_m, epoch=state.epoch, update_interval=state.update_interval,
                                 clock_skew=state.clock_skew, last_published=state.last_published,
                                 last_checkpoint=last)
            _write_atomic(self.directory / "meta.json", meta.model_dump_json(indent=2).encode("utf-8"))
            _write_atomic(self.directory / "leaves.bin", b"".join(state.log.tree.leaves))
            curators = self.directory / "curators"
            curators.mkdir(exist_ok=True)
            for curator_id, entries in state.curator_sets.items():
                # the public key slot of the export header is unused here
                export = CuratorExport(curator_id, bytes(PUBLIC_KEY_LEN), entries)
                _write_atomic(curators / f"{curator_id}.bin", export.to_bytes())
            if state.snapshot is not None:
                _write_atomic(self.snapshot_path, state.snapshot.to_bytes())

    def load(self, witnesses: List[Witness] = None) -> EnforcerState:
        if not self.exists():
            raise MissingKeyFileError(f"no enforcer state in {self.directory}")
        with _lock(self.directory / "state"):
            meta = _EnforcerMeta.model_validate(json.loads((self.directory / "meta.json").read_text()))
            keypair = load_seed(self.directory / "enforcer.key")
            blind_B = load_scalar(self.blinding_path)
            raw = (self.directory / "leaves.bin").read_bytes()
            tree = MerkleTree([raw[i:i + DIGEST_LEN] for i in range(0, len(raw), DIGEST_LEN)])
            curator_sets = {}
            curators = self.directory / "curators"
            if curators.exists():
                for path in sorted(curators.glob("*.bin")):
                    export = CuratorExport.from_bytes(path.read_bytes())
                    curator_sets[export.curator_id] = export.entries
            snapshot = DatabaseSnapshot.from_bytes(self.snapshot_path.read_bytes()) \
                if self.snapshot_path.exists() else None

        last = Checkpoint.from_line(meta.last_checkpoint) if meta.last_checkpoint else None
        log = TransparencyLog(keypair, tree, self.gossip, witnesses, last)
        return EnforcerState(blind_B=blind_B, keypair=keypair, policy_m=meta.policy_m, log=log, epoch=meta.epoch,
                             curator_sets=curator_sets, update_interval=meta.update_interval,
                             clock_skew=meta.clock_skew, last_published=meta.last_published, snapshot=snapshot)


class WitnessStore:
    """
    Witness state directory:

        witness.key     hex seed
        last_seen       base64 checkpoint last cosigned
        evidence.log    refused checkpoint pairs, base64, two per line
    """

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)

    def save(self, witness: Witness):
        self.directory.mkdir(parents=True, exist_ok=True)
        with _lock(self.directory / "state"):
            save_seed(self.directory / "witness.key", witness.keypair)
            (self.directory / "witness.id").write_text(witness.witness_id)
            if witness.last_seen is not None:
                _write_atomic(self.directory / "last_seen", witness.last_seen.to_line().encode("ascii"))
            if witness.evidence:
                lines = [f"{a.to_line()} {b.to_line()}" for a, b in witness.evidence]
                _write_atomic(self.directory / "evidence.log", ("\n".join(lines) + "\n").encode("ascii"))

    def load(self) -> Witness:
        with _lock(self.directory / "state"):
            keypair = load_seed(self.directory / "witness.key")
            witness_id = (self.directory / "witness.id").read_text().strip()
            last_path = self.directory / "last_seen"
            last = Checkpoint.from_line(last_path.read_text()) if last_path.exists() else None
            evidence = []
            evidence_path = self.directory / "evidence.log"
            if evidence_path.exists():
                for line in evidence_path.read_text().splitlines():
                    a, b = line.split()
                    evidence.append((Checkpoint.from_line(a), Checkpoint.from_line(b)))
        return Witness(witness_id, keypair, last, evidence)


def load_witness_keys(paths: Dict[str, Path | str]) -> Dict[str, PublicKey]:
    return {witness_id: load_public_key(path) for witness_id, path in paths.items()}
