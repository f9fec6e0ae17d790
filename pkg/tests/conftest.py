import random
from typing import Dict, Iterable, List, Tuple

import pytest

from veilblock.protocol.client import begin_query, complete_query, verify_snapshot
from veilblock.protocol.crypto import keygen
from veilblock.protocol.curator import CuratorDatabase, RevocationMode
from veilblock.protocol.enforcer import EnforcerState, build_database, respond_psi
from veilblock.protocol.pir.backends import load_backend
from veilblock.protocol.transparency import TransparencyLog, Witness

NOW = 1_700_000_000
HOUR = 3600
DAY = 24 * HOUR


def make_objects(count: int, prefix: str = "harmful", seed: int = 0) -> List[bytes]:
    rng = random.Random(seed)
    return [f"{prefix}-{i}-{rng.getrandbits(64):016x}".encode() for i in range(count)]


def make_curator(curator_id: str, objects: Iterable[bytes] = (), mode: RevocationMode = RevocationMode.STATIC,
                 window: int = 0, now: int = NOW, auditors=("auditor",)) -> CuratorDatabase:
    db = CuratorDatabase.create(curator_id, mode, window, now, set(auditors))
    for obj in objects:
        db.add_object(obj, now)
    return db


def publish(state: EnforcerState, curators: Iterable[CuratorDatabase], now: int = NOW):
    curators = list(curators)
    sets = {c.curator_id: c.export_set() for c in curators}
    keyrings = {c.curator_id: c.keyring for c in curators}
    return build_database(state, sets, keyrings, now), keyrings


def detect(state: EnforcerState, obj: bytes) -> Tuple[bytes, object]:
    """one full PSI round trip in process"""
    request, query_state = begin_query(obj)
    return complete_query(query_state, respond_psi(state, request))


@pytest.fixture
def enforcer() -> EnforcerState:
    return EnforcerState.create(clock_skew=0)


@pytest.fixture
def witnessed_enforcer() -> Tuple[EnforcerState, Dict[str, bytes]]:
    keypair = keygen()
    witnesses = [Witness(f"w{i}", keygen()) for i in range(2)]
    state = EnforcerState.create(keypair=keypair, log=TransparencyLog(keypair, witnesses=witnesses), clock_skew=0)
    return state, {w.witness_id: w.keypair.public_key for w in witnesses}


@pytest.fixture
def objects() -> List[bytes]:
    return make_objects(20)


@pytest.fixture
def alpha(objects) -> CuratorDatabase:
    return make_curator("alpha", objects)


@pytest.fixture
def published(enforcer, alpha):
    """enforcer with one static curator's list published and verified"""
    snapshot, keyrings = publish(enforcer, [alpha])
    db = verify_snapshot(snapshot, enforcer.public_key)
    return enforcer, snapshot, db, keyrings


@pytest.fixture
def backend():
    return load_backend("plaintext-reference")
