import random

import pytest

from veilblock.protocol.auditor import audit_checkpoints, privileged_audit
from veilblock.protocol.client import evaluate, verify_snapshot
from veilblock.protocol.connector_file import CuratorStore, EnforcerStore, FileCheckpointStore, WitnessStore, \
    load_keyrings, save_keyring
from veilblock.protocol.crypto import keygen, object_hash, verify
from veilblock.protocol.curator import RevocationMode, signed_payload
from veilblock.protocol.definitions import EnforcerError
from veilblock.protocol.enforcer import EnforcerState, publish_bucketed, publish_update
from veilblock.protocol.pir.buckets import client_pir_decode, client_pir_query, server_pir_answer
from veilblock.protocol.transparency import TransparencyLog, Witness

from conftest import DAY, HOUR, NOW, detect, make_curator, make_objects, publish


def lookup(state, obj, keyrings, now):
    """detection as a client sees it: sync, verify, PSI, evaluate"""
    db = verify_snapshot(state.snapshot, state.public_key)
    _, unblinded = detect(state, obj)
    return evaluate(obj, unblinded, db, keyrings, state.policy_m, now, skew=0)


@pytest.mark.parametrize("mode", [RevocationMode.ROTATION, RevocationMode.TIMESTAMP])
def test_revocation_by_expiry(enforcer, mode):
    objects = make_objects(4)
    curator = make_curator("alpha", objects, mode, DAY)
    _, keyrings = publish(enforcer, [curator])
    assert lookup(enforcer, objects[0], keyrings, NOW + HOUR).harmful

    # the curator stops renewing object 0 and keeps the rest alive
    curator.withdraw(1)
    renewal = NOW + DAY + 1
    curator.renew_signatures(renewal)
    keyrings = {"alpha": curator.keyring}
    publish_update(enforcer, {"alpha": curator.export_set()}, keyrings, renewal)

    after = renewal + HOUR
    assert not lookup(enforcer, objects[0], keyrings, after).harmful
    assert lookup(enforcer, objects[1], keyrings, after).harmful
    assert len(enforcer.snapshot.records) == 3


@pytest.mark.parametrize("mode", [RevocationMode.ROTATION, RevocationMode.TIMESTAMP])
def test_stale_snapshot_expires_on_the_client(enforcer, mode):
    objects = make_objects(2)
    _, keyrings = publish(enforcer, [make_curator("alpha", objects, mode, DAY)])
    assert lookup(enforcer, objects[0], keyrings, NOW + HOUR).harmful
    # no new epoch: the client clock alone revokes the entry
    assert not lookup(enforcer, objects[0], keyrings, NOW + 2 * DAY).harmful


def _direct_and_bucketed_agree(seed, members, outsiders, backend):
    rng = random.Random(seed)
    state = EnforcerState.create(policy_m=rng.choice([1, 2]))
    objects = make_objects(members, f"run{seed}")
    a = make_curator("a", [o for o in objects if rng.random() < 0.8])
    b = make_curator("b", [o for o in objects if rng.random() < 0.6])
    snapshot, keyrings = publish(state, [a, b])
    k = rng.randint(1, 6)
    bucketed = publish_bucketed(state, snapshot, k, NOW)
    db = verify_snapshot(snapshot, state.public_key)

    a_set, b_set = set(a.objects.values()), set(b.objects.values())
    for obj in objects + make_objects(outsiders, f"outside{seed}"):
        lookup_key, unblinded = detect(state, obj)
        direct = evaluate(obj, unblinded, db, keyrings, state.policy_m, NOW)
        expected = ((obj in a_set) + (obj in b_set)) >= state.policy_m
        assert direct.harmful == expected
        query, sk = client_pir_query(lookup_key, k, backend)
        answer = server_pir_answer(query, bucketed, backend)
        pir = client_pir_decode(answer, sk, lookup_key, unblinded, obj, keyrings, state.public_key, {},
                                state.policy_m, NOW, backend)
        assert pir.status == direct.status


def test_lookups_match_the_plain_set_oracle(backend):
    for seed in range(5):
        _direct_and_bucketed_agree(seed, 30, 10, backend)


@pytest.mark.slow
def test_lookups_match_the_plain_set_oracle_at_scale(backend):
    for seed in range(100):
        _direct_and_bucketed_agree(seed, 100, 100, backend)


def test_honest_epochs_audit_clean(enforcer):
    curator = make_curator("alpha", make_objects(5))
    _, keyrings = publish(enforcer, [curator])
    for epoch in range(1, 10):
        curator.add_object(f"epoch {epoch}".encode(), NOW + epoch * HOUR)
        publish_update(enforcer, {"alpha": curator.export_set()}, keyrings, NOW + epoch * HOUR)
    checkpoints = enforcer.log.store.fetch()
    assert len(checkpoints) == 10
    report = audit_checkpoints(checkpoints, enforcer.log.prove_consistency, enforcer.public_key)
    assert report.clean
    objects = {e.idx: curator.disclose_object(e.idx, "auditor") for e in curator.export_set()}
    assert privileged_audit(enforcer.snapshot, objects, enforcer.blind_B, keyrings, 1, NOW + 10 * HOUR).clean


def test_file_stores_survive_a_restart(tmp_path):
    curator = make_curator("alpha", make_objects(3), RevocationMode.TIMESTAMP, DAY)
    CuratorStore(tmp_path / "alpha").save(curator)
    restored = CuratorStore(tmp_path / "alpha").load()
    assert restored.export_set() == curator.export_set()
    assert restored.keyring == curator.keyring
    restored.add_object(b"one more", NOW + HOUR)
    assert restored.export_set()[-1].idx == 4
    save_keyring(tmp_path / "alpha.json", restored.keyring)

    gossip = FileCheckpointStore(tmp_path / "gossip.log")
    witness = Witness("w0", keygen())
    keypair = keygen()
    state = EnforcerState.create(keypair=keypair, log=TransparencyLog(keypair, store=gossip, witnesses=[witness]))
    keyrings = load_keyrings([tmp_path / "alpha.json"])
    first = publish_update(state, {"alpha": restored.export_set()}, keyrings, NOW + HOUR)
    store = EnforcerStore(tmp_path / "enforcer", gossip)
    store.save(state)
    WitnessStore(tmp_path / "w0").save(witness)

    witness = WitnessStore(tmp_path / "w0").load()
    reloaded = store.load([witness])
    assert reloaded.snapshot == first
    assert reloaded.blind_B == state.blind_B
    assert reloaded.log.tree.root() == state.log.tree.root()
    assert witness.last_seen == first.checkpoint

    second = publish_update(reloaded, {}, keyrings, NOW + 2 * HOUR)
    assert second.epoch == first.epoch + 1
    assert len(second.records) == 4
    assert [w for w, _ in second.checkpoint.witness_sigs] == ["w0"]
    assert gossip.fetch() == [first.checkpoint, second.checkpoint]


def test_bucketed_view_survives_a_restart(tmp_path, objects):
    state = EnforcerState.create()
    snapshot, _ = publish(state, [make_curator("alpha", objects)])
    bucketed = publish_bucketed(state, snapshot, 3, NOW)
    store = EnforcerStore(tmp_path)
    store.save(state)
    store.save_bucketed(bucketed)
    assert store.load_bucketed(snapshot) == bucketed

    other, _ = publish(state, [make_curator("alpha", objects[:3])], NOW + HOUR)
    with pytest.raises(EnforcerError, match="does not match"):
        store.load_bucketed(other)


def _oracle_votes(obj, curators) -> int:
    """plain set membership, then each curator's own signature checked directly"""
    digest = object_hash(obj)
    votes = 0
    for curator, entries in curators:
        entry = entries.get(digest)
        if entry and verify(curator.keyring.current_key, signed_payload(digest, entry.signed_at), entry.sig):
            votes += 1
    return votes


@pytest.mark.slow
def test_direct_lookups_match_the_oracle_at_full_scale(enforcer):
    rng = random.Random(7)
    objects = make_objects(10_000, "full")
    a = make_curator("a", [o for o in objects if rng.random() < 0.8])
    in_a = set(a.objects.values())
    b = make_curator("b", [o for o in objects if o not in in_a or rng.random() < 0.5])
    snapshot, keyrings = publish(enforcer, [a, b])
    db = verify_snapshot(snapshot, enforcer.public_key)
    assert len(snapshot.records) == 10_000
    curators = [(c, {e.obj_hash: e for e in c.export_set()}) for c in (a, b)]

    for obj in objects:
        _, unblinded = detect(enforcer, obj)
        votes = _oracle_votes(obj, curators)
        assert votes >= 1
        for policy_m in (1, 2):
            assert evaluate(obj, unblinded, db, keyrings, policy_m, NOW).harmful == (votes >= policy_m)

    for i in range(1_000_000):
        obj = f"outside-{i}".encode()
        _, unblinded = detect(enforcer, obj)
        assert not evaluate(obj, unblinded, db, keyrings, 1, NOW).harmful
