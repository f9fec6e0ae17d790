import random
from dataclasses import replace

import pytest

from veilblock.protocol.client import evaluate, verify_snapshot
from veilblock.protocol.crypto import keygen
from veilblock.protocol.definitions import *
from veilblock.protocol.enforcer import EnforcerState, publish_bucketed
from veilblock.protocol.pir.backends import load_backend
from veilblock.protocol.pir.buckets import build_buckets, client_pir_decode, client_pir_query, decode_bucket, \
    server_pir_answer
from veilblock.protocol.pir.util import Bucket, PirAnswer, PirQuery, bucket_capacity, decode_slot, encode_slot, \
    max_blocklist_size, plaintext_slot_bytes, prefix_of, slot_width
from veilblock.protocol.records import BlindedRecord, sort_records
from veilblock.protocol.transparency import TransparencyLog

from conftest import NOW, detect, make_curator, make_objects, publish


def _records(count, seed=0, curators=("a",)):
    rng = random.Random(seed)
    return sort_records(BlindedRecord(rng.randbytes(32), tuple((c, rng.randbytes(64)) for c in curators))
                        for _ in range(count))


def test_capacity_arithmetic():
    assert plaintext_slot_bytes(4096) == 10240
    assert plaintext_slot_bytes(8192) == 20480
    assert slot_width(1) == 98
    assert bucket_capacity(10240, 98) == 104
    assert bucket_capacity() == 104
    assert bucket_capacity(plaintext_slot_bytes(8192)) == 208
    assert max_blocklist_size(8) == 256 * 104


def test_prefix_of():
    key = bytes([0b10110000]) + bytes(31)
    assert prefix_of(key, 1) == 1
    assert prefix_of(key, 4) == 0b1011
    assert prefix_of(key, 8) == 0b10110000


def test_slot_encoding():
    record = _records(1, curators=("a", "b"))[0]
    width = slot_width(2)
    encoded = encode_slot(record, ("a", "b"), width)
    assert len(encoded) == width
    assert decode_slot(encoded, ("a", "b")) == record
    assert decode_slot(encode_slot(None, ("a", "b"), width), ("a", "b")) is None
    with pytest.raises(PirError):
        encode_slot(record, ("a", "b"), slot_width(1))


def test_buckets_are_padded_and_committed():
    records = _records(200)
    db = build_buckets(records, 4, log=TransparencyLog(keygen()), now=NOW)
    assert len(db.buckets) == 16
    assert len({len(b.slots) for b in db.buckets}) == 1
    assert all(len(s) == db.slot_width for b in db.buckets for s in b.slots)
    assert db.coms == tuple(b.commitment() for b in db.buckets)
    assert db.checkpoint.size == 1
    for record in records:
        bucket = db.buckets[prefix_of(record.blinded_id, 4)]
        assert encode_slot(record, db.curators, db.slot_width) in bucket.slots


def test_empty_database_has_one_slot_buckets():
    db = build_buckets((), 2)
    assert db.bucket_size_S == 1
    assert len(db.buckets) == 4
    assert db.checkpoint is None


def test_commitment_budget():
    with pytest.raises(BucketBudgetError):
        build_buckets(_records(10), 10, max_response_bytes=1024 * 32 - 1)
    build_buckets(_records(10), 10, max_response_bytes=1024 * 32)
    with pytest.raises(PirError):
        build_buckets(_records(10), 0)


def test_one_hot_selection_returns_the_bucket(backend):
    db = build_buckets(_records(300), 5, log=TransparencyLog(keygen()), now=NOW)
    for alpha in range(32):
        key = bytes([alpha << 3]) + bytes(31)
        query, sk = client_pir_query(key, 5, backend)
        assert len(query.ciphertexts) == 32
        answer = server_pir_answer(query, db, backend)
        assert decode_bucket(answer, sk, backend) == db.buckets[alpha]


def test_two_hot_selection_fails_the_commitment(backend):
    db = build_buckets(_records(100), 3, log=TransparencyLog(keygen()), now=NOW)
    sk = backend.keygen()
    cts = tuple(backend.serialize(backend.enc(sk, 1 if j in (1, 2) else 0)) for j in range(8))
    answer = server_pir_answer(PirQuery(backend.name, 3, cts), db, backend)
    summed = decode_bucket(answer, sk, backend)
    assert summed.commitment() not in db.coms


def test_large_buckets_span_several_ciphertexts():
    backend = load_backend("plaintext-reference", {"ring_dimension": 64})
    db = build_buckets(_records(64), 1, log=TransparencyLog(keygen()), now=NOW)
    assert db.bucket_bytes > backend.plaintext_slot_bytes
    query, sk = client_pir_query(db.buckets[0].slots[0][:32], 1, backend)
    answer = server_pir_answer(query, db, backend)
    assert len(answer.ciphertexts) > 1
    assert decode_bucket(answer, sk, backend) == db.buckets[0]


def test_server_rejects_malformed_queries(backend):
    db = build_buckets(_records(10), 3, log=TransparencyLog(keygen()), now=NOW)
    query, _ = client_pir_query(bytes(32), 4, backend)
    with pytest.raises(MalformedQueryError):
        server_pir_answer(query, db, backend)
    query, _ = client_pir_query(bytes(32), 3, backend)
    with pytest.raises(MalformedQueryError):
        server_pir_answer(replace(query, backend="other"), db, backend)
    with pytest.raises(PirError):
        server_pir_answer(query, build_buckets(_records(10), 3), backend)


def test_query_and_answer_serialization(backend):
    db = build_buckets(_records(20), 2, log=TransparencyLog(keygen()), now=NOW)
    query, _ = client_pir_query(bytes(32), 2, backend)
    assert PirQuery.from_bytes(query.to_bytes()) == query
    answer = server_pir_answer(query, db, backend)
    parsed = PirAnswer.from_bytes(answer.to_bytes())
    assert parsed.coms == answer.coms
    assert parsed.checkpoint == answer.checkpoint
    assert parsed.ciphertexts == answer.ciphertexts
    # the fixed trailer carries 2^k commitments
    assert answer.trailer_bytes() > 4 * 32


def test_unknown_backend():
    with pytest.raises(PirError):
        load_backend("no-such-backend")
    with pytest.raises(PirError):
        load_backend("veilblock.protocol.pir.backends.Missing")


def test_reference_backend_is_flagged_not_private(backend):
    assert backend.private is False
    assert backend.name == "plaintext-reference"


def _space_efficient(state, obj, k, keyrings, backend, bucketed):
    lookup_key, unblinded = detect(state, obj)
    query, sk = client_pir_query(lookup_key, k, backend)
    answer = server_pir_answer(query, bucketed, backend)
    return client_pir_decode(answer, sk, lookup_key, unblinded, obj, keyrings, state.public_key, {}, state.policy_m,
                             NOW, backend)


@pytest.mark.parametrize("k", [1, 3, 6, 8])
def test_path_equivalence(enforcer, backend, k):
    members = make_objects(60)
    curators = [make_curator("a", members[:40]), make_curator("b", members[20:])]
    snapshot, keyrings = publish(enforcer, curators)
    bucketed = publish_bucketed(enforcer, snapshot, k, NOW)
    db = verify_snapshot(snapshot, enforcer.public_key)
    for obj in members[::3] + make_objects(10, "benign"):
        lookup_key, unblinded = detect(enforcer, obj)
        direct = evaluate(obj, unblinded, db, keyrings, 1, NOW)
        pir = _space_efficient(enforcer, obj, k, keyrings, backend, bucketed)
        assert (pir.status, pir.attesting_curators) == (direct.status, direct.attesting_curators)


def test_tampered_commitment_is_benign(enforcer, backend, objects):
    snapshot, keyrings = publish(enforcer, [make_curator("a", objects)])
    bucketed = publish_bucketed(enforcer, snapshot, 3, NOW)
    lookup_key, unblinded = detect(enforcer, objects[0])
    query, sk = client_pir_query(lookup_key, 3, backend)
    answer = server_pir_answer(query, bucketed, backend)
    args = (sk, lookup_key, unblinded, objects[0], keyrings, enforcer.public_key, {}, 1, NOW, backend)
    assert client_pir_decode(answer, *args).harmful

    alpha = prefix_of(lookup_key, 3)
    coms = list(answer.coms)
    coms[alpha] = bytes(32)
    assert not client_pir_decode(replace(answer, coms=tuple(coms)), *args).harmful

    # a consistent set of commitments that was never logged
    other = build_buckets(snapshot.records[1:], 3)
    forged = replace(answer, coms=other.coms)
    assert not client_pir_decode(forged, *args).harmful


def test_swapped_bucket_is_benign(enforcer, backend, objects):
    snapshot, keyrings = publish(enforcer, [make_curator("a", objects)])
    bucketed = publish_bucketed(enforcer, snapshot, 2, NOW)
    lookup_key, unblinded = detect(enforcer, objects[0])
    alpha = prefix_of(lookup_key, 2)
    # the server answers with a different bucket than the one selected
    wrong = bytes([((alpha + 1) % 4) << 6]) + bytes(31)
    query, sk = client_pir_query(wrong, 2, backend)
    answer = server_pir_answer(query, bucketed, backend)
    verdict = client_pir_decode(answer, sk, lookup_key, unblinded, objects[0], keyrings, enforcer.public_key, {}, 1,
                                NOW, backend)
    assert not verdict.harmful


def test_bucket_from_bytes_checks_width():
    with pytest.raises(MalformedFrameError):
        Bucket.from_bytes(bytes(99), 98)


@pytest.mark.slow
def test_path_equivalence_at_scale(backend):
    state = EnforcerState.create()
    members = make_objects(10_000, "scale")
    snapshot, keyrings = publish(state, [make_curator("a", members)])
    bucketed = publish_bucketed(state, snapshot, 8, NOW)
    db = verify_snapshot(snapshot, state.public_key)
    rng = random.Random(3)
    sample = rng.sample(members, 200) + make_objects(200, "outside")
    for obj in sample:
        _, unblinded = detect(state, obj)
        direct = evaluate(obj, unblinded, db, keyrings, 1, NOW)
        assert _space_efficient(state, obj, 8, keyrings, backend, bucketed).status == direct.status
