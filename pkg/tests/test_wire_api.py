import asyncio

import pytest

from veilblock.api import EnforcerService
from veilblock.protocol.client import begin_query, complete_query, verify_snapshot
from veilblock.protocol.crypto import blind, hash_to_group, object_hash
from veilblock.protocol.definitions import *
from veilblock.protocol.enforcer import publish_bucketed
from veilblock.protocol.pir.buckets import client_pir_decode, client_pir_query
from veilblock.protocol.transparency import verify_consistency
from veilblock.wire import *

from conftest import HOUR, NOW, make_curator, publish


def serve(service: EnforcerService, session):
    """run `session(port)` against a freshly started service"""

    async def main():
        server = await service.start("127.0.0.1", 0)
        port = server.sockets[0].getsockname()[1]
        try:
            return await session(port)
        finally:
            server.close()
            await server.wait_closed()
            service.close()

    return asyncio.run(main())


async def raw_exchange(port, data: bytes) -> bytes:
    reader, writer = await asyncio.open_connection("127.0.0.1", port)
    writer.write(data)
    await writer.drain()
    try:
        return await reader.read(1 << 16)
    finally:
        writer.close()


def test_psi_round_trip(published, objects):
    state, snapshot, db, _ = published

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            request, query_state = begin_query(objects[0])
            return complete_query(query_state, await conn.psi(request))

    lookup_key, unblinded = serve(EnforcerService(state), session)
    assert lookup_key in db.lookup
    assert unblinded == blind(hash_to_group(object_hash(objects[0])), state.blind_B)


def test_malformed_psi_keeps_the_connection(published):
    state, _, _, _ = published

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            with pytest.raises(ProtocolError, match="32 bytes"):
                await conn.request(MessageKind.PSI_REQ, b"\x01" * 31, MessageKind.PSI_RESP)
            with pytest.raises(ProtocolError):
                await conn.request(MessageKind.PSI_REQ, b"\x01" + bytes(31), MessageKind.PSI_RESP)
            request, _ = begin_query(b"still here")
            return await conn.psi(request)

    assert serve(EnforcerService(state), session) is not None


def test_unknown_kind_is_answered_with_an_error(published):
    state, _, _, _ = published

    async def session(port):
        return await raw_exchange(port, HEADER.pack(PROTOCOL_VERSION, 200, 0))

    data = serve(EnforcerService(state), session)
    version, kind, length = HEADER.unpack(data[:HEADER_SIZE])
    assert kind == MessageKind.ERROR
    assert b"unknown message kind" in data[HEADER_SIZE:HEADER_SIZE + length]


def test_oversized_frame_closes_the_connection(published):
    state, _, _, _ = published

    async def session(port):
        return await raw_exchange(port, HEADER.pack(PROTOCOL_VERSION, MessageKind.PSI_REQ, 1 << 20))

    assert serve(EnforcerService(state, max_frame=1024), session) == b""


def test_response_kind_is_not_a_request(published):
    state, _, _, _ = published

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            with pytest.raises(ProtocolError, match="not a request"):
                await conn.request(MessageKind.PSI_RESP, b"", MessageKind.PSI_RESP)

    serve(EnforcerService(state), session)


def test_concurrent_clients(published, objects):
    state, _, db, _ = published

    async def one(port, obj):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            request, query_state = begin_query(obj)
            lookup_key, _ = complete_query(query_state, await conn.psi(request))
            return lookup_key

    async def session(port):
        return await asyncio.gather(*(one(port, objects[i % len(objects)]) for i in range(64)))

    keys = serve(EnforcerService(state, max_in_flight=8), session)
    assert len(keys) == 64
    assert all(k in db.lookup for k in keys)


def test_snapshot_and_log_requests(enforcer, objects):
    curator = make_curator("alpha", objects[:5])
    first, _ = publish(enforcer, [curator])
    second, _ = publish(enforcer, [make_curator("alpha", objects)], NOW + HOUR)

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            snapshot = await conn.snapshot()
            checkpoints = await conn.checkpoints()
            proof = await conn.consistency(first.checkpoint.size, second.checkpoint.size)
            return snapshot, checkpoints, proof

    snapshot, checkpoints, proof = serve(EnforcerService(enforcer), session)
    assert snapshot == second
    assert verify_snapshot(snapshot, enforcer.public_key).epoch == 2
    assert checkpoints == [first.checkpoint, second.checkpoint]
    assert verify_consistency(first.checkpoint, second.checkpoint, proof)


def test_nothing_published(enforcer):

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            with pytest.raises(ProtocolError, match="no database published"):
                await conn.snapshot()

    serve(EnforcerService(enforcer), session)


def test_bucketed_lookup_over_the_wire(enforcer, objects, backend):
    snapshot, keyrings = publish(enforcer, [make_curator("alpha", objects)])
    bucketed = publish_bucketed(enforcer, snapshot, 4, NOW)
    service = EnforcerService(enforcer, backend)
    service.publish(snapshot, bucketed)

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            request, query_state = begin_query(objects[7])
            lookup_key, unblinded = complete_query(query_state, await conn.psi(request))
            query, sk = client_pir_query(lookup_key, 4, backend)
            answer = await conn.pir(query)
            return client_pir_decode(answer, sk, lookup_key, unblinded, objects[7], keyrings, enforcer.public_key, {},
                                     1, NOW, backend)

    verdict = serve(service, session)
    assert verdict.harmful
    assert verdict.attesting_curators == ("alpha",)


def test_bucketed_lookup_disabled(published, backend):
    state, _, _, _ = published

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            query, _ = client_pir_query(bytes(32), 2, backend)
            with pytest.raises(ProtocolError, match="not enabled"):
                await conn.pir(query)

    serve(EnforcerService(state, backend), session)


def test_rate_limiter_refuses_lookups_only(published):
    state, snapshot, _, _ = published
    seen = []

    async def limiter(peer, message):
        seen.append(message.kind)
        return False

    async def session(port):
        async with await EnforcerConnection.open("127.0.0.1", port) as conn:
            request, _ = begin_query(b"x")
            with pytest.raises(ProtocolError, match="rate limited"):
                await conn.psi(request)
            return await conn.snapshot()

    assert serve(EnforcerService(state, rate_limiter=limiter), session) == snapshot
    assert seen == [MessageKind.PSI_REQ]


def test_checkpoint_wire_encoding(published):
    state, snapshot, _, _ = published
    checkpoints = state.log.store.fetch()
    assert decode_checkpoints(encode_checkpoints(checkpoints)) == checkpoints
    with pytest.raises(MalformedFrameError):
        decode_checkpoints(encode_checkpoints(checkpoints) + b"\x00")
