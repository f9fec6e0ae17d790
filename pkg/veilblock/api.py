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
import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Awaitable, Callable, Dict

from veilblock.protocol.crypto import GroupElement
from veilblock.protocol.definitions import *
from veilblock.protocol.enforcer import EnforcerState, respond_psi
from veilblock.protocol.pir.backends import FheBackend
from veilblock.protocol.pir.buckets import server_pir_answer
from veilblock.protocol.pir.util import BucketedDB, PirQuery
from veilblock.protocol.records import DatabaseSnapshot
from veilblock.protocol.transparency import ConsistencyProof
from veilblock.wire import *

LOGGER = logging.getLogger(__name__)

# pre-handler deciding whether a peer may run a lookup; returns False to refuse
RateLimiter: TypeAlias = Callable[[str, WireMessage], Awaitable[bool]]
Handler: TypeAlias = Callable[["EnforcerService", str, WireMessage], Awaitable[WireMessage]]

HANDLERS: Dict[MessageKind, Handler] = {}


async def allow_all(peer: str, message: WireMessage) -> bool:
    return True


def handles(kind: MessageKind, limited: bool = False):
    """
    Register a coroutine as the handler for one message kind.

    :param kind: request kind
    :param limited: run the rate limiter before the handler

    :returns: decorator
    """

    def decorator(func: Handler) -> Handler:
        async def inner(service: "EnforcerService", peer: str, message: WireMessage) -> WireMessage:
            if limited and not await service.rate_limiter(peer, message):
                return WireMessage.error("rate limited")
            return await func(service, peer, message)

        HANDLERS[kind] = inner
        return inner

    return decorator


@dataclass(frozen=True, slots=True)
class Published:
    """Everything served for one epoch; replaced as a whole"""
    snapshot: DatabaseSnapshot
    snapshot_bytes: bytes
    bucketed: BucketedDB | None = None


class EnforcerService:

    def __init__(self, state: EnforcerState, backend: FheBackend = None, max_frame: int = DEFAULT_MAX_FRAME,
                 workers: int = 4, max_in_flight: int = 256, rate_limiter: RateLimiter = allow_all):
        self.state = state
        self.backend = backend
        self.max_frame = max_frame
        self.rate_limiter = rate_limiter
        self._executor = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="veilblock")
        self._in_flight = asyncio.Semaphore(max_in_flight)
        self._published: Published | None = None
        if state.snapshot is not None:
            self.publish(state.snapshot)

    def publish(self, snapshot: DatabaseSnapshot, bucketed: BucketedDB = None):
        self._published = Published(snapshot, snapshot.to_bytes(), bucketed)
        LOGGER.info(f"serving epoch {snapshot.epoch}" + (" with bucketed view" if bucketed else ""))

    @property
    def published(self) -> Published | None:
        return self._published

    async def dispatch(self, peer: str, message: WireMessage) -> WireMessage:
        handler = HANDLERS.get(message.kind)
        if handler is None:
            return WireMessage.error(f"{message.kind.name} is not a request")
        async with self._in_flight:
            try:
                return await handler(self, peer, message)
            except VeilblockError as ex:
                LOGGER.debug(f"{message.kind.name} from {peer} failed: {ex.message}")
                return WireMessage.error(ex.user_msg)
            except Exception as ex:
                LOGGER.exception(f"unexpected failure handling {message.kind.name}: {ex}")
                return WireMessage.error("internal error")

    async def handle_connection(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = str(writer.get_extra_info("peername"))
        LOGGER.debug(f"connection from {peer}")
        try:
            while True:
                try:
                    message = await read_message(reader, self.max_frame)
                except asyncio.IncompleteReadError:
                    break
                except FrameTooLargeError as ex:
                    LOGGER.warning(f"closing connection from {peer}: {ex.message}")
                    break
                except MalformedFrameError as ex:
                    await write_message(writer, WireMessage.error(ex.message))
                    continue
                await write_message(writer, await self.dispatch(peer, message))
        except ConnectionError as ex:
            LOGGER.debug(f"connection from {peer} lost: {ex}")
        finally:
            writer.close()

    async def start(self, host: str, port: int) -> asyncio.Server:
        server = await asyncio.start_server(self.handle_connection, host, port)
        LOGGER.info(f"enforcer listening on {', '.join(str(s.getsockname()) for s in server.sockets)}")
        return server

    def close(self):
        self._executor.shutdown(wait=False)

    async def run_blocking(self, func, *args):
        return await asyncio.get_running_loop().run_in_executor(self._executor, func, *args)


def _require_published(service: EnforcerService) -> Published:
    if service.published is None:
        raise EnforcerError("no database published yet")
    return service.published


@handles(MessageKind.PSI_REQ, limited=True)
async def handle_psi(service: EnforcerService, peer: str, message: WireMessage) -> WireMessage:
    if len(message.body) != PSI_BODY_LEN:
        return WireMessage.error(f"psi request must be {PSI_BODY_LEN} bytes, got {len(message.body)}")
    response = respond_psi(service.state, GroupElement.decode(message.body))
    return WireMessage(MessageKind.PSI_RESP, response.encoding)


@handles(MessageKind.SNAPSHOT_REQ)
async def handle_snapshot(service: EnforcerService, peer: str, message: WireMessage) -> WireMessage:
    return WireMessage(MessageKind.SNAPSHOT, _require_published(service).snapshot_bytes)


@handles(MessageKind.PIR_REQ, limited=True)
async def handle_pir(service: EnforcerService, peer: str, message: WireMessage) -> WireMessage:
    published = _require_published(service)
    if published.bucketed is None or service.backend is None:
        raise PirError("bucketed lookups are not enabled")
    query = PirQuery.from_bytes(message.body)
    answer = await service.run_blocking(server_pir_answer, query, published.bucketed, service.backend)
    return WireMessage(MessageKind.PIR_RESP, answer.to_bytes())


@handles(MessageKind.CHECKPOINT_REQ)
async def handle_checkpoints(service: EnforcerService, peer: str, message: WireMessage) -> WireMessage:
    checkpoints = await service.run_blocking(service.state.log.store.fetch)
    return WireMessage(MessageKind.CHECKPOINTS, encode_checkpoints(checkpoints))


@handles(MessageKind.CONSISTENCY_REQ)
async def handle_consistency(service: EnforcerService, peer: str, message: WireMessage) -> WireMessage:
    old_size, new_size = decode_consistency_request(message.body)
    proof: ConsistencyProof = service.state.log.prove_consistency(old_size, new_size)
    return WireMessage(MessageKind.CONSISTENCY, proof.to_bytes())
