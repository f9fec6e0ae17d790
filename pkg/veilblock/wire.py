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
"""
Length-prefixed binary framing between clients, auditors and the enforcer.

Every frame is a 6-byte header (version: 1 byte, kind: 1 byte, body length: 4 bytes big-endian)
followed by the body.
"""
import asyncio
import logging
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import List
from typing_extensions import Self

from veilblock.protocol.crypto import GroupElement
from veilblock.protocol.definitions import *
from veilblock.protocol.pir.util import PirQuery, PirAnswer
from veilblock.protocol.records import DatabaseSnapshot
from veilblock.protocol.transparency import Checkpoint, ConsistencyProof

LOGGER = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HEADER = struct.Struct(">BBI")
HEADER_SIZE = HEADER.size
DEFAULT_MAX_FRAME = 64 * 1024 * 1024
PSI_BODY_LEN = ELEMENT_LEN


class MessageKind(IntEnum):
    PSI_REQ = 1
    PSI_RESP = 2
    SNAPSHOT_REQ = 3
    SNAPSHOT = 4
    PIR_REQ = 5
    PIR_RESP = 6
    CHECKPOINT_REQ = 7
    CHECKPOINTS = 8
    ERROR = 9
    CONSISTENCY_REQ = 10
    CONSISTENCY = 11


@dataclass(frozen=True, slots=True)
class WireMessage:
    kind: MessageKind
    body: bytes = b""
    version: int = PROTOCOL_VERSION

    def to_bytes(self) -> bytes:
        return HEADER.pack(self.version, self.kind, len(self.body)) + self.body

    @classmethod
    def error(cls, text: str) -> Self:
        return cls(MessageKind.ERROR, text.encode("utf-8"))


async def read_message(reader: asyncio.StreamReader, max_frame: int = DEFAULT_MAX_FRAME) -> WireMessage:
    """
    Read one frame

    :raises FrameTooLargeError: the announced body exceeds `max_frame`; the stream is unusable
    :raises MalformedFrameError: unknown version or kind; the body was consumed
    :raises asyncio.IncompleteReadError: the peer closed the connection
    """
    version, kind, length = HEADER.unpack(await reader.readexactly(HEADER_SIZE))
    if length > max_frame:
        raise FrameTooLargeError(f"frame of {length} bytes is too large (limit {max_frame})")
    body = await reader.readexactly(length)
    if version != PROTOCOL_VERSION:
        raise MalformedFrameError(f"unsupported protocol version {version}")
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise MalformedFrameError(f"unknown message kind {kind}")
    LOGGER.debug(f"read {kind.name} frame of {length} bytes")
    return WireMessage(kind, body, version)


async def write_message(writer: asyncio.StreamWriter, message: WireMessage):
    writer.write(message.to_bytes())
    await writer.drain()
    LOGGER.debug(f"wrote {message.kind.name} frame of {len(message.body)} bytes")


def encode_checkpoints(checkpoints: List[Checkpoint]) -> bytes:
    out = [len(checkpoints).to_bytes(4, "big")]
    for chkpt in checkpoints:
        data = chkpt.to_bytes()
        out.append(len(data).to_bytes(4, "big") + data)
    return b"".join(out)


def decode_checkpoints(body: bytes) -> List[Checkpoint]:
    reader = ByteReader(body)
    checkpoints = [Checkpoint.from_bytes(reader.take(reader.uint(4))) for _ in range(reader.uint(4))]
    reader.expect_end()
    return checkpoints


def encode_consistency_request(old_size: int, new_size: int) -> bytes:
    return old_size.to_bytes(8, "big") + new_size.to_bytes(8, "big")


def decode_consistency_request(body: bytes) -> tuple[int, int]:
    reader = ByteReader(body)
    old_size, new_size = reader.uint(8), reader.uint(8)
    reader.expect_end()
    return old_size, new_size


class EnforcerConnection:
    """Async client side of the enforcer endpoint"""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter,
                 max_frame: int = DEFAULT_MAX_FRAME):
        self.reader = reader
        self.writer = writer
        self.max_frame = max_frame

    @classmethod
    async def open(cls, host: str, port: int, max_frame: int = DEFAULT_MAX_FRAME) -> Self:
        reader, writer = await asyncio.open_connection(host, port)
        return cls(reader, writer, max_frame)

    async def close(self):
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except ConnectionError:
            pass

    async def __aenter__(self) -> Self:
        return self

    async def __aexit__(self, exc_type, exc, tb):
        await self.close()

    async def request(self, kind: MessageKind, body: bytes, expect: MessageKind) -> bytes:
        await write_message(self.writer, WireMessage(kind, body))
        response = await read_message(self.reader, self.max_frame)
        if response.kind == MessageKind.ERROR:
            raise ProtocolError(f"enforcer error: {response.body.decode('utf-8', errors='replace')}")
        if response.kind != expect:
            raise MalformedFrameError(f"expected {expect.name}, got {response.kind.name}")
        return response.body

    async def psi(self, request: GroupElement) -> GroupElement:
        body = await self.request(MessageKind.PSI_REQ, request.encoding, MessageKind.PSI_RESP)
        if len(body) != PSI_BODY_LEN:
            raise MalformedFrameError(f"psi response of {len(body)} bytes")
        return GroupElement.decode(body)

    async def snapshot(self) -> DatabaseSnapshot:
        return DatabaseSnapshot.from_bytes(await self.request(MessageKind.SNAPSHOT_REQ, b"", MessageKind.SNAPSHOT))

    async def pir(self, query: PirQuery) -> PirAnswer:
        return PirAnswer.from_bytes(await self.request(MessageKind.PIR_REQ, query.to_bytes(), MessageKind.PIR_RESP))

    async def checkpoints(self) -> List[Checkpoint]:
        return decode_checkpoints(await self.request(MessageKind.CHECKPOINT_REQ, b"", MessageKind.CHECKPOINTS))

    async def consistency(self, old_size: int, new_size: int) -> ConsistencyProof:
        body = await self.request(MessageKind.CONSISTENCY_REQ, encode_consistency_request(old_size, new_size),
                                  MessageKind.CONSISTENCY)
        reader = ByteReader(body)
        proof = ConsistencyProof.read(reader)
        reader.expect_end()
        return proof
