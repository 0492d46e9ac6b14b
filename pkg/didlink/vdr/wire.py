"""Length-prefixed (4-byte big-endian) JSON frames for the registry protocol."""

import asyncio
import json
import socket
import struct
from typing import Any, Dict

from ..codec import canonical_json
from ..errors import TransportError

HEADER = struct.Struct(">I")
MAX_FRAME_SIZE = 4 * 1024 * 1024


def encode_message(message: Dict[str, Any]) -> bytes:
    body = canonical_json(message)
    if len(body) > MAX_FRAME_SIZE:
        raise TransportError(f"frame of {len(body)} bytes exceeds {MAX_FRAME_SIZE}")
    return HEADER.pack(len(body)) + body


def _decode_body(body: bytes) -> Dict[str, Any]:
    try:
        message = json.loads(body)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TransportError(f"frame is not JSON: {exc}") from exc
    if not isinstance(message, dict):
        raise TransportError("frame must carry a JSON object")
    return message


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("connection closed mid-frame")
        buf.extend(chunk)
    return bytes(buf)


def recv_message(sock: socket.socket) -> Dict[str, Any]:
    (length,) = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if length > MAX_FRAME_SIZE:
        raise TransportError(f"frame of {length} bytes exceeds {MAX_FRAME_SIZE}")
    return _decode_body(_recv_exact(sock, length))


async def read_message(reader: asyncio.StreamReader) -> Dict[str, Any]:
    header = await reader.readexactly(HEADER.size)
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME_SIZE:
        raise TransportError(f"frame of {length} bytes exceeds {MAX_FRAME_SIZE}")
    return _decode_body(await reader.readexactly(length))
