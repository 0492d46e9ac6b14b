"""
Identification sub-layer frames.

Layout: magic "DIDL" | version 0x01 | frame type | flow id | payload length
(4 bytes, big-endian) | payload. Payloads are canonical JSON except for the
negotiation preamble, which carries a packed extension block.
"""

import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Dict, Iterator, List, Optional, Tuple

from ..codec import canonical_json
from ..errors import BadMagic, MalformedPayload, ProtocolViolation, Truncated, UnsupportedVersion

MAGIC = b"DIDL"
VERSION = 0x01
HEADER = struct.Struct(">4sBBBI")
MAX_PAYLOAD = 1 << 20


class FrameType(IntEnum):
    PRESENTATION_REQUEST = 0x01
    PRESENTATION = 0x02
    RESULT = 0x03
    ERROR = 0x04
    NEGOTIATION_PREAMBLE = 0x05
    IDENTIFICATION_COMPLETE = 0x06


class Flow(IntEnum):
    CLIENT_VERIFIES_SERVER = 0
    SERVER_VERIFIES_CLIENT = 1


@dataclass(frozen=True)
class Frame:
    frame_type: int
    flow_id: int
    payload: bytes = b""

    @property
    def known_type(self) -> Optional[FrameType]:
        try:
            return FrameType(self.frame_type)
        except ValueError:
            return None

    def json(self) -> Dict[str, Any]:
        try:
            body = json.loads(self.payload) if self.payload else {}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedPayload(f"frame payload is not JSON: {exc}") from exc
        if not isinstance(body, dict):
            raise MalformedPayload("frame payload must be a JSON object")
        return body


def json_frame(frame_type: FrameType, flow_id: int, body: Dict[str, Any]) -> "Frame":
    return Frame(int(frame_type), int(flow_id), canonical_json(body))


def encode_frame(frame: Frame) -> bytes:
    if not 0 <= frame.frame_type <= 0xFF or not 0 <= frame.flow_id <= 0xFF:
        raise ValueError("frame type and flow id are single bytes")
    if len(frame.payload) > MAX_PAYLOAD:
        raise MalformedPayload(f"frame payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(MAGIC, VERSION, frame.frame_type, frame.flow_id, len(frame.payload)) + frame.payload


def peek_length(data: bytes) -> Optional[int]:
    """Total size of the frame at the start of `data`, or None if the header is incomplete."""
    if len(data) < HEADER.size:
        return None
    magic, version, _, _, length = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"frame version {version} is not supported", details={"version": version})
    if length > MAX_PAYLOAD:
        raise ProtocolViolation(
            f"frame declares {length} payload bytes, limit is {MAX_PAYLOAD}", details={"length": length}
        )
    return HEADER.size + length


def decode_frame(data: bytes) -> Tuple[Frame, int]:
    """Decode one frame from the start of `data`; return it and the bytes consumed."""
    if len(data) < HEADER.size:
        raise Truncated(f"frame header needs {HEADER.size} bytes, have {len(data)}")
    total = peek_length(data)
    if len(data) < total:
        raise Truncated(
            f"frame declares {total - HEADER.size} payload bytes, have {len(data) - HEADER.size}"
        )
    _, _, frame_type, flow_id, _ = HEADER.unpack_from(data)
    return Frame(frame_type, flow_id, bytes(data[HEADER.size:total])), total


class FrameReader:
    """Incremental decoder: feed bytes, take whole frames."""

    def __init__(self):
        self._buffer = bytearray()

    def feed(self, data: bytes) -> None:
        self._buffer.extend(data)

    @property
    def pending(self) -> int:
        return len(self._buffer)

    def frames(self) -> Iterator[Frame]:
        while True:
            total = peek_length(bytes(self._buffer[:HEADER.size]))
            if total is None:
                return
            if len(self._buffer) < total:
                return
            frame, used = decode_frame(bytes(self._buffer[:total]))
            del self._buffer[:used]
            yield frame


def decode_stream(data: bytes) -> Tuple[List[Frame], bytes]:
    """Split a byte stream into whole frames plus the trailing partial frame."""
    reader = FrameReader()
    reader.feed(data)
    frames = list(reader.frames())
    return frames, bytes(reader._buffer)
