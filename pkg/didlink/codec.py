"""Canonical JSON, base64url and shared pydantic field types."""

import base64
import json
import re
from datetime import datetime, timezone
from typing import Annotated, Any

from pydantic import BeforeValidator, PlainSerializer

_B64URL = re.compile(r"^[A-Za-z0-9_-]*\Z")


def canonical_json(obj: Any) -> bytes:
    """Sorted keys, no insignificant whitespace, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    if isinstance(text, bytes):
        text = text.decode("ascii")
    padding = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + padding)


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def format_utc(value: datetime) -> str:
    return value.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


def _ensure_utc(value: Any) -> Any:
    if isinstance(value, str):
        value = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if isinstance(value, datetime) and value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    return value


def _bytes_in(value: Any) -> Any:
    if isinstance(value, str):
        return b64url_decode(value)
    return value


UtcDatetime = Annotated[
    datetime,
    BeforeValidator(_ensure_utc),
    PlainSerializer(format_utc, return_type=str, when_used="json"),
]

# Raw bytes in Python, unpadded base64url in JSON.
B64Bytes = Annotated[
    bytes,
    BeforeValidator(_bytes_in),
    PlainSerializer(b64url_encode, return_type=str, when_used="json"),
]


def b64url_decode_strict(text: str) -> bytes:
    """Decode unpadded base64url, refusing any non-canonical spelling."""
    if not isinstance(text, str) or not _B64URL.match(text) or len(text) % 4 == 1:
        raise ValueError("not canonical base64url")
    data = b64url_decode(text)
    if b64url_encode(data) != text:
        raise ValueError("not canonical base64url")
    return data


def epoch_seconds(value: datetime) -> int:
    return int(value.timestamp())


def from_epoch_seconds(value: int) -> datetime:
    return datetime.fromtimestamp(value, tz=timezone.utc)
