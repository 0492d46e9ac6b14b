"""
Decentralized identifiers: parsing, documents, resolution and caching.

Built-in methods:
    key     did:key:z<base58btc(0xed01 || ed25519 public key)>
    peer    did:peer:0z<...>, the same derivation as did:key
    vdrsim  documents anchored on the simulated registry (see didlink.vdr)
"""

import hashlib
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FuturesTimeout
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Dict, FrozenSet, List, Optional, Protocol, Tuple, Union

import base58
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec
from nacl.bindings import crypto_core_ed25519_is_valid_point
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PlainSerializer,
    PlainValidator,
    field_serializer,
    model_validator,
)
from pydantic.json_schema import WithJsonSchema

from .codec import UtcDatetime, canonical_json, utc_now
from .errors import (
    InvalidKey,
    MalformedDid,
    MalformedDocument,
    RegistryUnavailable,
    UnsupportedMethod,
    cache_miss_error,
)
from .monitoring import Stopwatch, get_logger

logger = get_logger(__name__)

_DID_PATTERN = re.compile(r"^did:([a-z0-9]+):([A-Za-z0-9._:%\-]+)$")

# Document timestamp for self-describing methods; resolution is deterministic.
KEY_DOCUMENT_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

DEFAULT_CACHE_MAX_AGE = 300.0
DEFAULT_HANDLER_TIMEOUT = 5.0


@dataclass(frozen=True)
class Did:
    method: str
    subject_id: str

    @property
    def full(self) -> str:
        return f"did:{self.method}:{self.subject_id}"

    def __str__(self) -> str:
        return self.full


def parse_did(text: Union[str, "Did"]) -> Did:
    """Parse `did:<method>:<subject_id>`."""
    if isinstance(text, Did):
        return text
    if not isinstance(text, str):
        raise MalformedDid(f"expected a DID string, got {type(text).__name__}")
    match = _DID_PATTERN.match(text)
    if not match:
        raise MalformedDid(f"not a DID: {text[:80]!r}", details={"input": text[:200]})
    return Did(method=match.group(1), subject_id=match.group(2))


def _coerce_did(value: Any) -> Did:
    try:
        return parse_did(value)
    except MalformedDid as exc:
        raise ValueError(exc.message) from exc


DidField = Annotated[
    Did,
    PlainValidator(_coerce_did),
    PlainSerializer(str, return_type=str),
    WithJsonSchema({"type": "string", "pattern": _DID_PATTERN.pattern}),
]


class KeyType(str, Enum):
    ED25519 = "Ed25519"
    ECDSA_P256 = "EcdsaP256"
    X25519 = "X25519"


class Purpose(str, Enum):
    AUTHENTICATION = "authentication"
    ASSERTION = "assertion"
    KEY_AGREEMENT = "key_agreement"


# Verification method type names used in document JSON.
VM_TYPE_NAMES = {
    KeyType.ED25519: "Ed25519VerificationKey2020",
    KeyType.ECDSA_P256: "EcdsaSecp256r1VerificationKey2019",
    KeyType.X25519: "X25519KeyAgreementKey2020",
}
_VM_TYPES_BY_NAME = {name: key_type for key_type, name in VM_TYPE_NAMES.items()}

# Multicodec prefixes (varint encoded).
MULTICODEC_PREFIXES = {
    KeyType.ED25519: b"\xed\x01",
    KeyType.ECDSA_P256: b"\x80\x24",
    KeyType.X25519: b"\xec\x01",
}


def normalize_public_key(key_type: KeyType, public_key: bytes) -> bytes:
    """Validate key bytes and return the canonical form (compressed for P-256)."""
    key_type = KeyType(key_type)
    if not isinstance(public_key, (bytes, bytearray)):
        raise InvalidKey("public key must be bytes")
    public_key = bytes(public_key)
    if key_type is KeyType.ED25519:
        if len(public_key) != 32:
            raise InvalidKey(f"Ed25519 public keys are 32 bytes, got {len(public_key)}")
        if not crypto_core_ed25519_is_valid_point(public_key):
            raise InvalidKey("Ed25519 public key is not a valid prime-order point")
        return public_key
    if key_type is KeyType.ECDSA_P256:
        if len(public_key) not in (33, 65):
            raise InvalidKey(f"P-256 public keys are 33 or 65 bytes, got {len(public_key)}")
        try:
            point = ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), public_key)
        except ValueError as exc:
            raise InvalidKey(f"invalid P-256 point: {exc}") from exc
        return point.public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
        )
    if len(public_key) != 32:
        raise InvalidKey(f"X25519 public keys are 32 bytes, got {len(public_key)}")
    return public_key


def encode_multibase(key_type: KeyType, public_key: bytes) -> str:
    prefix = MULTICODEC_PREFIXES[KeyType(key_type)]
    return "z" + base58.b58encode(prefix + public_key).decode("ascii")


def decode_multibase(text: str) -> Tuple[KeyType, bytes]:
    if not text or text[0] != "z":
        raise InvalidKey("only base58btc multibase ('z') is supported")
    try:
        raw = base58.b58decode(text[1:])
    except ValueError as exc:
        raise InvalidKey(f"invalid base58: {exc}") from exc
    for key_type, prefix in MULTICODEC_PREFIXES.items():
        if raw.startswith(prefix):
            return key_type, normalize_public_key(key_type, raw[len(prefix):])
    raise InvalidKey("unknown multicodec prefix")


class VerificationMethod(BaseModel):
    """A public key listed in a DID document."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: str
    key_type: KeyType = Field(alias="type")
    public_key: bytes = Field(alias="publicKeyMultibase")
    purpose: FrozenSet[Purpose]

    @model_validator(mode="before")
    @classmethod
    def _decode_key(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        type_value = data.pop("type", None) or data.pop("key_type", None)
        if isinstance(type_value, str) and type_value in _VM_TYPES_BY_NAME:
            type_value = _VM_TYPES_BY_NAME[type_value]
        try:
            key_type = KeyType(type_value)
        except ValueError as exc:
            raise ValueError(f"unknown verification method type {type_value!r}") from exc
        raw = data.pop("publicKeyMultibase", None)
        if raw is None:
            raw = data.pop("public_key", None)
        try:
            if isinstance(raw, str):
                decoded_type, raw = decode_multibase(raw)
                if decoded_type is not key_type:
                    raise ValueError("multicodec prefix does not match verification method type")
            else:
                raw = normalize_public_key(key_type, raw)
        except InvalidKey as exc:
            raise ValueError(exc.message) from exc
        data["key_type"] = key_type
        data["public_key"] = raw
        return data

    @model_validator(mode="after")
    def _check(self) -> "VerificationMethod":
        if not self.id or "#" in self.id or any(ch.isspace() for ch in self.id):
            raise ValueError(f"invalid verification method id {self.id!r}")
        if not self.purpose:
            raise ValueError("verification method needs at least one purpose")
        signing = {Purpose.AUTHENTICATION, Purpose.ASSERTION}
        if self.key_type is KeyType.X25519 and self.purpose & signing:
            raise ValueError("X25519 keys are for key agreement only")
        if self.key_type is not KeyType.X25519 and Purpose.KEY_AGREEMENT in self.purpose:
            raise ValueError("signature keys cannot be used for key agreement")
        return self

    @field_serializer("key_type", when_used="json")
    def _ser_type(self, value: KeyType) -> str:
        return VM_TYPE_NAMES[value]

    @field_serializer("public_key", when_used="json")
    def _ser_key(self, value: bytes) -> str:
        return encode_multibase(self.key_type, value)

    @field_serializer("purpose")
    def _ser_purpose(self, value: FrozenSet[Purpose]) -> List[str]:
        return sorted(p.value for p in value)


class DidDocument(BaseModel):
    """Verification material a DID resolves to."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    id: DidField
    verification_methods: List[VerificationMethod] = Field(alias="verificationMethod")
    version: int = Field(ge=1)
    updated_at: UtcDatetime = Field(alias="updatedAt")

    @model_validator(mode="after")
    def _check(self) -> "DidDocument":
        if not self.verification_methods:
            raise ValueError("document lists no verification methods")
        ids = [vm.id for vm in self.verification_methods]
        if len(ids) != len(set(ids)):
            raise ValueError("verification method ids must be unique")
        return self

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "DidDocument":
        try:
            return cls.model_validate(data)
        except ValueError as exc:
            raise MalformedDocument(f"invalid DID document: {exc}") from exc

    @classmethod
    def from_json_bytes(cls, data: Union[bytes, str]) -> "DidDocument":
        try:
            return cls.model_validate_json(data)
        except ValueError as exc:
            raise MalformedDocument(f"invalid DID document: {exc}") from exc

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)

    def canonical_bytes(self) -> bytes:
        return canonical_json(self.to_json_dict())

    def method(self, fragment: str) -> Optional[VerificationMethod]:
        fragment = fragment.split("#")[-1]
        for vm in self.verification_methods:
            if vm.id == fragment:
                return vm
        return None

    def methods_for(self, purpose: Purpose) -> List[VerificationMethod]:
        return [vm for vm in self.verification_methods if purpose in vm.purpose]

    def method_ref(self, fragment: str) -> str:
        return f"{self.id.full}#{fragment}"

    def next_version(self, verification_methods: List[VerificationMethod]) -> "DidDocument":
        """Successor document for a registry update."""
        return DidDocument(
            id=self.id,
            verification_methods=verification_methods,
            version=self.version + 1,
            updated_at=utc_now(),
        )


def document_to_file(document: DidDocument, path: Union[str, Path]) -> None:
    Path(path).write_bytes(document.canonical_bytes())


def document_from_file(path: Union[str, Path]) -> DidDocument:
    return DidDocument.from_json_bytes(Path(path).read_bytes())


def _key_document(did: Did, public_key: bytes) -> DidDocument:
    fragment = encode_multibase(KeyType.ED25519, public_key)
    return DidDocument(
        id=did,
        verification_methods=[
            VerificationMethod(
                id=fragment,
                key_type=KeyType.ED25519,
                public_key=public_key,
                purpose=frozenset({Purpose.AUTHENTICATION, Purpose.ASSERTION}),
            )
        ],
        version=1,
        updated_at=KEY_DOCUMENT_EPOCH,
    )


def make_key_did(public_key: bytes) -> Tuple[Did, DidDocument]:
    """did:key for an Ed25519 public key, with its derived document."""
    public_key = normalize_public_key(KeyType.ED25519, public_key)
    did = Did("key", encode_multibase(KeyType.ED25519, public_key))
    return did, _key_document(did, public_key)


def make_peer_did(public_key: bytes) -> Tuple[Did, DidDocument]:
    """did:peer (numalgo 0) for an Ed25519 public key."""
    public_key = normalize_public_key(KeyType.ED25519, public_key)
    did = Did("peer", "0" + encode_multibase(KeyType.ED25519, public_key))
    return did, _key_document(did, public_key)


def vdrsim_subject_id(public_key: bytes) -> str:
    return base58.b58encode(hashlib.sha256(public_key).digest()[:16]).decode("ascii")


def new_vdrsim_document(verification_methods: List[VerificationMethod]) -> DidDocument:
    """Genesis (version 1) document for a did:vdrsim identifier."""
    auth = [vm for vm in verification_methods if Purpose.AUTHENTICATION in vm.purpose]
    if not auth:
        raise MalformedDocument("a vdrsim document needs an authentication key")
    did = Did("vdrsim", vdrsim_subject_id(auth[0].public_key))
    return DidDocument(
        id=did, verification_methods=verification_methods, version=1, updated_at=utc_now()
    )


class MethodHandler(Protocol):
    """Resolves DIDs of one method."""

    def resolve(self, did: Did) -> DidDocument: ...


class KeyMethodHandler:
    """Derives documents for did:key and did:peer locally."""

    local = True

    def resolve(self, did: Did) -> DidDocument:
        subject = did.subject_id
        if did.method == "peer":
            if not subject.startswith("0"):
                raise MalformedDid(f"unsupported did:peer numalgo in {did.full}")
            subject = subject[1:]
        key_type, public_key = decode_multibase(subject)
        if key_type is not KeyType.ED25519:
            raise InvalidKey(f"{did.full} does not encode an Ed25519 key")
        return _key_document(did, public_key)


class ResolutionSource(str, Enum):
    CACHE = "cache"
    METHOD_HANDLER = "method_handler"


@dataclass(frozen=True)
class ResolutionResult:
    document: DidDocument
    source: ResolutionSource
    resolved_in: float
    fresh_until: datetime


class CacheMode(str, Enum):
    PREFER_CACHE = "prefer_cache"
    FORCE_RESOLVE = "force_resolve"
    CACHE_ONLY = "cache_only"


class CachePolicy(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_age: float = Field(default=DEFAULT_CACHE_MAX_AGE, ge=0)
    mode: CacheMode = CacheMode.PREFER_CACHE


@dataclass(frozen=True)
class _CacheEntry:
    document: DidDocument
    stored_at: datetime
    fresh_until: datetime
    pinned: bool = False


class DidCache:
    """Thread-safe DID document cache; entries are replaced atomically."""

    def __init__(self):
        self._entries: Dict[str, _CacheEntry] = {}
        self._lock = threading.Lock()

    def get(self, did: Did, now: datetime, max_age: float) -> Optional[_CacheEntry]:
        with self._lock:
            entry = self._entries.get(did.full)
        if entry is None:
            return None
        if now >= entry.fresh_until:
            return None
        # Seeded entries carry their own freshness; max_age bounds resolved ones.
        if not entry.pinned and (now - entry.stored_at).total_seconds() >= max_age:
            return None
        return entry

    def put(
        self,
        document: DidDocument,
        fresh_until: datetime,
        now: Optional[datetime] = None,
        pinned: bool = False,
    ) -> None:
        entry = _CacheEntry(
            document=document, stored_at=now or utc_now(), fresh_until=fresh_until, pinned=pinned
        )
        with self._lock:
            self._entries[document.id.full] = entry

    def evict(self, did: Did) -> None:
        with self._lock:
            self._entries.pop(did.full, None)

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()

    def __contains__(self, did: object) -> bool:
        key = did.full if isinstance(did, Did) else str(did)
        with self._lock:
            return key in self._entries

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


class Resolver:
    """Resolves DIDs through registered method handlers with a shared cache."""

    def __init__(
        self,
        handlers: Optional[Dict[str, MethodHandler]] = None,
        cache: Optional[DidCache] = None,
        timeout: float = DEFAULT_HANDLER_TIMEOUT,
        default_policy: Optional[CachePolicy] = None,
    ):
        self._handlers: Dict[str, MethodHandler] = dict(handlers or {})
        self.cache = cache or DidCache()
        self.timeout = timeout
        self.default_policy = default_policy or CachePolicy()
        self._counter_lock = threading.Lock()
        self._executor: Optional[ThreadPoolExecutor] = None
        self.handler_calls = 0
        self.cache_hits = 0
        self.cache_misses = 0
        self.force_resolves = 0

    def register(self, method: str, handler: MethodHandler) -> None:
        self._handlers[method] = handler

    @property
    def methods(self) -> List[str]:
        return sorted(self._handlers)

    def seed_cache(self, document: DidDocument, fresh_until: datetime) -> None:
        self.cache.put(document, fresh_until, pinned=True)

    def _count(self, name: str) -> None:
        with self._counter_lock:
            setattr(self, name, getattr(self, name) + 1)

    def _call_handler(self, handler: MethodHandler, did: Did) -> DidDocument:
        self._count("handler_calls")
        if getattr(handler, "local", False):
            return handler.resolve(did)
        if self._executor is None:
            with self._counter_lock:
                if self._executor is None:
                    self._executor = ThreadPoolExecutor(
                        max_workers=8, thread_name_prefix="did-resolve"
                    )
        future = self._executor.submit(handler.resolve, did)
        try:
            return future.result(timeout=self.timeout)
        except FuturesTimeout as exc:
            raise RegistryUnavailable(
                f"resolving {did.full} timed out after {self.timeout}s",
                details={"did": did.full},
            ) from exc

    def resolve(
        self,
        did: Union[Did, str],
        policy: Optional[CachePolicy] = None,
        now: Optional[datetime] = None,
    ) -> ResolutionResult:
        did = parse_did(did)
        policy = policy or self.default_policy
        watch = Stopwatch()
        handler = self._handlers.get(did.method)
        if handler is None:
            raise UnsupportedMethod(
                f"no handler for did:{did.method}", details={"method": did.method}
            )
        now = now or utc_now()

        if policy.mode is not CacheMode.FORCE_RESOLVE:
            entry = self.cache.get(did, now, policy.max_age)
            if entry is not None:
                self._count("cache_hits")
                return ResolutionResult(
                    document=entry.document,
                    source=ResolutionSource.CACHE,
                    resolved_in=watch.stop(),
                    fresh_until=entry.fresh_until,
                )
            if policy.mode is CacheMode.CACHE_ONLY:
                raise cache_miss_error(did.full)
            self._count("cache_misses")
        else:
            self._count("force_resolves")

        document = self._call_handler(handler, did)
        if document.id != did:
            raise MalformedDocument(
                f"handler returned document for {document.id.full}, expected {did.full}"
            )
        fresh_until = now + timedelta(seconds=policy.max_age)
        self.cache.put(document, fresh_until, now)
        elapsed = watch.stop()
        logger.debug(
            "DID resolved", did=did.full, source="method_handler", resolved_in_ms=round(elapsed, 3)
        )
        return ResolutionResult(
            document=document,
            source=ResolutionSource.METHOD_HANDLER,
            resolved_in=elapsed,
            fresh_until=fresh_until,
        )

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=False)
            self._executor = None


def default_resolver(vdr_client=None, **kwargs) -> Resolver:
    """Resolver with the key/peer handlers and, when given, the vdrsim handler."""
    key_handler = KeyMethodHandler()
    resolver = Resolver(handlers={"key": key_handler, "peer": key_handler}, **kwargs)
    if vdr_client is not None:
        from .vdr.client import VdrMethodHandler

        resolver.register("vdrsim", VdrMethodHandler(vdr_client))
    return resolver

