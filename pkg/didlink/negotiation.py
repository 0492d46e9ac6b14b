"""
DID Link hello extensions, server-side negotiation and the scenario matrix.

Extension payloads (bit-exact):
    SNI  0x0000  RFC 6066 ServerNameList with one host_name (a DID or hostname)
    CNI  0xFF00  2-byte len || utf8 DID
    CMI  0xFF01  2-byte count || (1-byte len || utf8 method)*
    SMI  0xFF02  same list form as CMI
    CPP  0xFF03  same list form, presentation protocol ids
    SPA  0xFF04  same list form, exactly one protocol id
"""

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, model_validator

from .cert_kit import CertBundle, CertKind
from .did_core import Did, DidField, parse_did
from .errors import MalformedDid, MalformedPayload, NoMatchingRow, OversizePayload

PROTOCOL_DIF_PE_2 = "dif-pe-2"
MAX_PAYLOAD = 0xFFFF


class Extension(str, Enum):
    SNI = "SNI"
    CNI = "CNI"
    CMI = "CMI"
    SMI = "SMI"
    CPP = "CPP"
    SPA = "SPA"


EXTENSION_CODES: Dict[Extension, int] = {
    Extension.SNI: 0x0000,
    Extension.CNI: 0xFF00,
    Extension.CMI: 0xFF01,
    Extension.SMI: 0xFF02,
    Extension.CPP: 0xFF03,
    Extension.SPA: 0xFF04,
}
_EXTENSIONS_BY_CODE = {code: ext for ext, code in EXTENSION_CODES.items()}

EncodedExtensions = List[Tuple[int, bytes]]


class ClientAuthMode(str, Enum):
    NONE = "none"
    CERT = "cert"
    DID = "did"
    DID_VC = "did_vc"
    DERIVED = "derived"


class ServerAuthMode(str, Enum):
    CERT_DEFAULT = "cert_default"
    CERT = "cert"
    DID_DEFAULT = "did_default"
    DID = "did"
    DID_VC_DEFAULT = "did_vc_default"
    DID_VC = "did_vc"
    DERIVED_DEFAULT = "derived_default"
    DERIVED = "derived"


DID_CLIENT_MODES = frozenset({ClientAuthMode.DID, ClientAuthMode.DID_VC})
VC_SERVER_MODES = frozenset({ServerAuthMode.DID_VC, ServerAuthMode.DID_VC_DEFAULT})


class NegotiationOffer(BaseModel):
    """What the client proposes."""

    model_config = ConfigDict(frozen=True)

    target_server_did: Optional[DidField] = None
    target_server_name: Optional[str] = None
    client_did: Optional[DidField] = None
    client_did_methods: Tuple[str, ...] = ()
    presentation_protocols: Tuple[str, ...] = ()
    client_auth_mode: ClientAuthMode = ClientAuthMode.NONE

    @model_validator(mode="after")
    def _check(self) -> "NegotiationOffer":
        if self.target_server_did is not None and self.target_server_name is not None:
            raise ValueError("SNI carries either a DID or a hostname, not both")
        if self.target_server_name is not None and self.target_server_name.startswith("did:"):
            raise ValueError("use target_server_did for DIDs")
        if self.client_auth_mode in DID_CLIENT_MODES and not (
            self.client_did_methods or self.client_did is not None
        ):
            raise ValueError("DID client authentication needs CMI or CNI")
        return self

    @property
    def server_name_indication(self) -> Optional[str]:
        if self.target_server_did is not None:
            return self.target_server_did.full
        return self.target_server_name

    @property
    def requests_did_auth(self) -> bool:
        return self.client_auth_mode in DID_CLIENT_MODES

    @property
    def client_presents_credentials(self) -> bool:
        return self.client_auth_mode is ClientAuthMode.DID_VC and bool(self.presentation_protocols)


class NegotiationAgreement(BaseModel):
    """What the server decided."""

    model_config = ConfigDict(frozen=True)

    server_did_methods: Tuple[str, ...] = ()
    agreed_presentation_protocol: Optional[str] = None
    server_auth_mode: ServerAuthMode
    identification_enabled: bool = False

    @model_validator(mode="after")
    def _check(self) -> "NegotiationAgreement":
        if self.identification_enabled != (self.agreed_presentation_protocol is not None):
            raise ValueError("identification is enabled iff a presentation protocol was agreed")
        return self

    @property
    def server_presents_credentials(self) -> bool:
        return self.server_auth_mode in VC_SERVER_MODES


class RejectionReason(str, Enum):
    NO_COMMON_METHOD = "no_common_method"
    NO_COMMON_PRESENTATION_PROTOCOL = "no_common_presentation_protocol"
    UNKNOWN_SERVER_DID = "unknown_server_did"
    UNKNOWN_SERVER_NAME = "unknown_server_name"


@dataclass(frozen=True)
class Rejection:
    reason: RejectionReason
    detail: str = ""


@dataclass
class ServerCapabilities:
    supported_methods: Tuple[str, ...]
    supported_presentation_protocols: Tuple[str, ...]
    available_identities: List[CertBundle]
    default_identity: CertBundle
    presentable_credentials: bool = False

    def __post_init__(self):
        self.supported_methods = tuple(self.supported_methods)
        self.supported_presentation_protocols = tuple(self.supported_presentation_protocols)
        if self.default_identity not in self.available_identities:
            self.available_identities = [self.default_identity, *self.available_identities]
        for identity in self.available_identities:
            if identity.kind is CertKind.CA_ROOT:
                raise ValueError("a CA root cannot serve as a TLS identity")


# Wire encoding

def _u16(value: int) -> bytes:
    if value > MAX_PAYLOAD:
        raise OversizePayload(f"length {value} exceeds {MAX_PAYLOAD}")
    return struct.pack(">H", value)


def _encode_list(entries: Sequence[str]) -> bytes:
    out = bytearray(_u16(len(entries)))
    for entry in entries:
        raw = entry.encode("utf-8")
        if not raw or len(raw) > 0xFF:
            raise OversizePayload(f"list entry of {len(raw)} bytes does not fit a 1-byte length")
        out += bytes([len(raw)]) + raw
    return bytes(out)


def _decode_list(payload: bytes) -> Tuple[str, ...]:
    if len(payload) < 2:
        raise MalformedPayload("list payload shorter than its count")
    (count,) = struct.unpack(">H", payload[:2])
    entries, offset = [], 2
    for _ in range(count):
        if offset >= len(payload):
            raise MalformedPayload("list truncated")
        size = payload[offset]
        offset += 1
        raw = payload[offset:offset + size]
        if size == 0 or len(raw) != size:
            raise MalformedPayload("list entry truncated or empty")
        try:
            entries.append(raw.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise MalformedPayload("list entry is not utf-8") from exc
        offset += size
    if offset != len(payload):
        raise MalformedPayload("trailing bytes after list")
    return tuple(entries)


def _encode_did(did: Did) -> bytes:
    raw = did.full.encode("utf-8")
    return _u16(len(raw)) + raw


def _decode_did(payload: bytes) -> Did:
    if len(payload) < 2:
        raise MalformedPayload("CNI payload too short")
    (size,) = struct.unpack(">H", payload[:2])
    if len(payload) != 2 + size:
        raise MalformedPayload("CNI length mismatch")
    try:
        return parse_did(payload[2:].decode("utf-8"))
    except (UnicodeDecodeError, MalformedDid) as exc:
        raise MalformedPayload(f"CNI does not carry a DID: {exc}") from exc


def encode_server_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    entry = b"\x00" + _u16(len(raw)) + raw
    return _u16(len(entry)) + entry


def decode_server_name(payload: bytes) -> str:
    if len(payload) < 5:
        raise MalformedPayload("server_name payload too short")
    (list_len,) = struct.unpack(">H", payload[:2])
    if list_len != len(payload) - 2 or payload[2] != 0:
        raise MalformedPayload("server_name list malformed")
    (name_len,) = struct.unpack(">H", payload[3:5])
    if name_len != len(payload) - 5 or name_len == 0:
        raise MalformedPayload("host_name length mismatch")
    try:
        return payload[5:].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedPayload("host_name is not utf-8") from exc


def _checked(code: int, payload: bytes) -> Tuple[int, bytes]:
    if len(payload) > MAX_PAYLOAD:
        raise OversizePayload(f"extension 0x{code:04X} payload of {len(payload)} bytes")
    return code, payload


def encode_extensions(
    obj: Union[NegotiationOffer, NegotiationAgreement], include_sni: bool = True
) -> EncodedExtensions:
    """Encode an offer or agreement as (code, payload) pairs in code order."""
    out: EncodedExtensions = []
    if isinstance(obj, NegotiationOffer):
        name = obj.server_name_indication
        if include_sni and name is not None:
            out.append(_checked(EXTENSION_CODES[Extension.SNI], encode_server_name(name)))
        if obj.client_did is not None:
            out.append(_checked(EXTENSION_CODES[Extension.CNI], _encode_did(obj.client_did)))
        if obj.client_did_methods:
            out.append(_checked(EXTENSION_CODES[Extension.CMI], _encode_list(obj.client_did_methods)))
        if obj.presentation_protocols:
            out.append(
                _checked(EXTENSION_CODES[Extension.CPP], _encode_list(obj.presentation_protocols))
            )
        return out
    if obj.server_did_methods:
        out.append(_checked(EXTENSION_CODES[Extension.SMI], _encode_list(obj.server_did_methods)))
    if obj.agreed_presentation_protocol is not None:
        out.append(
            _checked(EXTENSION_CODES[Extension.SPA], _encode_list([obj.agreed_presentation_protocol]))
        )
    return out


def _index(extensions: Iterable[Tuple[int, bytes]]) -> Dict[Extension, bytes]:
    found: Dict[Extension, bytes] = {}
    for code, payload in extensions:
        ext = _EXTENSIONS_BY_CODE.get(code)
        if ext is None:
            continue
        if ext in found:
            raise MalformedPayload(f"duplicate extension {ext.value}")
        found[ext] = bytes(payload)
    return found


def decode_offer(
    extensions: Iterable[Tuple[int, bytes]],
    client_auth_mode: ClientAuthMode = ClientAuthMode.NONE,
    server_name: Optional[str] = None,
) -> NegotiationOffer:
    """Rebuild an offer; `server_name` supplies SNI taken from the TLS hello."""
    found = _index(extensions)
    if Extension.SNI in found:
        server_name = decode_server_name(found[Extension.SNI])
    fields: Dict[str, object] = {"client_auth_mode": ClientAuthMode(client_auth_mode)}
    if server_name is not None:
        if server_name.startswith("did:"):
            try:
                fields["target_server_did"] = parse_did(server_name)
            except MalformedDid as exc:
                raise MalformedPayload(f"SNI DID malformed: {exc}") from exc
        else:
            fields["target_server_name"] = server_name
    if Extension.CNI in found:
        fields["client_did"] = _decode_did(found[Extension.CNI])
    if Extension.CMI in found:
        fields["client_did_methods"] = _decode_list(found[Extension.CMI])
    if Extension.CPP in found:
        fields["presentation_protocols"] = _decode_list(found[Extension.CPP])
    try:
        return NegotiationOffer(**fields)
    except ValueError as exc:
        raise MalformedPayload(f"inconsistent offer: {exc}") from exc


def decode_agreement(
    extensions: Iterable[Tuple[int, bytes]], server_auth_mode: ServerAuthMode
) -> NegotiationAgreement:
    found = _index(extensions)
    methods = _decode_list(found[Extension.SMI]) if Extension.SMI in found else ()
    protocol = None
    if Extension.SPA in found:
        protocols = _decode_list(found[Extension.SPA])
        if len(protocols) != 1:
            raise MalformedPayload("SPA must name exactly one protocol")
        protocol = protocols[0]
    return NegotiationAgreement(
        server_did_methods=methods,
        agreed_presentation_protocol=protocol,
        server_auth_mode=ServerAuthMode(server_auth_mode),
        identification_enabled=protocol is not None,
    )


def decode_extensions(
    extensions: Iterable[Tuple[int, bytes]], kind: str = "offer", **context
) -> Union[NegotiationOffer, NegotiationAgreement]:
    if kind == "offer":
        return decode_offer(extensions, **context)
    if kind == "agreement":
        return decode_agreement(extensions, **context)
    raise ValueError(f"unknown extension set kind {kind!r}")


def pack_extension_block(extensions: Iterable[Tuple[int, bytes]]) -> bytes:
    """Concatenate (2-byte code, 2-byte length, payload) entries."""
    out = bytearray()
    for code, payload in extensions:
        out += struct.pack(">HH", code, len(payload)) + payload
    return bytes(out)


def unpack_extension_block(data: bytes) -> EncodedExtensions:
    out: EncodedExtensions = []
    offset = 0
    while offset < len(data):
        if offset + 4 > len(data):
            raise MalformedPayload("extension header truncated")
        code, size = struct.unpack(">HH", data[offset:offset + 4])
        offset += 4
        if offset + size > len(data):
            raise MalformedPayload("extension payload truncated")
        out.append((code, data[offset:offset + size]))
        offset += size
    return out


# Negotiation

def select_identity(
    server_name: Optional[str], caps: ServerCapabilities
) -> Union[CertBundle, Rejection]:
    """Identity the server presents for the given SNI value."""
    if server_name is None:
        return caps.default_identity
    if server_name.startswith("did:"):
        for identity in caps.available_identities:
            if identity.did is not None and identity.did.full == server_name:
                return identity
        return Rejection(RejectionReason.UNKNOWN_SERVER_DID, server_name)
    for identity in caps.available_identities:
        if identity.kind is CertKind.CA_ISSUED and (
            server_name in identity.dns_names or server_name == identity.subject_name
        ):
            return identity
    return Rejection(RejectionReason.UNKNOWN_SERVER_NAME, server_name)


def server_mode_for(
    identity: CertBundle, default: bool, presents_credentials: bool
) -> ServerAuthMode:
    if identity.kind is CertKind.DID_SELF_ISSUED:
        if presents_credentials:
            return ServerAuthMode.DID_VC_DEFAULT if default else ServerAuthMode.DID_VC
        return ServerAuthMode.DID_DEFAULT if default else ServerAuthMode.DID
    if identity.kind is CertKind.DERIVED_SELF_ISSUED:
        return ServerAuthMode.DERIVED_DEFAULT if default else ServerAuthMode.DERIVED
    return ServerAuthMode.CERT_DEFAULT if default else ServerAuthMode.CERT


def negotiate(
    offer: NegotiationOffer, caps: ServerCapabilities
) -> Union[NegotiationAgreement, Rejection]:
    """Server decision for a client offer; deterministic in (offer, caps)."""
    identity = select_identity(offer.server_name_indication, caps)
    if isinstance(identity, Rejection):
        return identity
    default = offer.server_name_indication is None
    server_is_did = identity.kind is CertKind.DID_SELF_ISSUED
    supported = set(caps.supported_methods)
    common = tuple(m for m in offer.client_did_methods if m in supported)

    if offer.requests_did_auth:
        if offer.client_did_methods and not common:
            return Rejection(RejectionReason.NO_COMMON_METHOD, ",".join(offer.client_did_methods))
        if (
            not offer.client_did_methods
            and offer.client_did is not None
            and offer.client_did.method not in supported
        ):
            return Rejection(RejectionReason.NO_COMMON_METHOD, offer.client_did.method)
    if server_is_did and offer.client_did_methods and identity.did.method not in offer.client_did_methods:
        return Rejection(RejectionReason.NO_COMMON_METHOD, identity.did.method)

    protocol = None
    if offer.presentation_protocols:
        server_protocols = set(caps.supported_presentation_protocols)
        protocol = next((p for p in offer.presentation_protocols if p in server_protocols), None)
        if protocol is None:
            return Rejection(
                RejectionReason.NO_COMMON_PRESENTATION_PROTOCOL,
                ",".join(offer.presentation_protocols),
            )
    identification = protocol is not None

    emit_smi = bool(common) and (
        identification or (offer.requests_did_auth and (server_is_did or default))
    )
    mode = server_mode_for(
        identity, default, server_is_did and identification and caps.presentable_credentials
    )
    return NegotiationAgreement(
        server_did_methods=common if emit_smi else (),
        agreed_presentation_protocol=protocol,
        server_auth_mode=mode,
        identification_enabled=identification,
    )


# Scenario matrix

class Cell(str, Enum):
    REQUIRED = "✓"
    ABSENT = "-"
    OPTIONAL = "✓/-"

    def admits(self, present: bool) -> bool:
        if self is Cell.OPTIONAL:
            return True
        return present == (self is Cell.REQUIRED)


MATRIX_EXTENSIONS = (Extension.SNI, Extension.CNI, Extension.CMI, Extension.SMI)

CLIENT_LABELS = {
    ClientAuthMode.NONE: "-",
    ClientAuthMode.CERT: "Cer",
    ClientAuthMode.DID: "DID",
    ClientAuthMode.DID_VC: "DID+VC",
}
SERVER_LABELS = {
    ServerAuthMode.CERT_DEFAULT: "Cer_def",
    ServerAuthMode.CERT: "Cer",
    ServerAuthMode.DID_DEFAULT: "DID_def",
    ServerAuthMode.DID: "DID",
    ServerAuthMode.DID_VC_DEFAULT: "DID_def+VC",
    ServerAuthMode.DID_VC: "DID+VC",
}


@dataclass(frozen=True)
class ScenarioRow:
    number: int
    group: str
    client: str
    server: str
    cells: Dict[Extension, Cell] = field(hash=False, compare=False)

    @property
    def label(self) -> str:
        return f"{self.client} / {self.server}"

    @property
    def uses_credentials(self) -> bool:
        return self.client.endswith("+VC") or self.server.endswith("+VC")


def _row(number: int, group: str, client: str, server: str, cells: str) -> ScenarioRow:
    marks = {"y": Cell.REQUIRED, "n": Cell.ABSENT, "o": Cell.OPTIONAL}
    return ScenarioRow(
        number=number,
        group=group,
        client=client,
        server=server,
        cells={ext: marks[mark] for ext, mark in zip(MATRIX_EXTENSIONS, cells)},
    )


# Cells in SNI, CNI, CMI, SMI order: y required, n absent, o optional.
SCENARIO_ROWS: Tuple[ScenarioRow, ...] = (
    _row(1, "legacy", "-", "Cer_def", "nnnn"),
    _row(2, "legacy", "-", "Cer", "ynnn"),
    _row(3, "legacy", "Cer", "Cer_def", "nnnn"),
    _row(4, "legacy", "Cer", "Cer", "ynnn"),
    _row(5, "did_vc", "-", "DID_def", "nnon"),
    _row(6, "did_vc", "-", "DID", "ynnn"),
    _row(7, "did_vc", "DID", "DID_def", "nnyy"),
    _row(8, "did_vc", "DID", "DID_def", "nynn"),
    _row(9, "did_vc", "DID", "DID", "ynyy"),
    _row(10, "did_vc", "DID", "DID", "yynn"),
    _row(11, "did_vc", "-", "DID_def+VC", "nnyy"),
    _row(12, "did_vc", "-", "DID+VC", "ynyy"),
    _row(13, "did_vc", "DID+VC", "DID_def+VC", "noyy"),
    _row(14, "did_vc", "DID+VC", "DID+VC", "yoyy"),
    _row(15, "did_vc", "DID+VC", "DID_def", "nooo"),
    _row(16, "did_vc", "DID+VC", "DID", "yooo"),
    _row(17, "hybrid", "DID", "Cer_def", "nynn"),
    _row(18, "hybrid", "DID", "Cer_def", "nnyy"),
    _row(19, "hybrid", "DID", "Cer", "ynon"),
    _row(20, "hybrid", "Cer", "DID_def", "nnon"),
    _row(21, "hybrid", "Cer", "DID", "ynnn"),
    _row(22, "hybrid", "DID+VC", "Cer_def", "noyy"),
    _row(23, "hybrid", "DID+VC", "Cer", "yoyy"),
    _row(24, "hybrid", "Cer", "DID_def+VC", "nnyy"),
    _row(25, "hybrid", "Cer", "DID+VC", "ynyy"),
)


@dataclass(frozen=True)
class ScenarioClass:
    row: ScenarioRow
    extensions_present: FrozenSet[Extension]


def extensions_present(
    offer: NegotiationOffer, agreement: NegotiationAgreement
) -> FrozenSet[Extension]:
    present = set()
    if offer.server_name_indication is not None:
        present.add(Extension.SNI)
    if offer.client_did is not None:
        present.add(Extension.CNI)
    if offer.client_did_methods:
        present.add(Extension.CMI)
    if offer.presentation_protocols:
        present.add(Extension.CPP)
    if agreement.server_did_methods:
        present.add(Extension.SMI)
    if agreement.agreed_presentation_protocol is not None:
        present.add(Extension.SPA)
    return frozenset(present)


def classify_scenario(offer: NegotiationOffer, agreement: NegotiationAgreement) -> ScenarioClass:
    """The unique scenario row matching the auth modes and extensions."""
    present = extensions_present(offer, agreement)
    client = CLIENT_LABELS.get(offer.client_auth_mode)
    server = SERVER_LABELS.get(agreement.server_auth_mode)
    if client is None or server is None:
        raise NoMatchingRow(
            f"{offer.client_auth_mode.value} / {agreement.server_auth_mode.value} is outside the matrix"
        )
    uses_credentials = client.endswith("+VC") or server.endswith("+VC")
    exchanges = Extension.CPP in present and Extension.SPA in present
    if uses_credentials != exchanges or (not uses_credentials and Extension.CPP in present):
        raise NoMatchingRow("CPP/SPA must accompany exactly the credential-bearing modes")
    matches = [
        row
        for row in SCENARIO_ROWS
        if row.client == client
        and row.server == server
        and all(row.cells[ext].admits(ext in present) for ext in MATRIX_EXTENSIONS)
    ]
    if len(matches) != 1:
        raise NoMatchingRow(
            f"{client} / {server} with {sorted(e.value for e in present)} matches {len(matches)} rows",
            details={"extensions": sorted(e.value for e in present)},
        )
    return ScenarioClass(row=matches[0], extensions_present=present)
