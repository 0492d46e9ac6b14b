"""
DID Link sessions over TLS 1.3.

connect() and accept() run the TLS handshake (OpenSSL via pyOpenSSL), verify
the peer certificate, exchange the negotiation preamble and, when agreed, run
the identification sub-layer before handing out the session for application
messages.
"""

import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple, Union

from cryptography import x509
from OpenSSL import SSL, crypto

from ..cert_kit import CertBundle, CertKind, load_certificate
from ..config import format_address, parse_address
from ..did_core import CachePolicy, Did, Resolver
from ..errors import (
    BindFailure,
    BindingInvalid,
    DidLinkError,
    HandshakeRejected,
    MalformedPayload,
    ProtocolViolation,
    TransportError,
    error_from_dict,
)
from ..identity_layer.engine import IdentificationConfig, IdentificationMode, run_identification
from ..identity_layer.frames import Flow, Frame, FrameType, decode_frame, encode_frame, json_frame, peek_length
from ..identity_layer.presentation_exchange import build_request
from ..monitoring import Stopwatch, get_logger
from ..negotiation import (
    EXTENSION_CODES,
    ClientAuthMode,
    Extension,
    NegotiationAgreement,
    NegotiationOffer,
    Rejection,
    ServerAuthMode,
    ServerCapabilities,
    decode_agreement,
    decode_offer,
    encode_extensions,
    negotiate,
    pack_extension_block,
    select_identity,
    unpack_extension_block,
)
from .transport import TlsPump
from .verify import PeerAuthMode, PeerAuthResult, ResolutionMode, VerificationHook

logger = get_logger(__name__)

DEFAULT_HANDSHAKE_TIMEOUT = 10.0
MESSAGE_HEADER = struct.Struct(">I")
MAX_MESSAGE = 16 * 1024 * 1024
EXTENSION_TRANSPORT = "preamble"


class Role(str, Enum):
    CLIENT = "client"
    SERVER = "server"


@dataclass
class ClientConfig:
    identity: Optional[CertBundle] = None
    offer: NegotiationOffer = field(default_factory=NegotiationOffer)
    resolver: Optional[Resolver] = None
    cache_policy: Optional[CachePolicy] = None
    trust_roots: Sequence[bytes] = ()
    resolution_mode: ResolutionMode = ResolutionMode.PARALLEL
    identification: Optional[IdentificationConfig] = None
    timeout: float = DEFAULT_HANDSHAKE_TIMEOUT
    strict_binding: bool = False


@dataclass
class ServerConfig:
    capabilities: ServerCapabilities
    client_auth_required: bool = False
    resolver: Optional[Resolver] = None
    cache_policy: Optional[CachePolicy] = None
    trust_roots: Sequence[bytes] = ()
    resolution_mode: ResolutionMode = ResolutionMode.PARALLEL
    identification: Optional[IdentificationConfig] = None
    timeout: float = DEFAULT_HANDSHAKE_TIMEOUT
    strict_binding: bool = False
    check_client_name: bool = True
    _contexts: Dict[int, SSL.Context] = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def context_for(self, identity: CertBundle) -> SSL.Context:
        with self._lock:
            ctx = self._contexts.get(id(identity))
            if ctx is None:
                mode = SSL.VERIFY_PEER
                if self.client_auth_required:
                    mode |= SSL.VERIFY_FAIL_IF_NO_PEER_CERT
                ctx = _base_context(mode, _trust_roots(self.trust_roots))
                _install_identity(ctx, identity)
                if identity is self.capabilities.default_identity:
                    ctx.set_tlsext_servername_callback(self._select_by_name)
                self._contexts[id(identity)] = ctx
            return ctx

    def _select_by_name(self, conn: SSL.Connection) -> None:
        name = conn.get_servername()
        if not name:
            return
        identity = select_identity(name.decode("utf-8", "replace"), self.capabilities)
        if isinstance(identity, CertBundle) and identity is not self.capabilities.default_identity:
            conn.set_context(self.context_for(identity))


def _dispatch_verify(conn: SSL.Connection, cert: crypto.X509, errno: int, depth: int, ok: int) -> bool:
    hook = conn.get_app_data()
    if hook is None:
        return bool(ok)
    return hook(conn, cert, errno, depth, ok)


def _trust_roots(roots: Sequence[Union[bytes, x509.Certificate]]) -> List[x509.Certificate]:
    return [r if isinstance(r, x509.Certificate) else load_certificate(r) for r in roots]


def _base_context(verify_mode: int, trust_roots: Sequence[x509.Certificate]) -> SSL.Context:
    ctx = SSL.Context(SSL.TLS_METHOD)
    ctx.set_min_proto_version(SSL.TLS1_3_VERSION)
    ctx.set_max_proto_version(SSL.TLS1_3_VERSION)
    ctx.set_verify(verify_mode, _dispatch_verify)
    store = ctx.get_cert_store()
    for root in trust_roots:
        store.add_cert(crypto.X509.from_cryptography(root))
    return ctx


def _install_identity(ctx: SSL.Context, bundle: CertBundle) -> None:
    if bundle.kind is CertKind.CA_ROOT:
        raise ValueError("a CA root cannot serve as a TLS identity")
    ctx.use_certificate(crypto.X509.from_cryptography(bundle.certificate))
    ctx.use_privatekey(crypto.PKey.from_cryptography_key(bundle.key.private_key_object()))
    for der in bundle.chain_der:
        ctx.add_extra_chain_cert(crypto.X509.from_cryptography(load_certificate(der)))
    ctx.check_privatekey()


def error_from_frame(body: Dict[str, object]) -> DidLinkError:
    """Rebuild the exception an error frame reports."""
    rest = {k: v for k, v in body.items() if k != "code"}
    return error_from_dict({"error": str(body.get("code", ProtocolViolation.code)), **rest})


def error_body(exc: DidLinkError) -> Dict[str, object]:
    body: Dict[str, object] = {"code": exc.code, "message": exc.message}
    reason = getattr(exc, "reason", None)
    if reason is not None:
        body["reason"] = reason
    return body


def _alert_rejection(exc: SSL.Error) -> HandshakeRejected:
    text = str(exc).lower()
    if "certificate required" in text or "did not return a certificate" in text:
        return HandshakeRejected("client_certificate_required", "the server requires a client certificate")
    return HandshakeRejected("tls_alert", f"TLS handshake failed: {exc}")


class SecureSession:
    """An established DID Link session.

    Identification frames come first on the stream, application messages
    (4-byte length prefix) after them.
    """

    def __init__(
        self,
        pump: TlsPump,
        role: Role,
        offer: NegotiationOffer,
        local_identity: Optional[CertBundle] = None,
        endpoint: str = "",
    ):
        self._pump = pump
        self.role = role
        self.offer = offer
        self.local_identity = local_identity
        self.endpoint = endpoint
        self.negotiated: Optional[NegotiationAgreement] = None
        self.peer: Optional[PeerAuthResult] = None
        self.identification = None
        self.identification_started_at: Optional[float] = None
        self.setup_duration = 0.0
        self.pending_request = None
        self.extension_transport = EXTENSION_TRANSPORT
        self._server_ticket_bytes = 0
        self._inbox = bytearray()
        self._send_lock = threading.Lock()

    # Properties

    @property
    def transport(self) -> TlsPump:
        return self._pump

    @property
    def local_did(self) -> Optional[Did]:
        return self.local_identity.did if self.local_identity is not None else None

    @property
    def peer_did(self) -> Optional[Did]:
        return self.peer.peer_did if self.peer is not None else None

    @property
    def session_tickets_bytes(self) -> int:
        if self.role is Role.SERVER:
            return self._server_ticket_bytes
        return self._pump.ticket_bytes

    @property
    def bytes_sent(self) -> int:
        return self._pump.bytes_sent

    @property
    def bytes_received(self) -> int:
        return self._pump.bytes_received

    @property
    def closed(self) -> bool:
        return self._pump.closed

    # Stream

    def _fill(self) -> None:
        try:
            chunk = self._pump.recv_some()
        except SSL.Error as exc:
            raise _alert_rejection(exc) from exc
        if not chunk:
            raise TransportError("peer closed the session")
        self._inbox.extend(chunk)

    def send_frame(self, frame: Frame) -> None:
        with self._send_lock:
            self._pump.send(encode_frame(frame))

    def send_error(self, flow_id: int, exc: DidLinkError) -> None:
        try:
            self.send_frame(json_frame(FrameType.ERROR, flow_id, error_body(exc)))
        except DidLinkError:
            pass

    def read_frame(self) -> Frame:
        while True:
            total = peek_length(bytes(self._inbox[:12]))
            if total is not None and len(self._inbox) >= total:
                frame, used = decode_frame(bytes(self._inbox[:total]))
                del self._inbox[:used]
                return frame
            self._fill()

    def send_message(self, data: bytes) -> None:
        if len(data) > MAX_MESSAGE:
            raise MalformedPayload(f"message of {len(data)} bytes exceeds {MAX_MESSAGE}")
        with self._send_lock:
            self._pump.send(MESSAGE_HEADER.pack(len(data)) + data)

    def recv_message(self) -> bytes:
        while len(self._inbox) < MESSAGE_HEADER.size:
            self._fill()
        (length,) = MESSAGE_HEADER.unpack(bytes(self._inbox[:MESSAGE_HEADER.size]))
        if length > MAX_MESSAGE:
            raise MalformedPayload(f"message of {length} bytes exceeds {MAX_MESSAGE}")
        while len(self._inbox) < MESSAGE_HEADER.size + length:
            self._fill()
        data = bytes(self._inbox[MESSAGE_HEADER.size:MESSAGE_HEADER.size + length])
        del self._inbox[:MESSAGE_HEADER.size + length]
        return data

    def set_timeout(self, seconds: Optional[float]) -> None:
        self._pump.sock.settimeout(seconds)

    def close(self) -> None:
        self._pump.shutdown()

    def __enter__(self) -> "SecureSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def summary(self) -> Dict[str, object]:
        """JSON-ready description of the session for CLI output."""
        body: Dict[str, object] = {
            "role": self.role.value,
            "endpoint": self.endpoint,
            "peer": self.peer.to_json_dict() if self.peer else None,
            "negotiated": self.negotiated.model_dump(mode="json") if self.negotiated else None,
            "extension_transport": self.extension_transport,
            "setup_ms": round(self.setup_duration, 3),
            "session_tickets_bytes": self.session_tickets_bytes,
            "bytes_sent": self.bytes_sent,
            "bytes_received": self.bytes_received,
        }
        if self.identification is not None:
            body["identification"] = self.identification.to_json_dict()
        return body


def _infer_server_mode(peer: PeerAuthResult, default: bool, identification: bool) -> ServerAuthMode:
    if peer.mode in (PeerAuthMode.DID, PeerAuthMode.DID_PENDING_VC):
        if identification:
            return ServerAuthMode.DID_VC_DEFAULT if default else ServerAuthMode.DID_VC
        return ServerAuthMode.DID_DEFAULT if default else ServerAuthMode.DID
    if peer.mode is PeerAuthMode.DERIVED_ID:
        return ServerAuthMode.DERIVED_DEFAULT if default else ServerAuthMode.DERIVED
    return ServerAuthMode.CERT_DEFAULT if default else ServerAuthMode.CERT


def _infer_client_mode(peer: PeerAuthResult, codes: Sequence[int]) -> ClientAuthMode:
    names_did = EXTENSION_CODES[Extension.CNI] in codes or EXTENSION_CODES[Extension.CMI] in codes
    offers_cpp = EXTENSION_CODES[Extension.CPP] in codes
    if peer.mode in (PeerAuthMode.DID, PeerAuthMode.DID_PENDING_VC):
        if not names_did:
            return ClientAuthMode.NONE
        return ClientAuthMode.DID_VC if offers_cpp else ClientAuthMode.DID
    if peer.mode is PeerAuthMode.DERIVED_ID:
        return ClientAuthMode.DERIVED
    if peer.mode is PeerAuthMode.CERT_CHAIN:
        return ClientAuthMode.CERT
    return ClientAuthMode.NONE


def _check_agreement(offer: NegotiationOffer, agreement: NegotiationAgreement) -> None:
    protocol = agreement.agreed_presentation_protocol
    if protocol is not None and protocol not in offer.presentation_protocols:
        raise ProtocolViolation(f"server agreed to {protocol!r}, which was not offered")
    if not set(agreement.server_did_methods) <= set(offer.client_did_methods):
        raise ProtocolViolation("server indicated DID methods the client did not offer")


def _client_connection(
    config: ClientConfig, roots: List[x509.Certificate]
) -> Tuple[SSL.Connection, VerificationHook]:
    offer = config.offer
    ctx = _base_context(SSL.VERIFY_PEER, roots)
    if config.identity is not None:
        _install_identity(ctx, config.identity)
    conn = SSL.Connection(ctx, None)
    conn.set_connect_state()
    hook = VerificationHook(
        config.resolver,
        config.cache_policy,
        roots,
        config.resolution_mode,
        expected_name=offer.target_server_name,
        strict=config.strict_binding,
    )
    conn.set_app_data(hook)
    if offer.server_name_indication is not None:
        conn.set_tlsext_host_name(offer.server_name_indication.encode("utf-8"))
    return conn, hook


def connect(endpoint: Union[str, Tuple[str, int]], config: ClientConfig) -> SecureSession:
    """Open a DID Link session to `endpoint` ("host:port")."""
    setup = Stopwatch()
    address = parse_address(endpoint)
    offer = config.offer
    roots = _trust_roots(config.trust_roots)
    try:
        sock = socket.create_connection(address, timeout=config.timeout)
    except OSError as exc:
        raise TransportError(f"cannot reach {format_address(address)}: {exc}") from exc
    try:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        conn, hook = _client_connection(config, roots)
    except Exception:
        sock.close()
        raise
    pump = TlsPump(sock, conn)
    session = SecureSession(pump, Role.CLIENT, offer, config.identity, format_address(address))
    watch = Stopwatch()
    try:
        try:
            pump.handshake()
        except SSL.Error as exc:
            raise hook.failure or _alert_rejection(exc) from exc
        handshake_ms = watch.stop()

        session.send_frame(
            Frame(
                FrameType.NEGOTIATION_PREAMBLE,
                Flow.CLIENT_VERIFIES_SERVER,
                pack_extension_block(encode_extensions(offer, include_sni=False)),
            )
        )
        identification = config.identification
        if (
            identification is not None
            and identification.request is not None
            and offer.presentation_protocols
            and identification.mode is not IdentificationMode.CLIENT_FIRST
        ):
            request = build_request(identification.request, audience=_audience(session))
            session.identification_started_at = time.perf_counter()
            session.send_frame(json_frame(FrameType.PRESENTATION_REQUEST, Flow.CLIENT_VERIFIES_SERVER, request.to_payload()))
            session.pending_request = request

        peer = hook.join(config.timeout)
        if offer.target_server_did is not None and peer.peer_did != offer.target_server_did:
            raise BindingInvalid("did_mismatch", f"server authenticated as {peer.peer_did}, expected {offer.target_server_did.full}")
        peer = peer.model_copy(update={"handshake_duration": handshake_ms})

        frame = session.read_frame()
        if frame.frame_type == FrameType.ERROR:
            raise error_from_frame(frame.json())
        if frame.frame_type != FrameType.NEGOTIATION_PREAMBLE:
            raise ProtocolViolation(f"expected the negotiation preamble, got frame type {frame.frame_type}")
        extensions = unpack_extension_block(frame.payload)
        spa_present = any(code == EXTENSION_CODES[Extension.SPA] for code, _ in extensions)
        agreement = decode_agreement(
            extensions,
            _infer_server_mode(peer, offer.server_name_indication is None, spa_present),
        )
        _check_agreement(offer, agreement)
        if agreement.server_presents_credentials and peer.mode is PeerAuthMode.DID:
            peer = peer.model_copy(update={"mode": PeerAuthMode.DID_PENDING_VC})
        session.peer = peer
        session.negotiated = agreement
        session.setup_duration = setup.stop()
        logger.info(
            "Channel established",
            role="client",
            endpoint=session.endpoint,
            peer_mode=peer.mode.value,
            peer_did=peer.peer_did.full if peer.peer_did else None,
            resolution_source=peer.resolution_source.value if peer.resolution_source else None,
            handshake_ms=round(handshake_ms, 3),
            resolve_ms=round(peer.resolve_duration, 3),
            identification=agreement.identification_enabled,
        )
        if agreement.identification_enabled:
            run_identification(session, identification or IdentificationConfig(), config.resolver)
    except DidLinkError:
        session.close()
        raise
    except SSL.Error as exc:
        session.close()
        raise _alert_rejection(exc) from exc
    except OSError as exc:
        session.close()
        raise TransportError(f"session with {session.endpoint} failed: {exc}") from exc
    return session


def _audience(session: SecureSession) -> str:
    local = session.local_did
    return local.full if local is not None else session.endpoint


def accept(sock: socket.socket, config: ServerConfig, peer_address: Optional[Tuple[str, int]] = None) -> SecureSession:
    """Run the server side of a DID Link session on an accepted socket."""
    setup = Stopwatch()
    caps = config.capabilities
    sock.settimeout(config.timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    conn = SSL.Connection(config.context_for(caps.default_identity), None)
    conn.set_accept_state()
    hook = VerificationHook(
        config.resolver,
        config.cache_policy,
        _trust_roots(config.trust_roots),
        config.resolution_mode,
        strict=config.strict_binding,
    )
    conn.set_app_data(hook)
    pump = TlsPump(sock, conn)
    endpoint = format_address(peer_address) if peer_address else ""
    session = SecureSession(pump, Role.SERVER, NegotiationOffer(), caps.default_identity, endpoint)
    watch = Stopwatch()
    try:
        try:
            session._server_ticket_bytes = pump.handshake()
        except SSL.Error as exc:
            if hook.failure is not None:
                raise hook.failure from exc
            raise _alert_rejection(exc) from exc
        handshake_ms = watch.stop()

        try:
            peer = hook.join(config.timeout)
        except DidLinkError as exc:
            session.send_error(Flow.CLIENT_VERIFIES_SERVER, exc)
            raise
        peer = peer.model_copy(update={"handshake_duration": handshake_ms})

        frame = session.read_frame()
        if frame.frame_type != FrameType.NEGOTIATION_PREAMBLE:
            violation = ProtocolViolation(f"expected the negotiation preamble, got frame type {frame.frame_type}")
            session.send_error(Flow.CLIENT_VERIFIES_SERVER, violation)
            raise violation
        try:
            extensions = unpack_extension_block(frame.payload)
            server_name = conn.get_servername()
            offer = decode_offer(
                extensions,
                _infer_client_mode(peer, [code for code, _ in extensions]),
                server_name.decode("utf-8", "replace") if server_name else None,
            )
        except DidLinkError as exc:
            session.send_error(Flow.CLIENT_VERIFIES_SERVER, exc)
            raise
        session.offer = offer
        if (
            config.check_client_name
            and offer.client_did is not None
            and peer.peer_did is not None
            and offer.client_did != peer.peer_did
        ):
            rejection = HandshakeRejected(
                "client_name_mismatch",
                f"CNI names {offer.client_did.full} but the certificate carries {peer.peer_did.full}",
            )
            session.send_error(Flow.CLIENT_VERIFIES_SERVER, rejection)
            raise rejection

        decision = negotiate(offer, caps)
        if isinstance(decision, Rejection):
            rejection = HandshakeRejected(decision.reason.value, decision.detail)
            session.send_error(Flow.CLIENT_VERIFIES_SERVER, rejection)
            raise rejection
        identity = select_identity(offer.server_name_indication, caps)
        session.local_identity = identity
        session.send_frame(
            Frame(
                FrameType.NEGOTIATION_PREAMBLE,
                Flow.CLIENT_VERIFIES_SERVER,
                pack_extension_block(encode_extensions(decision)),
            )
        )
        if offer.client_presents_credentials and peer.mode is PeerAuthMode.DID:
            peer = peer.model_copy(update={"mode": PeerAuthMode.DID_PENDING_VC})
        session.peer = peer
        session.negotiated = decision
        session.setup_duration = setup.stop()
        logger.info(
            "Channel established",
            role="server",
            endpoint=endpoint,
            server_mode=decision.server_auth_mode.value,
            peer_mode=peer.mode.value,
            peer_did=peer.peer_did.full if peer.peer_did else None,
            resolution_source=peer.resolution_source.value if peer.resolution_source else None,
            handshake_ms=round(handshake_ms, 3),
            resolve_ms=round(peer.resolve_duration, 3),
            session_tickets_bytes=session.session_tickets_bytes,
        )
        if decision.identification_enabled:
            run_identification(session, config.identification or IdentificationConfig(), config.resolver)
    except DidLinkError:
        session.close()
        raise
    except SSL.Error as exc:
        session.close()
        raise _alert_rejection(exc) from exc
    except OSError as exc:
        session.close()
        raise TransportError(f"session with {endpoint} failed: {exc}") from exc
    return session


SessionHandler = Callable[[SecureSession], None]


def echo_handler(session: SecureSession) -> None:
    """Echo application messages until the peer closes."""
    while True:
        try:
            message = session.recv_message()
        except TransportError:
            return
        session.send_message(message)


class DidLinkServer:
    """Accept loop serving each connection on its own thread.

    `sessions` holds the sessions whose handler is still running; `failures`
    keeps the most recent refusals. `accepted` and `refused` count all of them.
    """

    def __init__(
        self,
        config: ServerConfig,
        host: str = "127.0.0.1",
        port: int = 0,
        handler: Optional[SessionHandler] = None,
        failure_history: int = 64,
    ):
        self.config = config
        self.host = host
        self.port = port
        self.handler = handler
        self.sessions: List[SecureSession] = []
        self.failures: Deque[DidLinkError] = deque(maxlen=failure_history)
        self.accepted = 0
        self.refused = 0
        self._listener: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None
        self._stopping = threading.Event()
        self._lock = threading.Lock()
        self.on_session: Optional[Callable[[SecureSession], None]] = None
        self.on_failure: Optional[Callable[[DidLinkError], None]] = None

    @property
    def address(self) -> Tuple[str, int]:
        return self._listener.getsockname()[:2]

    def start(self) -> Tuple[str, int]:
        try:
            listener = socket.create_server((self.host, self.port), reuse_port=False)
        except OSError as exc:
            raise BindFailure(f"cannot bind {self.host}:{self.port}: {exc}") from exc
        listener.settimeout(0.2)
        self._listener = listener
        self._thread = threading.Thread(target=self._accept_loop, name="didlink-server", daemon=True)
        self._thread.start()
        logger.info("DID Link server listening", address=format_address(self.address))
        return self.address

    def serve_forever(self) -> None:
        if self._listener is None:
            self.start()
        try:
            while not self._stopping.is_set():
                self._stopping.wait(0.5)
        except KeyboardInterrupt:
            logger.info("DID Link server interrupted")
        finally:
            self.stop()

    def _accept_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, peer = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(
                target=self._serve_connection, args=(sock, peer), name="didlink-session", daemon=True
            ).start()

    def _serve_connection(self, sock: socket.socket, peer: Tuple[str, int]) -> None:
        try:
            try:
                session = accept(sock, self.config, peer)
            except OSError as exc:
                raise TransportError(f"connection from {format_address(peer)} failed: {exc}") from exc
            except SSL.Error as exc:
                raise _alert_rejection(exc) from exc
        except DidLinkError as exc:
            logger.info("Session refused", peer=format_address(peer), error=exc.code, reason=getattr(exc, "reason", None))
            with self._lock:
                self.refused += 1
                self.failures.append(exc)
            if self.on_failure is not None:
                self.on_failure(exc)
            sock.close()
            return
        with self._lock:
            self.accepted += 1
            self.sessions.append(session)
        try:
            if self.on_session is not None:
                self.on_session(session)
            if self.handler is not None:
                self.handler(session)
        except (DidLinkError, SSL.Error, OSError) as exc:
            logger.info("Session ended with error", peer=format_address(peer), error=str(exc))
        finally:
            session.close()
            sock.close()
            with self._lock:
                self.sessions.remove(session)

    def stop(self) -> None:
        self._stopping.set()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(timeout=2)

    def __enter__(self) -> "DidLinkServer":
        if self._listener is None:
            self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.stop()
