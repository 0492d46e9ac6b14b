"""
Mutual identification over an established DID Link session.

Each side verifies its peer on one flow and proves itself on the other:
the client verifies the server on flow 0, the server verifies the client on
flow 1. Per flow the verifier sends a presentation request, the prover
answers with a presentation (or a peer_refused error), the verifier reports
a result and closes the flow with identification_complete. A verifier with
nothing to ask closes its flow at once.
"""

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Optional

from pydantic import BaseModel

from ..did_core import DidField, Resolver
from ..errors import (
    DidLinkError,
    MalformedPayload,
    PeerRefused,
    ProtocolViolation,
    Timeout,
    VerificationFailed,
    error_from_dict,
)
from ..identity import Identity
from ..monitoring import get_logger
from ..negotiation import ServerAuthMode
from ..vc_sdjwt import (
    HolderBindingRequest,
    SdJwtCredential,
    StatusChecker,
    VerificationPolicy,
    derive_presentation,
    verify_presentation,
)
from .frames import Flow, Frame, FrameType, json_frame
from .presentation_exchange import (
    PresentationRequest,
    RequestTemplate,
    build_request,
    build_submission,
    claims_to_disclose,
    parse_submission,
    select_credential,
)

if TYPE_CHECKING:
    from ..channel.session import SecureSession

logger = get_logger(__name__)

DEFAULT_IDENTIFICATION_TIMEOUT = 15.0


class IdentificationMode(str, Enum):
    CLIENT_FIRST = "client_first"
    SERVER_FIRST = "server_first"
    PARALLEL = "parallel"


@dataclass
class IdentificationConfig:
    credentials: List[SdJwtCredential] = field(default_factory=list)
    holder: Optional[Identity] = None
    request: Optional[RequestTemplate] = None
    mode: IdentificationMode = IdentificationMode.PARALLEL
    timeout: float = DEFAULT_IDENTIFICATION_TIMEOUT
    resolver: Optional[Resolver] = None
    status_checker: Optional[StatusChecker] = None
    always_bind: bool = False
    tolerate_refusal: bool = False


class IdentificationResult(BaseModel):
    peer_claims: Dict[str, Any]
    peer_subject_did: DidField
    holder_binding_checked: bool
    duration: float
    issuer: str


class IdentificationOutcome(BaseModel):
    """Both flows as seen from one side."""

    mode: IdentificationMode
    verified: Optional[IdentificationResult] = None
    peer_refused: bool = False
    presented: bool = False
    refused_to_present: bool = False
    peer_verdict: Optional[Dict[str, Any]] = None
    duration: float = 0.0

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


class _Verifier(str, Enum):
    IDLE = "idle"
    REQUESTED = "requested"
    DONE = "done"


class _Prover(str, Enum):
    WAITING = "waiting"
    PRESENTED = "presented"
    REFUSED = "refused"
    GOT_RESULT = "got_result"
    DONE = "done"


def _flows(session: "SecureSession"):
    from ..channel.session import Role

    if session.role is Role.CLIENT:
        return Flow.CLIENT_VERIFIES_SERVER, Flow.SERVER_VERIFIES_CLIENT
    return Flow.SERVER_VERIFIES_CLIENT, Flow.CLIENT_VERIFIES_SERVER


class _Exchange:
    def __init__(self, session: "SecureSession", config: IdentificationConfig, resolver: Optional[Resolver]):
        self.session = session
        self.config = config
        self.resolver = config.resolver or resolver
        self.verify_flow, self.prove_flow = _flows(session)
        self.started = session.identification_started_at or time.perf_counter()
        self.request: Optional[PresentationRequest] = session.pending_request
        self.request_sent_at = self.started
        self.verifier = _Verifier.REQUESTED if self.request is not None else _Verifier.IDLE
        self.prover = _Prover.WAITING
        self.outcome = IdentificationOutcome(mode=config.mode)
        self.failure: Optional[VerificationFailed] = None

    @property
    def done(self) -> bool:
        return self.verifier is _Verifier.DONE and self.prover is _Prover.DONE

    def _send(self, frame_type: FrameType, flow: Flow, body: Dict[str, Any]) -> None:
        self.session.send_frame(json_frame(frame_type, flow, body))

    def _violation(self, flow_id: int, message: str) -> ProtocolViolation:
        violation = ProtocolViolation(message, details={"flow_id": flow_id})
        self.session.send_error(flow_id if flow_id in (0, 1) else self.verify_flow, violation)
        return violation

    # Verifier side

    def verifier_may_start(self) -> bool:
        mode = self.config.mode
        if mode is IdentificationMode.PARALLEL:
            return True
        first = Flow.SERVER_VERIFIES_CLIENT if mode is IdentificationMode.CLIENT_FIRST else Flow.CLIENT_VERIFIES_SERVER
        if self.verify_flow == first:
            return True
        return self.prover is _Prover.DONE

    def start_verifier(self) -> None:
        if self.verifier is not _Verifier.IDLE or not self.verifier_may_start():
            return
        template = self.config.request
        if template is None:
            self._send(FrameType.IDENTIFICATION_COMPLETE, self.verify_flow, {})
            self.verifier = _Verifier.DONE
            return
        local = self.session.local_did
        self.request = build_request(template, local.full if local is not None else self.session.endpoint)
        self.request_sent_at = time.perf_counter()
        self._send(FrameType.PRESENTATION_REQUEST, self.verify_flow, self.request.to_payload())
        self.verifier = _Verifier.REQUESTED

    def on_presentation(self, body: Dict[str, Any]) -> None:
        request = self.request
        peer_did = self.session.peer_did
        try:
            if self.resolver is None:
                raise VerificationFailed("no resolver configured to verify presentations")
            vp = parse_submission(body, request)
            policy = VerificationPolicy(
                expected_subject=peer_did.full if peer_did is not None else None,
                accepted_issuers=request.accepted_issuers,
                nonce=request.nonce,
                audience=request.audience,
                required_claims=request.required_claims,
            )
            verified = verify_presentation(vp, policy, self.resolver, self.config.status_checker)
        except VerificationFailed as exc:
            self.failure = exc
            self._send(FrameType.RESULT, self.verify_flow, {"ok": False, "error": exc.code, "message": exc.message})
        else:
            self.outcome.verified = IdentificationResult(
                peer_claims=verified.claims,
                peer_subject_did=verified.subject,
                holder_binding_checked=verified.holder_binding_checked,
                duration=(time.perf_counter() - self.request_sent_at) * 1000.0,
                issuer=verified.issuer,
            )
            self._send(FrameType.RESULT, self.verify_flow, {"ok": True, "claims": sorted(verified.claims)})
        self._send(FrameType.IDENTIFICATION_COMPLETE, self.verify_flow, {})
        self.verifier = _Verifier.DONE

    def on_refusal(self, body: Dict[str, Any]) -> None:
        self.outcome.peer_refused = True
        logger.info("Peer refused to present", flow=int(self.verify_flow), message=body.get("message"))
        self._send(FrameType.IDENTIFICATION_COMPLETE, self.verify_flow, {})
        self.verifier = _Verifier.DONE

    # Prover side

    def on_request(self, body: Dict[str, Any]) -> None:
        try:
            request = PresentationRequest.from_payload(body)
        except MalformedPayload as exc:
            raise self._violation(self.prove_flow, f"bad presentation request: {exc.message}") from exc
        refusal = self._refusal_reason(request)
        if refusal is not None:
            self._send(FrameType.ERROR, self.prove_flow, {"code": PeerRefused.code, "message": refusal})
            self.outcome.refused_to_present = True
            self.prover = _Prover.REFUSED
            return
        credential = select_credential(self.config.credentials, request)
        local = self.session.local_did
        binding = None
        if self.config.always_bind or local is None or credential.subject != local:
            holder = self.config.holder
            if holder is not None and holder.did == credential.subject:
                binding = HolderBindingRequest(
                    key=holder.key, key_id=holder.key_id, nonce=request.nonce, audience=request.audience
                )
        presentation = derive_presentation(credential, claims_to_disclose(credential, request), binding)
        self._send(FrameType.PRESENTATION, self.prove_flow, build_submission(request, presentation))
        self.outcome.presented = True
        self.prover = _Prover.PRESENTED

    def _refusal_reason(self, request: PresentationRequest) -> Optional[str]:
        if not self.config.credentials:
            return "no presentable credentials"
        peer_did = self.session.peer_did
        if peer_did is not None and request.audience != peer_did.full:
            return f"request audience {request.audience} is not the authenticated peer"
        return None

    def on_result(self, body: Dict[str, Any]) -> None:
        self.outcome.peer_verdict = body
        self.prover = _Prover.GOT_RESULT

    # Dispatch

    def handle(self, frame: Frame) -> None:
        kind = frame.known_type
        flow = frame.flow_id
        if kind is None:
            raise self._violation(flow, f"unknown frame type 0x{frame.frame_type:02X}")
        if flow not in (Flow.CLIENT_VERIFIES_SERVER, Flow.SERVER_VERIFIES_CLIENT):
            raise self._violation(flow, f"unknown flow id {flow}")
        try:
            body = frame.json()
        except MalformedPayload as exc:
            raise self._violation(flow, exc.message) from exc

        if flow == self.verify_flow:
            if kind is FrameType.PRESENTATION and self.verifier is _Verifier.REQUESTED:
                return self.on_presentation(body)
            if kind is FrameType.ERROR and self.verifier is _Verifier.REQUESTED and body.get("code") == PeerRefused.code:
                return self.on_refusal(body)
        else:
            if kind is FrameType.PRESENTATION_REQUEST and self.prover is _Prover.WAITING:
                return self.on_request(body)
            if kind is FrameType.RESULT and self.prover is _Prover.PRESENTED:
                return self.on_result(body)
            if kind is FrameType.IDENTIFICATION_COMPLETE and self.prover in (
                _Prover.WAITING,
                _Prover.REFUSED,
                _Prover.GOT_RESULT,
            ):
                self.prover = _Prover.DONE
                return None
        if kind is FrameType.ERROR:
            raise error_from_dict({"error": body.get("code", ProtocolViolation.code), **{k: v for k, v in body.items() if k != "code"}})
        raise self._violation(flow, f"unexpected {kind.name.lower()} frame on flow {flow}")


def run_identification(
    session: "SecureSession",
    config: IdentificationConfig,
    resolver: Optional[Resolver] = None,
) -> Optional[IdentificationResult]:
    """Run both identification flows to completion.

    Returns what this side verified about its peer (None when it asked for
    nothing). Verification failures and refusals are raised once both flows
    have finished, so the peer always receives its result.
    """
    exchange = _Exchange(session, config, resolver)
    deadline = time.monotonic() + config.timeout
    previous_timeout = session.transport.sock.gettimeout()
    try:
        exchange.start_verifier()
        while not exchange.done:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout(f"identification did not finish within {config.timeout}s")
            session.set_timeout(remaining)
            exchange.handle(session.read_frame())
            exchange.start_verifier()
    finally:
        if not session.closed:
            session.set_timeout(previous_timeout)
        session.pending_request = None

    outcome = exchange.outcome
    outcome.duration = (time.perf_counter() - exchange.started) * 1000.0
    session.identification = outcome
    if outcome.peer_refused:
        _drop_vc_mode(session)
    logger.info(
        "Identification finished",
        role=session.role.value,
        mode=config.mode.value,
        duration_ms=round(outcome.duration, 3),
        verified=outcome.verified is not None,
        peer_refused=outcome.peer_refused,
        presented=outcome.presented,
        error=exchange.failure.code if exchange.failure else None,
    )
    if exchange.failure is not None:
        raise exchange.failure
    if outcome.peer_refused and not config.tolerate_refusal:
        raise PeerRefused("peer has no credential to present", details={"flow_id": int(exchange.verify_flow)})
    return outcome.verified


def _drop_vc_mode(session: "SecureSession") -> None:
    """A server that refused to present authenticated with its DID only."""
    from ..channel.session import Role
    from ..channel.verify import PeerAuthMode

    agreement = session.negotiated
    if session.role is not Role.CLIENT or agreement is None or not agreement.server_presents_credentials:
        return
    plain = ServerAuthMode.DID_DEFAULT if agreement.server_auth_mode is ServerAuthMode.DID_VC_DEFAULT else ServerAuthMode.DID
    session.negotiated = agreement.model_copy(update={"server_auth_mode": plain})
    if session.peer is not None and session.peer.mode is PeerAuthMode.DID_PENDING_VC:
        session.peer = session.peer.model_copy(update={"mode": PeerAuthMode.DID})
