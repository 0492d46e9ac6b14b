"""
Peer certificate verification for DID Link channels.

The TLS stack proves possession of the certificate key (CertificateVerify);
this module decides what the certificate is worth: a DID bound to a resolved
document, a chain to a trusted root, or a self-certified derived identifier.
"""

from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FuturesTimeout
from datetime import datetime
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Union

from cryptography import x509
from cryptography.hazmat.primitives.serialization import Encoding
from OpenSSL import crypto
from pydantic import BaseModel, ConfigDict, model_validator

from ..cert_kit import (
    BindingVerdict,
    chain_failure_reason,
    extract_did,
    has_did,
    is_derived_id_certificate,
    validate_chain,
    validate_did_binding,
    verifies_self_signature,
    within_validity,
)
from ..codec import utc_now
from ..did_core import CachePolicy, DidField, ResolutionSource, Resolver
from ..errors import AmbiguousDid, BindingInvalid, DidLinkError, MalformedDid, ResolutionFailed
from ..monitoring import get_logger

logger = get_logger(__name__)


class PeerAuthMode(str, Enum):
    ANONYMOUS = "anonymous"
    CERT_CHAIN = "cert_chain"
    DID = "did"
    DID_PENDING_VC = "did_pending_vc"
    DERIVED_ID = "derived_id"


class ResolutionOutcome(str, Enum):
    CACHE = "cache"
    METHOD_HANDLER = "method_handler"
    NONE_NEEDED = "none_needed"


class ResolutionMode(str, Enum):
    SEQUENTIAL = "sequential"
    PARALLEL = "parallel"


class PeerAuthResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: PeerAuthMode
    peer_did: Optional[DidField] = None
    binding: Optional[BindingVerdict] = None
    resolution_source: Optional[ResolutionOutcome] = None
    handshake_duration: float = 0.0
    resolve_duration: float = 0.0
    subject: Optional[str] = None

    @model_validator(mode="after")
    def _check(self) -> "PeerAuthResult":
        if self.mode in (PeerAuthMode.DID, PeerAuthMode.DID_PENDING_VC):
            if self.peer_did is None or self.binding is None or not self.binding.valid:
                raise ValueError("DID modes need a peer DID and a valid binding")
        return self

    def to_json_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def verify_peer(
    certificates: Sequence[x509.Certificate],
    resolver: Optional[Resolver],
    policy: Optional[CachePolicy] = None,
    now: Optional[datetime] = None,
    trust_roots: Sequence[Union[bytes, x509.Certificate]] = (),
    expected_name: Optional[str] = None,
    strict: bool = False,
    agreement=None,
) -> PeerAuthResult:
    """Classify and validate the peer's certificate list (leaf first)."""
    now = now or utc_now()
    if not certificates:
        return PeerAuthResult(mode=PeerAuthMode.ANONYMOUS, resolution_source=ResolutionOutcome.NONE_NEEDED)
    leaf = certificates[0]
    subject = leaf.subject.rfc4514_string()

    if has_did(leaf):
        return _verify_did_peer(leaf, resolver, policy, now, strict, agreement, subject)
    try:
        extract_did(leaf)
    except (AmbiguousDid, MalformedDid) as exc:
        raise BindingInvalid("malformed", f"peer certificate DID unusable: {exc.message}") from exc
    except DidLinkError:
        pass

    if is_derived_id_certificate(leaf):
        if not verifies_self_signature(leaf):
            raise BindingInvalid("bad_self_signature", "derived-identifier certificate signature invalid")
        if not within_validity(leaf, now):
            raise BindingInvalid("expired_certificate", "derived-identifier certificate expired")
        return PeerAuthResult(
            mode=PeerAuthMode.DERIVED_ID, resolution_source=ResolutionOutcome.NONE_NEEDED, subject=subject
        )

    reason = validate_chain(leaf, list(certificates[1:]), trust_roots, now, expected_name)
    if reason == "name_mismatch":
        raise BindingInvalid(reason, f"certificate is not valid for {expected_name}")
    if reason is not None:
        raise BindingInvalid(reason, f"peer certificate chain rejected: {reason}")
    return PeerAuthResult(
        mode=PeerAuthMode.CERT_CHAIN, resolution_source=ResolutionOutcome.NONE_NEEDED, subject=subject
    )


def _verify_did_peer(leaf, resolver, policy, now, strict, agreement, subject) -> PeerAuthResult:
    did = extract_did(leaf)
    if resolver is None:
        raise ResolutionFailed(f"no resolver configured to check {did.full}", details={"did": did.full})
    try:
        resolution = resolver.resolve(did, policy)
    except DidLinkError as exc:
        raise ResolutionFailed(
            f"cannot resolve peer DID {did.full}: {exc.message}",
            details={"did": did.full, "cause": exc.code},
        ) from exc
    der = leaf.public_bytes(Encoding.DER)
    verdict = validate_did_binding(der, resolution.document, now, strict)
    if not verdict.valid:
        raise BindingInvalid(
            verdict.reason.value,
            f"certificate is not bound to {did.full}: {verdict.reason.value}",
            details={"did": did.full},
        )
    cached = resolution.source is ResolutionSource.CACHE
    mode = PeerAuthMode.DID
    if agreement is not None and getattr(agreement, "server_presents_credentials", False):
        mode = PeerAuthMode.DID_PENDING_VC
    return PeerAuthResult(
        mode=mode,
        peer_did=did,
        binding=verdict,
        resolution_source=ResolutionOutcome.CACHE if cached else ResolutionOutcome.METHOD_HANDLER,
        resolve_duration=0.0 if cached else resolution.resolved_in,
        subject=subject,
    )


class VerificationHook:
    """State behind the OpenSSL verify callback for one connection.

    DID and derived-identifier leaves are judged here (OpenSSL's own verdict
    on a self-issued certificate is ignored); CA chains must satisfy OpenSSL
    and the chain check. In parallel mode the DID resolution is started here
    and joined after the handshake.
    """

    _executor: Optional[ThreadPoolExecutor] = None

    def __init__(
        self,
        resolver: Optional[Resolver],
        policy: Optional[CachePolicy],
        trust_roots: Sequence[x509.Certificate],
        mode: ResolutionMode,
        expected_name: Optional[str] = None,
        strict: bool = False,
    ):
        self.resolver = resolver
        self.policy = policy
        self.trust_roots = list(trust_roots)
        self.mode = mode
        self.expected_name = expected_name
        self.strict = strict
        self.certificates: Dict[int, x509.Certificate] = {}
        self.openssl_errors: List[int] = []
        self.failure: Optional[DidLinkError] = None
        self.result: Optional[PeerAuthResult] = None
        self.future: Optional[Future] = None
        self._leaf_decided: Optional[bool] = None
        self._leaf_is_chain = False

    @classmethod
    def executor(cls) -> ThreadPoolExecutor:
        if cls._executor is None:
            cls._executor = ThreadPoolExecutor(max_workers=16, thread_name_prefix="did-verify")
        return cls._executor

    def __call__(self, conn, cert: crypto.X509, errno: int, depth: int, ok: int) -> bool:
        self.certificates[depth] = cert.to_cryptography()
        if depth > 0:
            if not ok:
                self.openssl_errors.append(errno)
                return self._chain_failure(errno)
            return True
        if self._leaf_decided is not None:
            if self._leaf_is_chain and not ok:
                return self._chain_failure(errno)
            return self._leaf_decided
        leaf = self.certificates[0]
        self._leaf_is_chain = not (has_did(leaf) or is_derived_id_certificate(leaf))
        if not self._leaf_is_chain:
            decided = self._decide_self_issued(leaf)
        elif not ok:
            decided = self._chain_failure(errno)
        else:
            decided = self._run(self._chain())
        self._leaf_decided = decided
        return decided

    def _chain_failure(self, errno: int) -> bool:
        reason = chain_failure_reason(errno)
        return self._fail(BindingInvalid(reason, f"peer certificate chain rejected: {reason}"))

    def _chain(self) -> List[x509.Certificate]:
        return [self.certificates[d] for d in sorted(self.certificates)]

    def _decide_self_issued(self, leaf: x509.Certificate) -> bool:
        if self.mode is ResolutionMode.PARALLEL and has_did(leaf):
            self.future = self.executor().submit(self._verify, [leaf])
            return True
        return self._run([leaf])

    def _verify(self, certificates: List[x509.Certificate]) -> PeerAuthResult:
        return verify_peer(
            certificates,
            self.resolver,
            self.policy,
            trust_roots=self.trust_roots,
            expected_name=self.expected_name,
            strict=self.strict,
        )

    def _run(self, certificates: List[x509.Certificate]) -> bool:
        try:
            self.result = self._verify(certificates)
        except DidLinkError as exc:
            return self._fail(exc)
        except Exception as exc:
            return self._fail(BindingInvalid("malformed", f"peer certificate unusable: {exc}"))
        return True

    def _fail(self, exc: DidLinkError) -> bool:
        self.failure = exc
        logger.info("Peer certificate rejected", error=exc.code, reason=getattr(exc, "reason", None))
        return False

    def join(self, timeout: float) -> PeerAuthResult:
        """Outcome of peer verification; raises the stored failure."""
        if self.future is not None:
            try:
                self.result = self.future.result(timeout=timeout)
            except DidLinkError as exc:
                self.failure = exc
            except FuturesTimeout:
                self.failure = ResolutionFailed(f"peer DID resolution exceeded {timeout}s")
            except Exception as exc:
                self.failure = BindingInvalid("malformed", f"peer certificate unusable: {exc}")
            finally:
                self.future = None
        if self.failure is not None:
            raise self.failure
        if self.result is None:
            return PeerAuthResult(mode=PeerAuthMode.ANONYMOUS, resolution_source=ResolutionOutcome.NONE_NEEDED)
        return self.result
