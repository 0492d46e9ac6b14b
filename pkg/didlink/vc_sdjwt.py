"""
SD-JWT style verifiable credentials bound to DIDs.

Compact form: three dot-separated base64url segments
  1. canonical {"payload": <signed body>, "signature": <b64url>, "kid": <fragment>}
  2. canonical JSON list of disclosure strings
  3. canonical holder binding object, or empty
A disclosure string is base64url(canonical [salt, name, value]); its digest is
base64url(sha256(disclosure string)). The signed body lists the digests in `_sd`.
"""

import hashlib
import json
import secrets
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Protocol, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from .cert_kit import CLOCK_SKEW, KeyPair, verify_signature
from .codec import (
    b64url_decode_strict,
    b64url_encode,
    canonical_json,
    epoch_seconds,
    from_epoch_seconds,
    utc_now,
)
from .did_core import Did, DidDocument, Purpose, Resolver, parse_did
from .errors import (
    BadIssuerSignature,
    CredentialResolutionFailed,
    DidLinkError,
    DigestMismatch,
    EmptyClaims,
    Expired,
    HolderBindingInvalid,
    HolderBindingRequired,
    IssuerNotAccepted,
    MalformedPresentation,
    MissingClaims,
    Revoked,
    UnknownClaim,
)
from .monitoring import get_logger

logger = get_logger(__name__)

SD_ALG = "sha-256"
SALT_BYTES = 16
DEFAULT_CREDENTIAL_DAYS = 365
HOLDER_BINDING_MAX_AGE = timedelta(minutes=5)


class StatusRef(BaseModel):
    model_config = ConfigDict(frozen=True)

    list_id: str = Field(min_length=1)
    index: int = Field(ge=0)


class CredentialStatus(str, Enum):
    VALID = "valid"
    EXPIRED = "expired"
    REVOKED = "revoked"


@dataclass(frozen=True)
class Disclosure:
    salt: str
    name: str
    value: Any
    encoded: str

    @classmethod
    def create(cls, name: str, value: Any) -> "Disclosure":
        salt = b64url_encode(secrets.token_bytes(SALT_BYTES))
        return cls(salt, name, value, b64url_encode(canonical_json([salt, name, value])))

    @classmethod
    def parse(cls, encoded: str) -> "Disclosure":
        try:
            raw = b64url_decode_strict(encoded)
            salt, name, value = json.loads(raw)
        except (ValueError, TypeError) as exc:
            raise MalformedPresentation(f"unreadable disclosure: {exc}") from exc
        if not isinstance(salt, str) or not isinstance(name, str):
            raise MalformedPresentation("disclosure salt and name must be strings")
        if canonical_json([salt, name, value]) != raw:
            raise MalformedPresentation("disclosure is not canonically encoded")
        return cls(salt, name, value, encoded)

    @property
    def digest(self) -> str:
        return disclosure_digest(self.encoded)


def disclosure_digest(encoded: str) -> str:
    return b64url_encode(hashlib.sha256(encoded.encode("ascii")).digest())


class HolderBinding(BaseModel):
    """Holder's proof of control over the subject key for one verifier request."""

    model_config = ConfigDict(frozen=True)

    nonce: str
    aud: str
    iat: int
    sd_hash: str
    kid: str
    sig: str

    def signing_input(self) -> bytes:
        return canonical_json({"nonce": self.nonce, "aud": self.aud, "iat": self.iat, "sd_hash": self.sd_hash})


@dataclass(frozen=True)
class HolderBindingRequest:
    key: KeyPair
    key_id: str
    nonce: str
    audience: str


def _decode_segment(segment: str, what: str) -> Any:
    try:
        raw = b64url_decode_strict(segment)
        value = json.loads(raw)
    except (ValueError, TypeError) as exc:
        raise MalformedPresentation(f"unreadable {what} segment: {exc}") from exc
    if canonical_json(value) != raw:
        raise MalformedPresentation(f"{what} segment is not canonically encoded")
    return value


class SdJwtCredential(BaseModel):
    """Issuer-signed body plus the disclosures for every claim."""

    model_config = ConfigDict(frozen=True)

    body: Dict[str, Any]
    signature: str
    kid: str
    disclosures: Tuple[str, ...]

    @property
    def issuer(self) -> Did:
        return parse_did(self.body["iss"])

    @property
    def subject(self) -> Did:
        return parse_did(self.body["sub"])

    @property
    def claim_digests(self) -> List[str]:
        return list(self.body.get("_sd", []))

    @property
    def not_before(self) -> datetime:
        return from_epoch_seconds(self.body["nbf"])

    @property
    def not_after(self) -> datetime:
        return from_epoch_seconds(self.body["exp"])

    @property
    def status_ref(self) -> Optional[StatusRef]:
        status = self.body.get("status")
        return StatusRef(**status) if status else None

    @property
    def claims(self) -> Dict[str, Any]:
        return {d.name: d.value for d in map(Disclosure.parse, self.disclosures)}

    def issuer_segment(self) -> str:
        return b64url_encode(
            canonical_json({"payload": self.body, "signature": self.signature, "kid": self.kid})
        )

    def serialize(self) -> str:
        return f"{self.issuer_segment()}.{b64url_encode(canonical_json(list(self.disclosures)))}."

    @classmethod
    def parse(cls, compact: str) -> "SdJwtCredential":
        presentation = Presentation.parse(compact)
        return cls(
            body=presentation.body,
            signature=presentation.signature,
            kid=presentation.kid,
            disclosures=presentation.disclosures,
        )


class Presentation(BaseModel):
    """A credential body with a subset of its disclosures and an optional holder binding."""

    model_config = ConfigDict(frozen=True)

    body: Dict[str, Any]
    signature: str
    kid: str
    disclosures: Tuple[str, ...]
    holder_binding: Optional[HolderBinding] = None

    @property
    def issuer(self) -> Did:
        return parse_did(self.body["iss"])

    @property
    def subject(self) -> Did:
        return parse_did(self.body["sub"])

    @property
    def presented_at(self) -> Optional[datetime]:
        return from_epoch_seconds(self.holder_binding.iat) if self.holder_binding else None

    def unbound_prefix(self) -> str:
        issuer = b64url_encode(
            canonical_json({"payload": self.body, "signature": self.signature, "kid": self.kid})
        )
        return f"{issuer}.{b64url_encode(canonical_json(list(self.disclosures)))}"

    def sd_hash(self) -> str:
        return b64url_encode(hashlib.sha256(self.unbound_prefix().encode("ascii")).digest())

    def serialize(self) -> str:
        binding = ""
        if self.holder_binding is not None:
            binding = b64url_encode(canonical_json(self.holder_binding.model_dump()))
        return f"{self.unbound_prefix()}.{binding}"

    @classmethod
    def parse(cls, compact: str) -> "Presentation":
        if not isinstance(compact, str):
            raise MalformedPresentation("presentation must be a string")
        parts = compact.split(".")
        if len(parts) != 3:
            raise MalformedPresentation(f"expected 3 segments, got {len(parts)}")
        issuer = _decode_segment(parts[0], "issuer")
        disclosures = _decode_segment(parts[1], "disclosure")
        binding = _decode_segment(parts[2], "holder binding") if parts[2] else None
        if not isinstance(issuer, dict) or set(issuer) != {"payload", "signature", "kid"}:
            raise MalformedPresentation("issuer segment must hold payload, signature and kid")
        if not isinstance(disclosures, list) or not all(isinstance(d, str) for d in disclosures):
            raise MalformedPresentation("disclosure segment must be a list of strings")
        body = issuer["payload"]
        if not isinstance(body, dict) or not isinstance(issuer["signature"], str) or not isinstance(issuer["kid"], str):
            raise MalformedPresentation("issuer segment has wrong field types")
        for field in ("iss", "sub", "_sd", "nbf", "exp"):
            if field not in body:
                raise MalformedPresentation(f"signed body lacks {field}")
        try:
            parse_did(body["iss"])
            parse_did(body["sub"])
            holder_binding = HolderBinding.model_validate(binding) if binding is not None else None
        except (DidLinkError, ValueError) as exc:
            raise MalformedPresentation(f"invalid presentation: {exc}") from exc
        return cls(
            body=body,
            signature=issuer["signature"],
            kid=issuer["kid"],
            disclosures=tuple(disclosures),
            holder_binding=holder_binding,
        )


class VerifiedClaims(BaseModel):
    claims: Dict[str, Any]
    issuer: str
    subject: str
    status: CredentialStatus
    holder_binding_checked: bool = False


class VerificationPolicy(BaseModel):
    """What the verifier expects of a presentation."""

    model_config = ConfigDict(frozen=True)

    expected_subject: Optional[str] = None
    accepted_issuers: Tuple[str, ...] = ()
    nonce: Optional[str] = None
    audience: Optional[str] = None
    required_claims: Tuple[str, ...] = ()
    now: Optional[datetime] = None
    reject_unusable: bool = True


class StatusChecker(Protocol):
    def get_status(self, list_id: str, index: int) -> bool: ...


def issue(
    issuer_key: KeyPair,
    issuer: Union[Did, str],
    subject: Union[Did, str],
    claims: Dict[str, Any],
    validity: Optional[Tuple[datetime, datetime]] = None,
    status_ref: Optional[StatusRef] = None,
    key_id: Optional[str] = None,
    issuer_document: Optional[DidDocument] = None,
) -> SdJwtCredential:
    """Sign a credential committing to one salted digest per claim."""
    if not claims:
        raise EmptyClaims("a credential needs at least one claim")
    issuer, subject = parse_did(issuer), parse_did(subject)
    if issuer_document is not None:
        key_id = key_id or _assertion_key_id(issuer_document, issuer_key)
    if key_id is None:
        raise BadIssuerSignature("issuer key id unknown; pass key_id or issuer_document")
    now = utc_now()
    not_before, not_after = validity or (now, now + timedelta(days=DEFAULT_CREDENTIAL_DAYS))
    disclosures = [Disclosure.create(name, value) for name, value in claims.items()]
    body: Dict[str, Any] = {
        "iss": issuer.full,
        "sub": subject.full,
        "_sd": sorted(d.digest for d in disclosures),
        "_sd_alg": SD_ALG,
        "iat": epoch_seconds(now),
        "nbf": epoch_seconds(not_before),
        "exp": epoch_seconds(not_after),
    }
    if status_ref is not None:
        body["status"] = status_ref.model_dump()
    signature = b64url_encode(issuer_key.sign(canonical_json(body)))
    logger.info("Credential issued", issuer=issuer.full, subject=subject.full, claims=len(disclosures))
    return SdJwtCredential(
        body=body, signature=signature, kid=key_id.split("#")[-1], disclosures=tuple(d.encoded for d in disclosures)
    )


def _assertion_key_id(document: DidDocument, key: KeyPair) -> str:
    for vm in document.methods_for(Purpose.ASSERTION):
        if vm.public_key == key.public_key:
            return vm.id
    raise BadIssuerSignature(
        f"key is not an assertion key of {document.id.full}", details={"issuer": document.id.full}
    )


def derive_presentation(
    credential: SdJwtCredential,
    disclose: Iterable[str],
    holder_binding: Optional[HolderBindingRequest] = None,
) -> Presentation:
    """Keep only the disclosures named in `disclose`, optionally binding to a verifier nonce."""
    wanted = list(dict.fromkeys(disclose))
    parsed = {d.name: d for d in map(Disclosure.parse, credential.disclosures)}
    unknown = [name for name in wanted if name not in parsed]
    if unknown:
        raise UnknownClaim(f"claims not in credential: {', '.join(unknown)}", details={"claims": unknown})
    presentation = Presentation(
        body=credential.body,
        signature=credential.signature,
        kid=credential.kid,
        disclosures=tuple(parsed[name].encoded for name in wanted),
    )
    if holder_binding is None:
        return presentation
    binding = HolderBinding(
        nonce=holder_binding.nonce,
        aud=holder_binding.audience,
        iat=epoch_seconds(utc_now()),
        sd_hash=presentation.sd_hash(),
        kid=holder_binding.key_id.split("#")[-1],
        sig="",
    )
    binding = binding.model_copy(update={"sig": b64url_encode(holder_binding.key.sign(binding.signing_input()))})
    return presentation.model_copy(update={"holder_binding": binding})


def _resolve(resolver: Resolver, did: Did) -> DidDocument:
    try:
        return resolver.resolve(did).document
    except DidLinkError as exc:
        raise CredentialResolutionFailed(
            f"cannot resolve {did.full}: {exc.code}", details={"did": did.full, "cause": exc.code}
        ) from exc


def _signature_bytes(text: str) -> bytes:
    try:
        return b64url_decode_strict(text)
    except ValueError:
        return b""


def _check_issuer_signature(presentation: Presentation, document: DidDocument) -> None:
    vm = document.method(presentation.kid)
    if vm is None or Purpose.ASSERTION not in vm.purpose:
        raise BadIssuerSignature(
            f"{presentation.kid} is not a current assertion key of {document.id.full}",
            details={"issuer": document.id.full, "kid": presentation.kid},
        )
    if not verify_signature(
        vm.key_type, vm.public_key, _signature_bytes(presentation.signature), canonical_json(presentation.body)
    ):
        raise BadIssuerSignature("issuer signature does not verify", details={"issuer": document.id.full})


def _check_disclosures(presentation: Presentation) -> Dict[str, Any]:
    digests = presentation.body.get("_sd")
    if not isinstance(digests, list):
        raise MalformedPresentation("_sd must be a list")
    if presentation.body.get("_sd_alg", SD_ALG) != SD_ALG:
        raise MalformedPresentation(f"unsupported _sd_alg {presentation.body.get('_sd_alg')!r}")
    committed = set(digests)
    claims: Dict[str, Any] = {}
    seen = set()
    for encoded in presentation.disclosures:
        disclosure = Disclosure.parse(encoded)
        digest = disclosure.digest
        if digest not in committed:
            raise DigestMismatch(f"disclosure for {disclosure.name!r} is not committed by the issuer")
        if digest in seen or disclosure.name in claims:
            raise DigestMismatch(f"disclosure for {disclosure.name!r} appears twice")
        seen.add(digest)
        claims[disclosure.name] = disclosure.value
    return claims


def _check_holder_binding(
    presentation: Presentation, policy: VerificationPolicy, resolver: Resolver, now: datetime
) -> None:
    binding = presentation.holder_binding
    subject = presentation.subject
    if binding.sd_hash != presentation.sd_hash():
        raise HolderBindingInvalid("holder binding covers a different presentation")
    if policy.nonce is not None and binding.nonce != policy.nonce:
        raise HolderBindingInvalid("holder binding nonce does not match the request")
    if policy.audience is not None and binding.aud != policy.audience:
        raise HolderBindingInvalid("holder binding audience does not match the verifier")
    issued = from_epoch_seconds(binding.iat)
    if issued > now + CLOCK_SKEW or now - issued > HOLDER_BINDING_MAX_AGE + CLOCK_SKEW:
        raise HolderBindingInvalid("holder binding is not fresh")
    document = _resolve(resolver, subject)
    vm = document.method(binding.kid)
    if vm is None or Purpose.AUTHENTICATION not in vm.purpose:
        raise HolderBindingInvalid(f"{binding.kid} is not an authentication key of {subject.full}")
    if not verify_signature(vm.key_type, vm.public_key, _signature_bytes(binding.sig), binding.signing_input()):
        raise HolderBindingInvalid("holder binding signature does not verify")


def check_status(status_ref: StatusRef, checker: StatusChecker) -> CredentialStatus:
    """Look up the revocation bit of a credential on the registry."""
    revoked = checker.get_status(status_ref.list_id, status_ref.index)
    return CredentialStatus.REVOKED if revoked else CredentialStatus.VALID


def verify_presentation(
    presentation: Union[Presentation, str],
    policy: VerificationPolicy,
    resolver: Resolver,
    status_checker: Optional[StatusChecker] = None,
) -> VerifiedClaims:
    """Verify issuer signature, disclosures, validity, status and the holder-binding rule.

    With `policy.reject_unusable` off, expired or revoked credentials come back
    with that status instead of raising.
    """
    if isinstance(presentation, str):
        presentation = Presentation.parse(presentation)
    now = policy.now or utc_now()
    issuer = presentation.issuer
    if policy.accepted_issuers and issuer.full not in policy.accepted_issuers:
        raise IssuerNotAccepted(
            f"issuer {issuer.full} is not accepted", details={"issuer": issuer.full}
        )
    _check_issuer_signature(presentation, _resolve(resolver, issuer))
    claims = _check_disclosures(presentation)

    status = CredentialStatus.VALID
    try:
        not_before = from_epoch_seconds(presentation.body["nbf"])
        not_after = from_epoch_seconds(presentation.body["exp"])
        status_ref = StatusRef(**presentation.body["status"]) if presentation.body.get("status") else None
    except (TypeError, ValueError, OverflowError, OSError) as exc:
        raise MalformedPresentation(f"invalid validity or status fields: {exc}") from exc
    if not (not_before - CLOCK_SKEW <= now <= not_after + CLOCK_SKEW):
        status = CredentialStatus.EXPIRED
    elif status_ref is not None and status_checker is not None:
        status = check_status(status_ref, status_checker)
    if policy.reject_unusable and status is CredentialStatus.EXPIRED:
        raise Expired("credential is outside its validity window", details={"not_after": not_after.isoformat()})
    if policy.reject_unusable and status is CredentialStatus.REVOKED:
        raise Revoked("credential has been revoked", details=status_ref.model_dump())

    required = policy.expected_subject is None or presentation.subject.full != policy.expected_subject
    if presentation.holder_binding is None:
        if required:
            raise HolderBindingRequired(
                "subject differs from the authenticated peer; holder binding is required",
                details={"subject": presentation.subject.full, "expected_subject": policy.expected_subject},
            )
    else:
        _check_holder_binding(presentation, policy, resolver, now)

    missing = [name for name in policy.required_claims if name not in claims]
    if missing:
        raise MissingClaims(f"presentation lacks {', '.join(missing)}", details={"missing": missing})
    logger.info(
        "Presentation verified",
        issuer=issuer.full,
        subject=presentation.subject.full,
        claims=sorted(claims),
        status=status.value,
        holder_binding_checked=presentation.holder_binding is not None,
    )
    return VerifiedClaims(
        claims=claims,
        issuer=issuer.full,
        subject=presentation.subject.full,
        status=status,
        holder_binding_checked=presentation.holder_binding is not None,
    )
