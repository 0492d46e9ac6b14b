"""
Error types for DID Link.

Every failure surfaced by the library derives from DidLinkError and carries a
stable machine-readable code. The CLI and the registry inspection API render
errors through to_dict().
"""

from typing import Any, Dict, Optional


class DidLinkError(Exception):
    """Base error with code, message, suggestion and structured details."""

    code = "didlink_error"
    status_code = 400
    default_suggestion: Optional[str] = None

    def __init__(
        self,
        message: str = "",
        suggestion: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
    ):
        self.message = message or self.code.replace("_", " ")
        self.suggestion = suggestion or self.default_suggestion
        self.details = details or {}
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        body = {
            "error": self.code,
            "message": self.message,
            "suggestion": self.suggestion,
        }
        body.update(self.details)
        return body


# DIDs and resolution
class MalformedDid(DidLinkError):
    code = "malformed_did"
    default_suggestion = "DIDs have the form did:<method>:<subject>."


class InvalidKey(DidLinkError):
    code = "invalid_key"


class UnsupportedMethod(DidLinkError):
    code = "unsupported_method"
    default_suggestion = "Supported methods are key, peer and vdrsim."


class NotFound(DidLinkError):
    code = "not_found"
    status_code = 404


class CacheMiss(DidLinkError):
    code = "cache_miss"
    status_code = 404


class RegistryUnavailable(DidLinkError):
    code = "registry_unavailable"
    status_code = 503
    default_suggestion = "Check that the registry is running and DIDLINK_VDR points at it."


class MalformedDocument(DidLinkError):
    code = "malformed_document"


# Registry
class AlreadyAnchored(DidLinkError):
    code = "already_anchored"
    status_code = 409


class BadSignature(DidLinkError):
    code = "bad_signature"
    status_code = 403


class VersionConflict(DidLinkError):
    code = "version_conflict"
    status_code = 409


class UnauthorizedKey(DidLinkError):
    code = "unauthorized_key"
    status_code = 403


class DuplicateList(DidLinkError):
    code = "duplicate_list"
    status_code = 409


class IndexOutOfRange(DidLinkError):
    code = "index_out_of_range"


class BindFailure(DidLinkError):
    code = "bind_failure"


class CorruptLog(DidLinkError):
    code = "corrupt_log"
    status_code = 500
    default_suggestion = "Restore the registry log from a backup; replay refuses altered records."


class MalformedRequest(DidLinkError):
    code = "malformed_request"
    status_code = 422


# Certificates
class OversizeDid(DidLinkError):
    code = "oversize_did"


class InvalidValidity(DidLinkError):
    code = "invalid_validity"


class NotACa(DidLinkError):
    code = "not_a_ca"


class NoDidPresent(DidLinkError):
    code = "no_did_present"


class AmbiguousDid(DidLinkError):
    code = "ambiguous_did"


class MalformedCertificate(DidLinkError):
    code = "malformed"


# Negotiation
class OversizePayload(DidLinkError):
    code = "oversize_payload"


class MalformedPayload(DidLinkError):
    code = "malformed_payload"


class NoMatchingRow(DidLinkError):
    code = "no_matching_row"


# Channel
class HandshakeRejected(DidLinkError):
    code = "handshake_rejected"

    def __init__(self, reason: str, message: str = "", **kwargs):
        self.reason = reason
        details = kwargs.pop("details", {}) or {}
        details.setdefault("reason", reason)
        super().__init__(message or f"handshake rejected: {reason}", details=details, **kwargs)


class BindingInvalid(DidLinkError):
    code = "binding_invalid"

    def __init__(self, reason: str, message: str = "", **kwargs):
        self.reason = reason
        details = kwargs.pop("details", {}) or {}
        details.setdefault("reason", reason)
        super().__init__(message or f"DID binding invalid: {reason}", details=details, **kwargs)


class ResolutionFailed(DidLinkError):
    code = "resolution_failed"


class TransportError(DidLinkError):
    code = "transport_error"


# Identification sub-layer
class BadMagic(DidLinkError):
    code = "bad_magic"


class UnsupportedVersion(DidLinkError):
    code = "unsupported_version"


class Truncated(DidLinkError):
    code = "truncated"


class ProtocolViolation(DidLinkError):
    code = "protocol_violation"


class PeerRefused(DidLinkError):
    code = "peer_refused"


class Timeout(DidLinkError):
    code = "timeout"


class VerificationFailed(DidLinkError):
    """Presentation verification failure; subclasses name the exact reason."""

    code = "verification_failed"


# Credentials
class EmptyClaims(DidLinkError):
    code = "empty_claims"


class UnknownClaim(DidLinkError):
    code = "unknown_claim"


class BadIssuerSignature(VerificationFailed):
    code = "bad_issuer_signature"


class DigestMismatch(VerificationFailed):
    code = "digest_mismatch"


class Expired(VerificationFailed):
    code = "expired"


class Revoked(VerificationFailed):
    code = "revoked"


class IssuerNotAccepted(VerificationFailed):
    code = "issuer_not_accepted"


class HolderBindingRequired(VerificationFailed):
    code = "holder_binding_required"


class HolderBindingInvalid(VerificationFailed):
    code = "holder_binding_invalid"


class MalformedPresentation(VerificationFailed):
    code = "malformed_presentation"


class MissingClaims(VerificationFailed):
    code = "missing_claims"


class CredentialResolutionFailed(VerificationFailed):
    """Issuer or holder DID could not be resolved while verifying."""

    code = "resolution_failed"


# Benchmarks
class DecryptFailed(DidLinkError):
    code = "decrypt_failed"


class UnknownKey(DidLinkError):
    code = "unknown_key"


class ScenarioInfeasible(DidLinkError):
    code = "scenario_infeasible"


class ServiceUnavailable(DidLinkError):
    code = "service_unavailable"
    status_code = 503


class IoFailure(DidLinkError):
    code = "io_failure"


# CLI and configuration
class UsageError(DidLinkError):
    code = "usage_error"


class ConfigError(DidLinkError):
    code = "config_error"
    default_suggestion = "Check the config file and DIDLINK_* environment variables."


def did_not_found_error(did: str) -> NotFound:
    """Create a not-found error for an unanchored DID."""
    return NotFound(
        message=f"DID {did} is not anchored on the registry.",
        suggestion="Anchor the DID document first or check for a typo in the DID.",
        details={"did": did, "resource_type": "did"},
    )


def status_list_not_found_error(list_id: str) -> NotFound:
    """Create a not-found error for a missing status list."""
    return NotFound(
        message=f"Status list {list_id} does not exist.",
        suggestion="Create the list with `didlink vdr status create` before issuing credentials against it.",
        details={"list_id": list_id, "resource_type": "status_list"},
    )


def cache_miss_error(did: str) -> CacheMiss:
    """Create a cache miss error for cache_only resolution."""
    return CacheMiss(
        message=f"No fresh cached document for {did}.",
        suggestion="Seed the cache or resolve with prefer_cache.",
        details={"did": did},
    )


# Every concrete error code, for documentation and the CLI table.
ERROR_CODES = sorted(
    {
        cls.code
        for cls in list(globals().values())
        if isinstance(cls, type) and issubclass(cls, DidLinkError)
    }
)


def _error_classes() -> Dict[str, type]:
    classes: Dict[str, type] = {}
    pending = [DidLinkError]
    while pending:
        cls = pending.pop(0)
        classes.setdefault(cls.code, cls)
        pending.extend(cls.__subclasses__())
    return classes


def error_from_dict(body: Dict[str, Any]) -> DidLinkError:
    """Rebuild an error received as {error, message, ...} from a peer service."""
    cls = _error_classes().get(body.get("error", ""), DidLinkError)
    details = {
        k: v for k, v in body.items() if k not in ("error", "message", "suggestion", "ok")
    }
    if cls in (HandshakeRejected, BindingInvalid):
        return cls(details.pop("reason", "unknown"), body.get("message", ""), details=details)
    error = cls(body.get("message", ""), suggestion=body.get("suggestion"), details=details)
    if cls is DidLinkError and body.get("error"):
        error.code = body["error"]
    return error
