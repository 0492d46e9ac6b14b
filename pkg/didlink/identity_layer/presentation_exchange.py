"""
Minimal "dif-pe-2" presentation exchange: claim-name constraints only.

Request payload:
    {protocol, request_id, nonce, aud, accepted_issuers,
     presentation_definition: {id, input_descriptors: [{id, constraints: {fields: [{path: ["$.<claim>"]}]}}]}}

Submission payload:
    {nonce, vp, presentation_submission: {id, definition_id, descriptor_map: [{id, format: "sd-jwt", path: "$"}]}}
"""

import secrets
import uuid
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..codec import b64url_encode
from ..errors import MalformedPayload, MalformedPresentation
from ..negotiation import PROTOCOL_DIF_PE_2
from ..vc_sdjwt import Presentation, SdJwtCredential

NONCE_BYTES = 16
SUBMISSION_FORMAT = "sd-jwt"
CLAIM_PATH_PREFIX = "$."


class RequestTemplate(BaseModel):
    """What a verifier asks for; each session turns it into a fresh request."""

    model_config = ConfigDict(frozen=True)

    required_claims: Tuple[str, ...] = ()
    accepted_issuers: Tuple[str, ...] = ()


class PresentationRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    request_id: str
    nonce: str
    audience: str
    required_claims: Tuple[str, ...] = ()
    accepted_issuers: Tuple[str, ...] = ()
    protocol: str = PROTOCOL_DIF_PE_2

    @property
    def definition_id(self) -> str:
        return f"pd-{self.request_id}"

    def to_payload(self) -> Dict[str, Any]:
        descriptors = [
            {
                "id": claim,
                "constraints": {"fields": [{"path": [f"{CLAIM_PATH_PREFIX}{claim}"]}]},
            }
            for claim in self.required_claims
        ]
        return {
            "protocol": self.protocol,
            "request_id": self.request_id,
            "nonce": self.nonce,
            "aud": self.audience,
            "accepted_issuers": list(self.accepted_issuers),
            "presentation_definition": {"id": self.definition_id, "input_descriptors": descriptors},
        }

    @classmethod
    def from_payload(cls, body: Dict[str, Any]) -> "PresentationRequest":
        try:
            definition = body["presentation_definition"]
            claims = []
            for descriptor in definition["input_descriptors"]:
                for constraint in descriptor["constraints"]["fields"]:
                    for path in constraint["path"]:
                        if not path.startswith(CLAIM_PATH_PREFIX) or "." in path[len(CLAIM_PATH_PREFIX):]:
                            raise MalformedPayload(f"unsupported claim path {path!r}")
                        claims.append(path[len(CLAIM_PATH_PREFIX):])
            request = cls(
                request_id=body["request_id"],
                nonce=body["nonce"],
                audience=body["aud"],
                required_claims=tuple(dict.fromkeys(claims)),
                accepted_issuers=tuple(body.get("accepted_issuers", ())),
                protocol=body.get("protocol", PROTOCOL_DIF_PE_2),
            )
        except (KeyError, TypeError, AttributeError, ValidationError) as exc:
            raise MalformedPayload(f"invalid presentation request: {exc}") from exc
        if request.protocol != PROTOCOL_DIF_PE_2:
            raise MalformedPayload(f"unsupported presentation protocol {request.protocol!r}")
        if definition.get("id") != request.definition_id:
            raise MalformedPayload("presentation definition id does not match the request")
        return request


def build_request(template: RequestTemplate, audience: str) -> PresentationRequest:
    return PresentationRequest(
        request_id=uuid.uuid4().hex,
        nonce=b64url_encode(secrets.token_bytes(NONCE_BYTES)),
        audience=audience,
        required_claims=template.required_claims,
        accepted_issuers=template.accepted_issuers,
    )


def build_submission(request: PresentationRequest, presentation: Presentation) -> Dict[str, Any]:
    return {
        "nonce": request.nonce,
        "vp": presentation.serialize(),
        "presentation_submission": {
            "id": uuid.uuid4().hex,
            "definition_id": request.definition_id,
            "descriptor_map": [{"id": claim, "format": SUBMISSION_FORMAT, "path": "$"} for claim in request.required_claims],
        },
    }


def parse_submission(body: Dict[str, Any], request: PresentationRequest) -> str:
    """The compact presentation carried by a submission answering `request`."""
    submission = body.get("presentation_submission")
    vp = body.get("vp")
    if not isinstance(submission, dict) or not isinstance(vp, str):
        raise MalformedPresentation("submission lacks presentation_submission or vp")
    if submission.get("definition_id") != request.definition_id:
        raise MalformedPresentation("submission answers a different presentation definition")
    if body.get("nonce") != request.nonce:
        raise MalformedPresentation("submission nonce does not match the request")
    for entry in submission.get("descriptor_map", []):
        if not isinstance(entry, dict) or entry.get("format") != SUBMISSION_FORMAT:
            raise MalformedPresentation("descriptor_map entries must use the sd-jwt format")
    return vp


def select_credential(
    credentials: Sequence[SdJwtCredential], request: PresentationRequest
) -> Optional[SdJwtCredential]:
    """Prefer a credential covering the claims from an accepted issuer, then one covering the claims."""
    if not credentials:
        return None
    wanted = set(request.required_claims)

    def covers(credential: SdJwtCredential) -> bool:
        return wanted <= set(credential.claims)

    def accepted(credential: SdJwtCredential) -> bool:
        return not request.accepted_issuers or credential.issuer.full in request.accepted_issuers

    for ok in (lambda c: covers(c) and accepted(c), covers):
        match = next((c for c in credentials if ok(c)), None)
        if match is not None:
            return match
    return credentials[0]


def claims_to_disclose(credential: SdJwtCredential, request: PresentationRequest) -> List[str]:
    available = credential.claims
    if not request.required_claims:
        return list(available)
    return [claim for claim in request.required_claims if claim in available]
