"""
Tests for SD-JWT credentials: issuance, selective disclosure, holder binding,
validity and revocation.
"""

import random
import string
from datetime import timedelta

import pytest

from didlink.cert_kit import generate_keypair
from didlink.codec import utc_now
from didlink.did_core import default_resolver
from didlink.errors import (
    BadIssuerSignature,
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
    VerificationFailed,
)
from didlink.identity import create_identity
from didlink.vc_sdjwt import (
    CredentialStatus,
    Disclosure,
    HolderBindingRequest,
    Presentation,
    SdJwtCredential,
    StatusRef,
    VerificationPolicy,
    derive_presentation,
    issue,
    verify_presentation,
)

CLAIMS = {"name": "Alice", "role": "operator", "clearance": 3, "site": "plant-7"}
MUTATION_ALPHABET = string.ascii_letters + string.digits + "-_."


@pytest.fixture
def issuer():
    return create_identity("key")


@pytest.fixture
def holder():
    return create_identity("key")


@pytest.fixture
def key_resolver():
    resolver = default_resolver()
    yield resolver
    resolver.close()


@pytest.fixture
def credential(issuer, holder):
    return issue(issuer.key, issuer.did, holder.did, CLAIMS, key_id=issuer.key_id)


def bind(holder, nonce="n-1", audience="did:key:verifier"):
    return HolderBindingRequest(key=holder.key, key_id=holder.key_id, nonce=nonce, audience=audience)


def test_issue_commits_one_sorted_digest_per_claim(credential, issuer, holder):
    body = credential.body
    assert body["iss"] == issuer.did.full
    assert body["sub"] == holder.did.full
    assert body["_sd_alg"] == "sha-256"
    assert len(body["_sd"]) == len(CLAIMS)
    assert body["_sd"] == sorted(body["_sd"])
    assert "operator" not in str(body)
    assert credential.claims == CLAIMS


def test_issue_rejects_empty_claims(issuer, holder):
    with pytest.raises(EmptyClaims):
        issue(issuer.key, issuer.did, holder.did, {}, key_id=issuer.key_id)


def test_issue_finds_key_id_in_issuer_document(issuer, holder):
    credential = issue(issuer.key, issuer.did, holder.did, CLAIMS, issuer_document=issuer.document)
    assert credential.kid == issuer.key_id
    with pytest.raises(BadIssuerSignature):
        issue(generate_keypair(), issuer.did, holder.did, CLAIMS, issuer_document=issuer.document)


def test_salts_are_unique():
    salts = {Disclosure.create("name", "Alice").salt for _ in range(10_000)}
    assert len(salts) == 10_000


def test_credential_serialization_round_trip(credential):
    parsed = SdJwtCredential.parse(credential.serialize())
    assert parsed == credential


def test_full_presentation_verifies(credential, holder, key_resolver):
    presentation = derive_presentation(credential, CLAIMS)
    policy = VerificationPolicy(expected_subject=holder.did.full)

    verified = verify_presentation(presentation.serialize(), policy, key_resolver)

    assert verified.claims == CLAIMS
    assert verified.status is CredentialStatus.VALID
    assert not verified.holder_binding_checked


def test_minimal_disclosure_reveals_only_requested_claims(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"])
    compact = presentation.serialize()

    verified = verify_presentation(compact, VerificationPolicy(expected_subject=holder.did.full), key_resolver)

    assert verified.claims == {"role": "operator"}
    assert [Disclosure.parse(d).name for d in Presentation.parse(compact).disclosures] == ["role"]


def test_unknown_claim_cannot_be_disclosed(credential):
    with pytest.raises(UnknownClaim):
        derive_presentation(credential, ["name", "salary"])


def test_required_claims_must_be_disclosed(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"])
    policy = VerificationPolicy(expected_subject=holder.did.full, required_claims=("role", "clearance"))
    with pytest.raises(MissingClaims):
        verify_presentation(presentation, policy, key_resolver)


def test_issuer_allow_list(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"])
    policy = VerificationPolicy(expected_subject=holder.did.full, accepted_issuers=("did:key:zSomeoneElse",))
    with pytest.raises(IssuerNotAccepted):
        verify_presentation(presentation, policy, key_resolver)


def test_forged_disclosure_is_rejected(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"])
    forged = presentation.model_copy(
        update={"disclosures": presentation.disclosures + (Disclosure.create("clearance", 9).encoded,)}
    )
    with pytest.raises(DigestMismatch):
        verify_presentation(forged, VerificationPolicy(expected_subject=holder.did.full), key_resolver)


def test_repeated_disclosure_is_rejected(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"])
    doubled = presentation.model_copy(update={"disclosures": presentation.disclosures * 2})
    with pytest.raises(DigestMismatch):
        verify_presentation(doubled, VerificationPolicy(expected_subject=holder.did.full), key_resolver)


def test_credential_signed_by_other_key_is_rejected(issuer, holder, key_resolver):
    credential = issue(generate_keypair(), issuer.did, holder.did, CLAIMS, key_id=issuer.key_id)
    presentation = derive_presentation(credential, ["role"])
    with pytest.raises(BadIssuerSignature):
        verify_presentation(presentation, VerificationPolicy(expected_subject=holder.did.full), key_resolver)


@pytest.mark.parametrize("compact", ["", "a.b", "a.b.c.d", "!!!.e30.", 42])
def test_malformed_presentations(compact):
    with pytest.raises(MalformedPresentation):
        Presentation.parse(compact)


def test_single_character_mutations_never_verify(credential, holder, key_resolver):
    compact = derive_presentation(credential, ["name", "role"], bind(holder)).serialize()
    policy = VerificationPolicy(
        expected_subject=holder.did.full,
        accepted_issuers=(credential.issuer.full,),
        nonce="n-1",
        audience="did:key:verifier",
    )
    assert verify_presentation(compact, policy, key_resolver).holder_binding_checked

    rng = random.Random(1000)
    for _ in range(1000):
        position = rng.randrange(len(compact))
        replacement = rng.choice([c for c in MUTATION_ALPHABET if c != compact[position]])
        mutated = compact[:position] + replacement + compact[position + 1:]
        with pytest.raises(VerificationFailed):
            verify_presentation(mutated, policy, key_resolver)


# Holder binding

def test_binding_not_needed_when_subject_is_the_peer(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"])
    verified = verify_presentation(presentation, VerificationPolicy(expected_subject=holder.did.full), key_resolver)
    assert verified.subject == holder.did.full


@pytest.mark.parametrize("expected_subject", [None, "did:key:z6MkSomebodyElse"])
def test_binding_required_when_subject_is_not_the_peer(credential, key_resolver, expected_subject):
    presentation = derive_presentation(credential, ["role"])
    with pytest.raises(HolderBindingRequired):
        verify_presentation(presentation, VerificationPolicy(expected_subject=expected_subject), key_resolver)


def test_bound_presentation_verifies_for_any_peer(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"], bind(holder))
    policy = VerificationPolicy(nonce="n-1", audience="did:key:verifier")

    verified = verify_presentation(presentation.serialize(), policy, key_resolver)

    assert verified.holder_binding_checked
    assert verified.claims == {"role": "operator"}


@pytest.mark.parametrize(
    "policy",
    [
        VerificationPolicy(nonce="other-nonce", audience="did:key:verifier"),
        VerificationPolicy(nonce="n-1", audience="did:key:someone-else"),
    ],
)
def test_binding_must_match_request(credential, holder, key_resolver, policy):
    presentation = derive_presentation(credential, ["role"], bind(holder))
    with pytest.raises(HolderBindingInvalid):
        verify_presentation(presentation, policy, key_resolver)


def test_binding_signed_by_non_holder_is_rejected(credential, holder, key_resolver):
    thief = HolderBindingRequest(key=generate_keypair(), key_id=holder.key_id, nonce="n-1", audience="did:key:verifier")
    presentation = derive_presentation(credential, ["role"], thief)
    with pytest.raises(HolderBindingInvalid):
        verify_presentation(presentation, VerificationPolicy(nonce="n-1"), key_resolver)


def test_stale_binding_is_rejected(credential, holder, key_resolver):
    presentation = derive_presentation(credential, ["role"], bind(holder))
    policy = VerificationPolicy(nonce="n-1", now=utc_now() + timedelta(minutes=10))
    with pytest.raises(HolderBindingInvalid):
        verify_presentation(presentation, policy, key_resolver)


# Validity and status

def test_expired_credential(issuer, holder, key_resolver):
    now = utc_now()
    credential = issue(
        issuer.key, issuer.did, holder.did, CLAIMS, validity=(now - timedelta(days=10), now - timedelta(days=1)),
        key_id=issuer.key_id,
    )
    presentation = derive_presentation(credential, ["role"])
    with pytest.raises(Expired):
        verify_presentation(presentation, VerificationPolicy(expected_subject=holder.did.full), key_resolver)

    lenient = VerificationPolicy(expected_subject=holder.did.full, reject_unusable=False)
    assert verify_presentation(presentation, lenient, key_resolver).status is CredentialStatus.EXPIRED


def test_revoked_credential(vdr_client, resolver, anchored_identity, holder):
    issuer = anchored_identity()
    vdr_client.create_status_list_signed("staff", issuer.did, 16, issuer.key, issuer.key_id)
    credential = issue(
        issuer.key, issuer.did, holder.did, CLAIMS, status_ref=StatusRef(list_id="staff", index=2),
        issuer_document=issuer.document,
    )
    presentation = derive_presentation(credential, ["role"])
    policy = VerificationPolicy(expected_subject=holder.did.full)

    assert verify_presentation(presentation, policy, resolver, vdr_client).status is CredentialStatus.VALID

    vdr_client.set_status_signed("staff", 2, True, issuer.key, issuer.key_id)

    with pytest.raises(Revoked):
        verify_presentation(presentation, policy, resolver, vdr_client)
    lenient = VerificationPolicy(expected_subject=holder.did.full, reject_unusable=False)
    assert verify_presentation(presentation, lenient, resolver, vdr_client).status is CredentialStatus.REVOKED
