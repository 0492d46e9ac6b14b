"""
Tests for certificate generation, DID extraction and binding validation.
"""

from datetime import timedelta

import pytest
from cryptography import x509
from cryptography.x509.oid import NameOID

from didlink.cert_kit import (
    DID_CERT_COMMON_NAME,
    BindingReason,
    CertBundle,
    CertKind,
    derived_identifier,
    extract_did,
    generate_keypair,
    has_did,
    inspect_certificate,
    is_derived_id_certificate,
    issue_ca_certificate,
    make_ca_root,
    make_derived_id_certificate,
    make_did_certificate,
    matches_dns_name,
    pem_to_der,
    validate_chain,
    validate_did_binding,
)
from didlink.codec import utc_now
from didlink.did_core import KeyType
from didlink.errors import InvalidValidity, NoDidPresent, NotACa
from didlink.identity import create_identity


def test_did_certificate_carries_did_as_only_san_uri():
    identity = create_identity("vdrsim")
    bundle = make_did_certificate(identity.did, identity.key)

    cert = bundle.certificate
    assert bundle.kind is CertKind.DID_SELF_ISSUED
    assert cert.version is x509.Version.v3
    assert cert.subject == cert.issuer
    assert bundle.subject_name == DID_CERT_COMMON_NAME
    assert extract_did(bundle.certificate_der) == identity.did
    san = cert.extensions.get_extension_for_class(x509.SubjectAlternativeName).value
    assert san.get_values_for_type(x509.UniformResourceIdentifier) == [identity.did.full]


def test_binding_is_valid_for_matching_document():
    identity = create_identity("vdrsim")
    bundle = make_did_certificate(identity.did, identity.key)

    verdict = validate_did_binding(bundle.certificate_der, identity.document)

    assert verdict.valid
    assert verdict.reason is BindingReason.OK
    assert verdict.matched_method_id == identity.key_id


def test_binding_with_p256_key():
    identity = create_identity("vdrsim", KeyType.ECDSA_P256)
    bundle = make_did_certificate(identity.did, identity.key)
    assert validate_did_binding(bundle.certificate_der, identity.document, strict=True).valid


def test_binding_rejects_foreign_key():
    # Certificate claims the DID but is signed with an unrelated key
    identity = create_identity("vdrsim")
    forged = make_did_certificate(identity.did, generate_keypair())

    verdict = validate_did_binding(forged.certificate_der, identity.document)

    assert not verdict.valid
    assert verdict.reason is BindingReason.KEY_NOT_IN_DOCUMENT


def test_binding_rejects_other_did():
    first, second = create_identity("vdrsim"), create_identity("vdrsim")
    bundle = make_did_certificate(first.did, first.key)
    assert validate_did_binding(bundle.certificate_der, second.document).reason is BindingReason.DID_MISMATCH


def test_binding_rejects_expired_certificate():
    identity = create_identity("vdrsim")
    now = utc_now()
    bundle = make_did_certificate(identity.did, identity.key, (now - timedelta(days=2), now - timedelta(days=1)))
    verdict = validate_did_binding(bundle.certificate_der, identity.document)
    assert verdict.reason is BindingReason.EXPIRED_CERTIFICATE


def test_binding_ignores_agreement_keys():
    identity = create_identity("vdrsim")
    verdict = validate_did_binding(
        make_did_certificate(identity.did, identity.key).certificate_der,
        identity.document,
    )
    assert verdict.matched_method_id != identity.agreement_key_id


def test_inverted_validity_is_rejected():
    identity = create_identity("vdrsim")
    now = utc_now()
    with pytest.raises(InvalidValidity):
        make_did_certificate(identity.did, identity.key, (now, now - timedelta(seconds=1)))


def test_derived_identifier_certificate():
    bundle = make_derived_id_certificate(generate_keypair())
    assert bundle.kind is CertKind.DERIVED_SELF_ISSUED
    assert is_derived_id_certificate(bundle.certificate_der)
    assert not has_did(bundle.certificate_der)
    with pytest.raises(NoDidPresent):
        extract_did(bundle.certificate_der)


def test_ca_issued_leaf_validates_against_root(ca_root):
    leaf = issue_ca_certificate(ca_root, "localhost", generate_keypair())

    assert leaf.kind is CertKind.CA_ISSUED
    assert leaf.chain_der == [ca_root.certificate_der]
    assert "localhost" in leaf.dns_names
    assert validate_chain(leaf.certificate_der, leaf.chain_der, [ca_root.certificate_der]) is None


def test_chain_with_unknown_root_is_untrusted(ca_root):
    leaf = issue_ca_certificate(ca_root, "localhost", generate_keypair())
    other_root = make_ca_root("someone else")
    assert validate_chain(leaf.certificate_der, leaf.chain_der, [other_root.certificate_der]) == "untrusted_root"


def test_only_roots_issue_certificates():
    leaf = make_derived_id_certificate(generate_keypair())
    with pytest.raises(NotACa):
        issue_ca_certificate(leaf, "localhost", generate_keypair())


def test_bundle_save_and_load(tmp_path, ca_root):
    leaf = issue_ca_certificate(ca_root, "localhost", generate_keypair(KeyType.ECDSA_P256))
    path = tmp_path / "leaf.json"
    leaf.save(path)

    loaded = CertBundle.load(path)

    assert loaded.certificate_der == leaf.certificate_der
    assert loaded.chain_der == leaf.chain_der
    assert loaded.key.public_key == leaf.key.public_key
    assert loaded.key.sign(b"payload")


def test_export_pem_round_trips_to_der(tmp_path):
    identity = create_identity("key")
    bundle = make_did_certificate(identity.did, identity.key)
    paths = bundle.export_pem(tmp_path)
    assert set(paths) == {"certificate", "key"}
    assert pem_to_der(paths["certificate"].read_bytes()) == bundle.certificate_der


def test_inspect_reports_kind_and_did(ca_root):
    identity = create_identity("vdrsim")
    did_info = inspect_certificate(make_did_certificate(identity.did, identity.key).certificate_der)
    ca_info = inspect_certificate(issue_ca_certificate(ca_root, "localhost", generate_keypair()).certificate_der)

    assert did_info["kind"] == CertKind.DID_SELF_ISSUED.value
    assert did_info["did"] == identity.did.full
    assert did_info["key_type"] == KeyType.ED25519.value
    assert ca_info["kind"] == CertKind.CA_ISSUED.value
    assert ca_info["san_dns"] == ["localhost"]
    assert inspect_certificate(ca_root.certificate_der)["kind"] == CertKind.CA_ROOT.value


def _cert(subject, issuer, key, signer, ca, path_length=None, cert_sign=True, dns=None):
    now = utc_now()
    builder = (
        x509.CertificateBuilder()
        .subject_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, subject)]))
        .issuer_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, issuer)]))
        .public_key(key.public_key_object())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - timedelta(minutes=1))
        .not_valid_after(now + timedelta(days=1))
        .add_extension(x509.BasicConstraints(ca=ca, path_length=path_length if ca else None), critical=True)
    )
    if ca:
        builder = builder.add_extension(
            x509.KeyUsage(
                digital_signature=not cert_sign,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=cert_sign,
                crl_sign=cert_sign,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
    if dns:
        builder = builder.add_extension(x509.SubjectAlternativeName([x509.DNSName(d) for d in dns]), critical=False)
    return builder.sign(signer.private_key_object(), None)


@pytest.fixture
def open_root():
    key = generate_keypair()
    return key, _cert("open root", "open root", key, key, ca=True)


def _chain_below(root_key, root_name, cert_sign=True):
    inter_key, leaf_key = generate_keypair(), generate_keypair()
    inter = _cert("intermediate", root_name, inter_key, root_key, ca=True, cert_sign=cert_sign)
    leaf = _cert("localhost", "intermediate", leaf_key, inter_key, ca=False, dns=["localhost"])
    return leaf, inter


def test_chain_through_intermediate_validates(open_root):
    root_key, root = open_root
    leaf, inter = _chain_below(root_key, "open root")
    assert validate_chain(leaf, [inter], [root]) is None


def test_intermediate_without_cert_sign_is_rejected(open_root):
    root_key, root = open_root
    leaf, inter = _chain_below(root_key, "open root", cert_sign=False)
    assert validate_chain(leaf, [inter], [root]) in ("not_a_ca", "untrusted_root")


def test_path_length_zero_root_cannot_have_intermediates(ca_root):
    leaf, inter = _chain_below(ca_root.key, ca_root.subject_name)
    assert validate_chain(leaf, [inter], [ca_root.certificate_der]) == "chain_too_long"


def test_leaf_cannot_act_as_issuer(ca_root):
    server = issue_ca_certificate(ca_root, "localhost", generate_keypair())
    forged = _cert("victim.test", "localhost", generate_keypair(), server.key, ca=False, dns=["victim.test"])
    assert validate_chain(forged, [server.certificate_der], [ca_root.certificate_der]) is not None


def test_expired_leaf_is_rejected(ca_root):
    leaf = issue_ca_certificate(ca_root, "localhost", generate_keypair())
    later = utc_now() + timedelta(days=400)
    assert validate_chain(leaf.certificate_der, leaf.chain_der, [ca_root.certificate_der], now=later) == "expired_certificate"


def test_name_check_uses_dns_sans_only(ca_root):
    key = generate_keypair()
    leaf = _cert("intranet.test", ca_root.subject_name, key, ca_root.key, ca=False, dns=["localhost", "*.svc.test"])
    roots = [ca_root.certificate_der]

    assert validate_chain(leaf, [], roots, expected_name="LOCALHOST") is None
    assert validate_chain(leaf, [], roots, expected_name="api.svc.test") is None
    assert validate_chain(leaf, [], roots, expected_name="intranet.test") == "name_mismatch"
    assert not matches_dns_name(leaf, "a.b.svc.test")


def test_derived_identifiers_do_not_collide():
    identifiers = {derived_identifier(generate_keypair().public_key) for _ in range(10_000)}
    assert len(identifiers) == 10_000
