"""
Tests for extension encoding, the server's negotiation decision and the
scenario matrix.
"""

import random

import pytest

from didlink.cert_kit import generate_keypair, issue_ca_certificate, make_ca_root, make_did_certificate
from didlink.errors import MalformedPayload, NoMatchingRow, OversizePayload
from didlink.identity import create_identity
from didlink.negotiation import (
    EXTENSION_CODES,
    PROTOCOL_DIF_PE_2,
    SCENARIO_ROWS,
    ClientAuthMode,
    Extension,
    NegotiationAgreement,
    NegotiationOffer,
    Rejection,
    RejectionReason,
    ServerAuthMode,
    ServerCapabilities,
    classify_scenario,
    decode_agreement,
    decode_offer,
    encode_extensions,
    negotiate,
    pack_extension_block,
    select_identity,
    unpack_extension_block,
)

SERVER_NAME = "localhost"
METHODS = ("key", "vdrsim")


@pytest.fixture(scope="module")
def server_identities():
    root = make_ca_root("matrix CA")
    server = create_identity("key")
    return {
        "ca": issue_ca_certificate(root, SERVER_NAME, generate_keypair()),
        "did": make_did_certificate(server.did, server.key),
    }


@pytest.fixture(scope="module")
def client_did():
    return create_identity("key").did


def capabilities(identities, default, presentable=False):
    return ServerCapabilities(
        supported_methods=METHODS,
        supported_presentation_protocols=(PROTOCOL_DIF_PE_2,),
        available_identities=[identities["ca"], identities["did"]],
        default_identity=identities[default],
        presentable_credentials=presentable,
    )


def matrix_case(row, identities, client_did):
    """(offer, capabilities) that should land in scenario `row`."""
    server_did = identities["did"].did
    cmi = ("key",)
    cpp = (PROTOCOL_DIF_PE_2,)
    cases = {
        1: (dict(client_auth_mode=ClientAuthMode.NONE), "ca", False),
        2: (dict(client_auth_mode=ClientAuthMode.NONE, target_server_name=SERVER_NAME), "ca", False),
        3: (dict(client_auth_mode=ClientAuthMode.CERT), "ca", False),
        4: (dict(client_auth_mode=ClientAuthMode.CERT, target_server_name=SERVER_NAME), "ca", False),
        5: (dict(client_auth_mode=ClientAuthMode.NONE, client_did_methods=cmi), "did", False),
        6: (dict(client_auth_mode=ClientAuthMode.NONE, target_server_did=server_did), "did", False),
        7: (dict(client_auth_mode=ClientAuthMode.DID, client_did_methods=cmi), "did", False),
        8: (dict(client_auth_mode=ClientAuthMode.DID, client_did=client_did), "did", False),
        9: (dict(client_auth_mode=ClientAuthMode.DID, target_server_did=server_did, client_did_methods=cmi), "did", False),
        10: (dict(client_auth_mode=ClientAuthMode.DID, target_server_did=server_did, client_did=client_did), "did", False),
        11: (dict(client_auth_mode=ClientAuthMode.NONE, client_did_methods=cmi, presentation_protocols=cpp), "did", True),
        12: (
            dict(client_auth_mode=ClientAuthMode.NONE, target_server_did=server_did, client_did_methods=cmi, presentation_protocols=cpp),
            "did",
            True,
        ),
        13: (
            dict(client_auth_mode=ClientAuthMode.DID_VC, client_did=client_did, client_did_methods=cmi, presentation_protocols=cpp),
            "did",
            True,
        ),
        14: (
            dict(client_auth_mode=ClientAuthMode.DID_VC, target_server_did=server_did, client_did_methods=cmi, presentation_protocols=cpp),
            "did",
            True,
        ),
        15: (dict(client_auth_mode=ClientAuthMode.DID_VC, client_did_methods=cmi, presentation_protocols=cpp), "did", False),
        16: (
            dict(client_auth_mode=ClientAuthMode.DID_VC, target_server_did=server_did, client_did_methods=cmi, presentation_protocols=cpp),
            "did",
            False,
        ),
        17: (dict(client_auth_mode=ClientAuthMode.DID, client_did=client_did), "ca", False),
        18: (dict(client_auth_mode=ClientAuthMode.DID, client_did_methods=cmi), "ca", False),
        19: (dict(client_auth_mode=ClientAuthMode.DID, target_server_name=SERVER_NAME, client_did_methods=cmi), "ca", False),
        20: (dict(client_auth_mode=ClientAuthMode.CERT, client_did_methods=cmi), "did", False),
        21: (dict(client_auth_mode=ClientAuthMode.CERT, target_server_did=server_did), "did", False),
        22: (dict(client_auth_mode=ClientAuthMode.DID_VC, client_did_methods=cmi, presentation_protocols=cpp), "ca", False),
        23: (
            dict(client_auth_mode=ClientAuthMode.DID_VC, target_server_name=SERVER_NAME, client_did_methods=cmi, presentation_protocols=cpp),
            "ca",
            False,
        ),
        24: (dict(client_auth_mode=ClientAuthMode.CERT, client_did_methods=cmi, presentation_protocols=cpp), "did", True),
        25: (
            dict(client_auth_mode=ClientAuthMode.CERT, target_server_did=server_did, client_did_methods=cmi, presentation_protocols=cpp),
            "did",
            True,
        ),
    }
    fields, default, presentable = cases[row]
    return NegotiationOffer(**fields), capabilities(identities, default, presentable)


# Scenario matrix

def test_matrix_has_twenty_five_rows():
    assert [row.number for row in SCENARIO_ROWS] == list(range(1, 26))


@pytest.mark.parametrize("number", range(1, 26))
def test_every_row_is_reachable(number, server_identities, client_did):
    offer, caps = matrix_case(number, server_identities, client_did)

    agreement = negotiate(offer, caps)

    assert isinstance(agreement, NegotiationAgreement), agreement
    assert classify_scenario(offer, agreement).row.number == number


@pytest.mark.parametrize("number", range(1, 26))
def test_negotiation_is_deterministic(number, server_identities, client_did):
    offer, caps = matrix_case(number, server_identities, client_did)
    assert negotiate(offer, caps) == negotiate(offer, caps)


def test_optional_cmi_lands_in_the_same_row(server_identities):
    caps = capabilities(server_identities, "did")
    bare = NegotiationOffer(client_auth_mode=ClientAuthMode.NONE)
    with_cmi = NegotiationOffer(client_auth_mode=ClientAuthMode.NONE, client_did_methods=("key",))
    assert classify_scenario(bare, negotiate(bare, caps)).row.number == 5
    assert classify_scenario(with_cmi, negotiate(with_cmi, caps)).row.number == 5


def test_smi_lists_only_common_methods(server_identities):
    offer = NegotiationOffer(client_auth_mode=ClientAuthMode.DID, client_did_methods=("web", "key"))
    agreement = negotiate(offer, capabilities(server_identities, "did"))
    assert agreement.server_did_methods == ("key",)


def test_unmatched_combination_has_no_row():
    offer = NegotiationOffer(client_auth_mode=ClientAuthMode.DERIVED)
    agreement = NegotiationAgreement(server_auth_mode=ServerAuthMode.DERIVED_DEFAULT)
    with pytest.raises(NoMatchingRow):
        classify_scenario(offer, agreement)


def test_credentials_without_exchange_have_no_row():
    offer = NegotiationOffer(client_auth_mode=ClientAuthMode.DID_VC, client_did_methods=("key",))
    agreement = NegotiationAgreement(server_did_methods=("key",), server_auth_mode=ServerAuthMode.DID_DEFAULT)
    with pytest.raises(NoMatchingRow):
        classify_scenario(offer, agreement)


# Rejections

def test_no_common_method(server_identities):
    offer = NegotiationOffer(client_auth_mode=ClientAuthMode.DID, client_did_methods=("web",))
    decision = negotiate(offer, capabilities(server_identities, "did"))
    assert isinstance(decision, Rejection)
    assert decision.reason is RejectionReason.NO_COMMON_METHOD


def test_server_did_method_outside_client_list(server_identities):
    offer = NegotiationOffer(client_auth_mode=ClientAuthMode.NONE, client_did_methods=("vdrsim",))
    decision = negotiate(offer, capabilities(server_identities, "did"))
    assert decision.reason is RejectionReason.NO_COMMON_METHOD


def test_no_common_presentation_protocol(server_identities):
    offer = NegotiationOffer(
        client_auth_mode=ClientAuthMode.DID_VC, client_did_methods=("key",), presentation_protocols=("oid4vp",)
    )
    decision = negotiate(offer, capabilities(server_identities, "did", True))
    assert decision.reason is RejectionReason.NO_COMMON_PRESENTATION_PROTOCOL


def test_unknown_server_did(server_identities):
    stranger = create_identity("key").did
    offer = NegotiationOffer(target_server_did=stranger)
    decision = negotiate(offer, capabilities(server_identities, "did"))
    assert decision.reason is RejectionReason.UNKNOWN_SERVER_DID


def test_unknown_server_name(server_identities):
    offer = NegotiationOffer(target_server_name="example.org")
    decision = negotiate(offer, capabilities(server_identities, "ca"))
    assert decision.reason is RejectionReason.UNKNOWN_SERVER_NAME


def test_select_identity_by_sni(server_identities):
    caps = capabilities(server_identities, "ca")
    assert select_identity(None, caps) is server_identities["ca"]
    assert select_identity(server_identities["did"].did.full, caps) is server_identities["did"]
    assert select_identity(SERVER_NAME, caps) is server_identities["ca"]


# Offer validation

def test_offer_rejects_both_sni_forms(client_did):
    with pytest.raises(ValueError):
        NegotiationOffer(target_server_did=client_did, target_server_name=SERVER_NAME)


def test_offer_rejects_did_as_hostname(client_did):
    with pytest.raises(ValueError):
        NegotiationOffer(target_server_name=client_did.full)


def test_did_auth_needs_cmi_or_cni():
    with pytest.raises(ValueError):
        NegotiationOffer(client_auth_mode=ClientAuthMode.DID)


# Wire encoding

def test_cmi_wire_format():
    offer = NegotiationOffer(client_did_methods=("key", "vdrsim"))
    [(code, payload)] = encode_extensions(offer)
    assert code == 0xFF01
    assert payload == b"\x00\x02" + b"\x03key" + b"\x06vdrsim"


def test_cni_wire_format(client_did):
    [(code, payload)] = encode_extensions(NegotiationOffer(client_did=client_did))
    encoded = client_did.full.encode("utf-8")
    assert code == EXTENSION_CODES[Extension.CNI] == 0xFF00
    assert payload == len(encoded).to_bytes(2, "big") + encoded


def test_extensions_are_emitted_in_code_order(client_did):
    offer = NegotiationOffer(
        target_server_name=SERVER_NAME,
        client_did=client_did,
        client_did_methods=("key",),
        presentation_protocols=(PROTOCOL_DIF_PE_2,),
        client_auth_mode=ClientAuthMode.DID_VC,
    )
    codes = [code for code, _ in encode_extensions(offer)]
    assert codes == [0x0000, 0xFF00, 0xFF01, 0xFF03]
    assert [code for code, _ in encode_extensions(offer, include_sni=False)] == [0xFF00, 0xFF01, 0xFF03]


def test_agreement_round_trip():
    agreement = NegotiationAgreement(
        server_did_methods=("key",),
        agreed_presentation_protocol=PROTOCOL_DIF_PE_2,
        server_auth_mode=ServerAuthMode.DID_VC_DEFAULT,
        identification_enabled=True,
    )
    block = pack_extension_block(encode_extensions(agreement))
    decoded = decode_agreement(unpack_extension_block(block), ServerAuthMode.DID_VC_DEFAULT)
    assert decoded == agreement


def test_spa_must_name_one_protocol():
    payload = b"\x00\x02\x08dif-pe-2\x03foo"
    with pytest.raises(MalformedPayload):
        decode_agreement([(0xFF04, payload)], ServerAuthMode.DID_DEFAULT)


@pytest.mark.parametrize(
    "payload",
    [
        b"\x00",
        b"\x00\x01",
        b"\x00\x01\x05key",
        b"\x00\x02\x03key",
        b"\x00\x01\x03key\x00",
        b"\x00\x01\x00",
    ],
)
def test_malformed_method_lists_are_rejected(payload):
    with pytest.raises(MalformedPayload):
        decode_offer([(0xFF01, payload)])


def test_duplicate_extension_is_rejected():
    entry = encode_extensions(NegotiationOffer(client_did_methods=("key",)))[0]
    with pytest.raises(MalformedPayload):
        decode_offer([entry, entry])


def test_truncated_extension_block_is_rejected():
    block = pack_extension_block(encode_extensions(NegotiationOffer(client_did_methods=("key",))))
    with pytest.raises(MalformedPayload):
        unpack_extension_block(block[:-1])


def test_oversize_payload_is_refused():
    methods = tuple(f"m{i:03d}" + "x" * 250 for i in range(300))
    with pytest.raises(OversizePayload):
        encode_extensions(NegotiationOffer(client_did_methods=methods))


def test_unknown_extensions_are_ignored():
    decoded = decode_offer([(0x1234, b"anything"), (0xFF01, b"\x00\x01\x03key")])
    assert decoded.client_did_methods == ("key",)


def _random_method(rng):
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
    return "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))


def _random_offer(rng, dids):
    mode = rng.choice(list(ClientAuthMode))
    fields = {"client_auth_mode": mode}
    sni = rng.random()
    if sni < 0.3:
        fields["target_server_did"] = rng.choice(dids)
    elif sni < 0.6:
        fields["target_server_name"] = rng.choice(["localhost", "example.org", "a.b.c.d"])
    if rng.random() < 0.5:
        fields["client_did"] = rng.choice(dids)
    if rng.random() < 0.6:
        fields["client_did_methods"] = tuple(_random_method(rng) for _ in range(rng.randint(1, 5)))
    if rng.random() < 0.4:
        fields["presentation_protocols"] = tuple(_random_method(rng) for _ in range(rng.randint(1, 3)))
    if mode in (ClientAuthMode.DID, ClientAuthMode.DID_VC) and "client_did" not in fields and "client_did_methods" not in fields:
        fields["client_did_methods"] = ("key",)
    return NegotiationOffer(**fields)


def test_offer_codec_round_trip():
    rng = random.Random(20241017)
    dids = [create_identity("key").did, create_identity("peer").did, create_identity("vdrsim").did]
    for _ in range(10_000):
        offer = _random_offer(rng, dids)
        block = pack_extension_block(encode_extensions(offer))
        decoded = decode_offer(unpack_extension_block(block), offer.client_auth_mode)
        assert decoded == offer
