"""
Tests for DID Link sessions: authentication modes, DID binding failures,
negotiation over the wire and application messages.
"""

import socket
import struct

import pytest

from didlink.cert_kit import generate_keypair, make_derived_id_certificate, make_did_certificate
from didlink.channel import session as session_module
from didlink.channel.session import ClientConfig, ServerConfig, connect
from didlink.channel.verify import PeerAuthMode, ResolutionMode, ResolutionOutcome
from didlink.did_core import CacheMode, CachePolicy, default_resolver
from didlink.errors import BindingInvalid, DidLinkError, HandshakeRejected, TransportError
from didlink.identity import create_identity
from didlink.negotiation import ClientAuthMode, NegotiationOffer, ServerAuthMode, ServerCapabilities


def did_server_config(bundle, methods=("key",), **kwargs):
    caps = ServerCapabilities(methods, (), [bundle], bundle)
    kwargs.setdefault("resolver", default_resolver())
    return ServerConfig(capabilities=caps, **kwargs)


def did_client_offer(methods=("key",)):
    return NegotiationOffer(client_did_methods=methods, client_auth_mode=ClientAuthMode.DID)


def test_mutual_did_authentication(serve, key_identity, key_did_bundle):
    client = create_identity("key")
    server = serve(did_server_config(key_did_bundle))
    config = ClientConfig(
        identity=make_did_certificate(client.did, client.key), offer=did_client_offer(), resolver=default_resolver()
    )

    with connect(server.address, config) as session:
        session.send_message(b"hello")
        assert session.recv_message() == b"hello"

        assert session.peer.mode is PeerAuthMode.DID
        assert session.peer.peer_did == key_identity.did
        assert session.peer.binding.valid
        assert session.negotiated.server_auth_mode is ServerAuthMode.DID_DEFAULT
        assert session.negotiated.server_did_methods == ("key",)
        assert not session.negotiated.identification_enabled

        server_session = server.sessions[0]
        assert server_session.peer.mode is PeerAuthMode.DID
        assert server_session.peer.peer_did == client.did
        assert server_session.offer.client_auth_mode is ClientAuthMode.DID


def test_target_server_did_selects_identity(serve, key_identity, key_did_bundle):
    server = serve(did_server_config(key_did_bundle))
    offer = NegotiationOffer(target_server_did=key_identity.did)

    with connect(server.address, ClientConfig(offer=offer, resolver=default_resolver())) as session:
        assert session.peer.peer_did == key_identity.did
        assert session.negotiated.server_auth_mode is ServerAuthMode.DID


def test_unexpected_server_did_is_rejected(serve, key_did_bundle):
    server = serve(did_server_config(key_did_bundle))
    offer = NegotiationOffer(target_server_did=create_identity("key").did)

    with pytest.raises(BindingInvalid) as excinfo:
        connect(server.address, ClientConfig(offer=offer, resolver=default_resolver()))
    assert excinfo.value.reason == "did_mismatch"


def test_ca_server_with_did_client(serve, ca_root, ca_server_bundle):
    client = create_identity("key")
    server = serve(did_server_config(ca_server_bundle))
    config = ClientConfig(
        identity=make_did_certificate(client.did, client.key),
        offer=NegotiationOffer(target_server_name="localhost", client_did_methods=("key",), client_auth_mode=ClientAuthMode.DID),
        resolver=default_resolver(),
        trust_roots=[ca_root.certificate_der],
    )

    with connect(server.address, config) as session:
        session.send_message(b"x")
        assert session.recv_message() == b"x"
        assert session.peer.mode is PeerAuthMode.CERT_CHAIN
        assert session.negotiated.server_auth_mode is ServerAuthMode.CERT
        assert server.sessions[0].peer.mode is PeerAuthMode.DID


def test_ca_server_needs_trust_root(serve, ca_server_bundle):
    server = serve(did_server_config(ca_server_bundle))
    config = ClientConfig(offer=NegotiationOffer(target_server_name="localhost"), resolver=default_resolver())

    with pytest.raises(BindingInvalid) as excinfo:
        connect(server.address, config)
    assert excinfo.value.reason == "untrusted_root"


def test_derived_identifier_server(serve):
    bundle = make_derived_id_certificate(generate_keypair())
    server = serve(ServerConfig(capabilities=ServerCapabilities((), (), [bundle], bundle)))

    with connect(server.address, ClientConfig()) as session:
        assert session.peer.mode is PeerAuthMode.DERIVED_ID
        assert session.peer.resolution_source is ResolutionOutcome.NONE_NEEDED
        assert session.negotiated.server_auth_mode is ServerAuthMode.DERIVED_DEFAULT


def test_server_impersonation_is_detected(serve):
    victim = create_identity("key")
    forged = make_did_certificate(victim.did, generate_keypair())
    server = serve(did_server_config(forged))

    with pytest.raises(BindingInvalid) as excinfo:
        connect(server.address, ClientConfig(resolver=default_resolver()))
    assert excinfo.value.reason == "key_not_in_document"


def test_client_impersonation_is_detected(serve, key_did_bundle, wait_until):
    victim = create_identity("key")
    forged = make_did_certificate(victim.did, generate_keypair())
    server = serve(did_server_config(key_did_bundle))
    config = ClientConfig(identity=forged, offer=did_client_offer(), resolver=default_resolver())

    with pytest.raises(DidLinkError):
        session = connect(server.address, config)
        session.recv_message()
    wait_until(lambda: server.failures)
    assert isinstance(server.failures[0], BindingInvalid)
    assert server.failures[0].reason == "key_not_in_document"


def test_client_certificate_required(serve, key_did_bundle, wait_until):
    server = serve(did_server_config(key_did_bundle, client_auth_required=True))

    with pytest.raises((HandshakeRejected, TransportError)):
        session = connect(server.address, ClientConfig(resolver=default_resolver()))
        session.recv_message()
    wait_until(lambda: server.failures)
    assert isinstance(server.failures[0], HandshakeRejected)
    assert server.failures[0].reason == "client_certificate_required"


def test_negotiation_rejection_reaches_client(serve, key_did_bundle):
    server = serve(did_server_config(key_did_bundle))
    offer = NegotiationOffer(client_did_methods=("vdrsim",))

    with pytest.raises(HandshakeRejected) as excinfo:
        connect(server.address, ClientConfig(offer=offer, resolver=default_resolver()))
    assert excinfo.value.reason == "no_common_method"


def test_rotation_needs_fresh_resolution(serve, resolver, vdr_client, anchored_identity):
    identity = anchored_identity()
    server = serve(did_server_config(make_did_certificate(identity.did, identity.key), methods=("vdrsim",)))
    config = ClientConfig(resolver=resolver)

    with connect(server.address, config) as session:
        assert session.peer.resolution_source is ResolutionOutcome.METHOD_HANDLER
    with connect(server.address, config) as session:
        assert session.peer.resolution_source is ResolutionOutcome.CACHE

    rotated = identity.rotated(generate_keypair())
    vdr_client.publish_update(rotated.document, identity.key, identity.key_id)
    rotated_server = serve(did_server_config(make_did_certificate(rotated.did, rotated.key), methods=("vdrsim",)))

    with pytest.raises(BindingInvalid) as excinfo:
        connect(rotated_server.address, config)
    assert excinfo.value.reason == "key_not_in_document"

    fresh = ClientConfig(resolver=resolver, cache_policy=CachePolicy(mode=CacheMode.FORCE_RESOLVE))
    with connect(rotated_server.address, fresh) as session:
        assert session.peer.resolution_source is ResolutionOutcome.METHOD_HANDLER
        assert session.peer.binding.matched_method_id == rotated.key_id


def test_resolution_modes_agree(serve, vdr_client, anchored_identity):
    server_identity, client_identity = anchored_identity(), anchored_identity()
    server_bundle = make_did_certificate(server_identity.did, server_identity.key)
    client_bundle = make_did_certificate(client_identity.did, client_identity.key)
    ignored = {"handshake_duration", "resolve_duration"}
    results = {}

    for mode in ResolutionMode:
        seen = []
        server = serve(
            did_server_config(
                server_bundle, methods=("vdrsim",), resolver=default_resolver(vdr_client), resolution_mode=mode
            )
        )
        server.on_session = lambda session: seen.append(session.peer)
        config = ClientConfig(
            identity=client_bundle,
            offer=did_client_offer(("vdrsim",)),
            resolver=default_resolver(vdr_client),
            resolution_mode=mode,
        )
        with connect(server.address, config) as session:
            session.send_message(b"m")
            assert session.recv_message() == b"m"
            results[mode] = (session.peer.model_dump(exclude=ignored), seen[0].model_dump(exclude=ignored))

    assert results[ResolutionMode.PARALLEL] == results[ResolutionMode.SEQUENTIAL]
    client_view, server_view = results[ResolutionMode.PARALLEL]
    assert client_view["peer_did"] == server_identity.did
    assert client_view["resolution_source"] is ResolutionOutcome.METHOD_HANDLER
    assert server_view["peer_did"] == client_identity.did


def test_messages_of_any_size(serve, key_did_bundle):
    server = serve(did_server_config(key_did_bundle))

    with connect(server.address, ClientConfig(resolver=default_resolver())) as session:
        for message in (b"", b"a", bytes(range(256)) * 400):
            session.send_message(message)
            assert session.recv_message() == message
        summary = session.summary()

    assert summary["role"] == "client"
    assert summary["peer"]["mode"] == PeerAuthMode.DID.value
    assert summary["bytes_sent"] > 0
    assert summary["bytes_received"] > 0


# Server bookkeeping

def test_finished_sessions_are_released(serve, key_did_bundle, wait_until):
    server = serve(did_server_config(key_did_bundle))
    for n in range(3):
        with connect(server.address, ClientConfig(resolver=default_resolver())) as session:
            session.send_message(b"%d" % n)
            assert session.recv_message() == b"%d" % n
            assert server.sessions

    wait_until(lambda: server.accepted == 3 and not server.sessions)


def test_failure_history_is_bounded(serve, key_did_bundle, wait_until):
    server = serve(did_server_config(key_did_bundle, client_auth_required=True), failure_history=2)
    for _ in range(3):
        with pytest.raises((HandshakeRejected, TransportError)):
            session = connect(server.address, ClientConfig(resolver=default_resolver()))
            session.recv_message()

    wait_until(lambda: server.refused == 3)
    assert len(server.failures) == 2


def test_reset_during_handshake_is_reported(serve, key_did_bundle, wait_until):
    server = serve(did_server_config(key_did_bundle))
    seen = []
    server.on_failure = seen.append

    raw = socket.create_connection(server.address)
    raw.sendall(b"\x16\x03\x01")
    raw.setsockopt(socket.SOL_SOCKET, socket.SO_LINGER, struct.pack("ii", 1, 0))
    raw.close()

    wait_until(lambda: seen)
    assert isinstance(seen[0], TransportError)
    assert server.refused == 1
    assert not server.sessions


def test_socket_errors_outside_the_handshake_close_the_connection(serve, key_did_bundle, wait_until, monkeypatch):
    def reset(sock, config, peer):
        raise ConnectionResetError(104, "Connection reset by peer")

    monkeypatch.setattr(session_module, "accept", reset)
    server = serve(did_server_config(key_did_bundle))
    seen = []
    server.on_failure = seen.append

    with socket.create_connection(server.address, timeout=2.0) as raw:
        wait_until(lambda: seen)
        assert raw.recv(1) == b""
    assert isinstance(seen[0], TransportError)


def test_client_socket_is_closed_when_identity_is_unusable(ca_root, monkeypatch):
    opened = []
    create_connection = socket.create_connection

    def tracking(*args, **kwargs):
        sock = create_connection(*args, **kwargs)
        opened.append(sock)
        return sock

    listener = socket.create_server(("127.0.0.1", 0))
    monkeypatch.setattr(socket, "create_connection", tracking)
    try:
        with pytest.raises(ValueError):
            connect(listener.getsockname(), ClientConfig(identity=ca_root))
    finally:
        listener.close()
    assert opened[0].fileno() == -1
