"""
Shared fixtures for the didlink test suite.
"""

import time

import pytest

from didlink.cert_kit import generate_keypair, issue_ca_certificate, make_ca_root, make_did_certificate
from didlink.channel.session import DidLinkServer, echo_handler
from didlink.did_core import default_resolver
from didlink.identity import create_identity
from didlink.vdr.client import VdrClient
from didlink.vdr.server import run_in_thread


@pytest.fixture
def data_dir(tmp_path):
    path = tmp_path / "didlink"
    path.mkdir()
    return path


@pytest.fixture
def vdr(tmp_path):
    running = run_in_thread(tmp_path / "registry")
    yield running
    running.stop()


@pytest.fixture
def vdr_client(vdr):
    with VdrClient(vdr.address_text) as client:
        yield client


@pytest.fixture
def resolver(vdr_client):
    resolver = default_resolver(vdr_client)
    yield resolver
    resolver.close()


@pytest.fixture
def anchored_identity(vdr_client):
    """Factory for vdrsim identities already published on the registry."""

    def make(**kwargs):
        identity = create_identity("vdrsim", **kwargs)
        vdr_client.publish(identity.document, identity.key)
        return identity

    return make


@pytest.fixture
def key_identity():
    return create_identity("key")


@pytest.fixture
def ca_root():
    return make_ca_root("didlink test CA")


@pytest.fixture
def ca_server_bundle(ca_root):
    return issue_ca_certificate(ca_root, "localhost", generate_keypair())


@pytest.fixture
def key_did_bundle(key_identity):
    return make_did_certificate(key_identity.did, key_identity.key)


@pytest.fixture
def serve():
    """Factory for DID Link servers stopped after the test."""
    servers = []

    def start(config, handler=echo_handler, **kwargs):
        server = DidLinkServer(config, handler=handler, **kwargs)
        server.start()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.stop()


@pytest.fixture
def wait_until():
    def wait(predicate, timeout=5.0):
        deadline = time.monotonic() + timeout
        while not predicate():
            if time.monotonic() > deadline:
                raise AssertionError("condition not reached in time")
            time.sleep(0.01)

    return wait
