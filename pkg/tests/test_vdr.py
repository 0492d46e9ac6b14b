"""
Tests for the simulated registry: ledger rules, log replay, the stream
server and its client.
"""

import errno
import random
import threading
import time

import pytest

from didlink.cert_kit import generate_keypair
from didlink.codec import canonical_json
from didlink.errors import (
    AlreadyAnchored,
    BadSignature,
    CorruptLog,
    DuplicateList,
    IndexOutOfRange,
    IoFailure,
    MalformedDocument,
    NotFound,
    RegistryUnavailable,
    UnauthorizedKey,
    VersionConflict,
)
from didlink.identity import create_identity
from didlink.vdr.client import VdrClient
from didlink.vdr.ledger import GENESIS_HASH, LatencyProfile, Ledger, status_create_payload, status_set_payload
from didlink.vdr.server import run_in_thread


def anchor(ledger, identity):
    return ledger.anchor_did(identity.document, identity.key.sign(identity.document.canonical_bytes()))


def populated_ledger(path):
    """Ledger with one anchor, one update, one status list and one status change."""
    ledger = Ledger(path)
    issuer = create_identity("vdrsim")
    anchor(ledger, issuer)
    rotated = issuer.rotated(generate_keypair(), retain_old=True)
    ledger.update_did(issuer.did, rotated.document, issuer.key.sign(rotated.document.canonical_bytes()), issuer.key_id)
    payload = canonical_json(status_create_payload("list-1", issuer.did, 64))
    ledger.create_status_list("list-1", issuer.did, 64, issuer.key.sign(payload), issuer.key_id)
    payload = canonical_json(status_set_payload("list-1", 3, True, 2))
    ledger.set_status("list-1", 3, True, issuer.key.sign(payload), issuer.key_id, 2)
    ledger.close()
    return issuer


# Ledger rules

def test_anchor_and_lookup():
    ledger = Ledger()
    identity = create_identity("vdrsim")
    assert anchor(ledger, identity) == 1
    assert ledger.lookup(identity.did) == identity.document
    assert ledger.dids() == [identity.did.full]
    assert ledger.head_hash != GENESIS_HASH


def test_duplicate_anchor_is_refused():
    ledger = Ledger()
    identity = create_identity("vdrsim")
    anchor(ledger, identity)
    with pytest.raises(AlreadyAnchored):
        anchor(ledger, identity)
    assert ledger.seq == 1


def test_anchor_needs_self_signature():
    ledger = Ledger()
    identity = create_identity("vdrsim")
    with pytest.raises(BadSignature):
        ledger.anchor_did(identity.document, generate_keypair().sign(identity.document.canonical_bytes()))


def test_genesis_must_be_version_one():
    ledger = Ledger()
    identity = create_identity("vdrsim")
    later = identity.document.next_version(identity.document.verification_methods)
    with pytest.raises(MalformedDocument):
        ledger.anchor_did(later, identity.key.sign(later.canonical_bytes()))
    assert ledger.seq == 0


def test_unknown_did_is_not_found():
    with pytest.raises(NotFound):
        Ledger().lookup(create_identity("vdrsim").did)


def test_update_rules():
    ledger = Ledger()
    identity = create_identity("vdrsim")
    anchor(ledger, identity)
    rotated = identity.rotated(generate_keypair())
    body = rotated.document.canonical_bytes()

    # Signer must be an authentication key of the current version
    with pytest.raises(UnauthorizedKey):
        ledger.update_did(identity.did, rotated.document, rotated.key.sign(body), rotated.key_id)
    with pytest.raises(BadSignature):
        ledger.update_did(identity.did, rotated.document, generate_keypair().sign(body), identity.key_id)

    skipped = rotated.document.next_version(rotated.document.verification_methods)
    with pytest.raises(VersionConflict):
        ledger.update_did(identity.did, skipped, identity.key.sign(skipped.canonical_bytes()), identity.key_id)

    assert ledger.update_did(identity.did, rotated.document, identity.key.sign(body), identity.key_id) == 2
    assert ledger.lookup(identity.did).version == 2
    assert [d.version for d in ledger.history(identity.did)] == [1, 2]
    assert ledger.lookup(identity.did).method(identity.key_id) is None


def test_status_list_rules():
    ledger = Ledger()
    owner, stranger = create_identity("vdrsim"), create_identity("vdrsim")
    anchor(ledger, owner)
    anchor(ledger, stranger)
    payload = canonical_json(status_create_payload("list-1", owner.did, 8))

    with pytest.raises(BadSignature):
        ledger.create_status_list("list-1", owner.did, 8, stranger.key.sign(payload), owner.key_id)
    with pytest.raises(UnauthorizedKey):
        ledger.create_status_list("list-1", owner.did, 8, owner.key.sign(payload), "x25519-1")
    ledger.create_status_list("list-1", owner.did, 8, owner.key.sign(payload), owner.key_id)
    with pytest.raises(DuplicateList):
        ledger.create_status_list("list-1", owner.did, 8, owner.key.sign(payload), owner.key_id)

    assert ledger.get_status("list-1", 7) is False
    with pytest.raises(IndexOutOfRange):
        ledger.get_status("list-1", 8)

    stale = canonical_json(status_set_payload("list-1", 7, True, 1))
    with pytest.raises(VersionConflict):
        ledger.set_status("list-1", 7, True, owner.key.sign(stale), owner.key_id, 1)
    fresh = canonical_json(status_set_payload("list-1", 7, True, 2))
    ledger.set_status("list-1", 7, True, owner.key.sign(fresh), owner.key_id, 2)
    assert ledger.get_status("list-1", 7) is True
    assert ledger.status_info("list-1")["revoked_count"] == 1
    with pytest.raises(NotFound):
        ledger.get_status("missing", 0)


# Log persistence

def test_replay_restores_state(tmp_path):
    path = tmp_path / "ledger.ndjson"
    issuer = populated_ledger(path)
    original = path.read_bytes()

    replayed = Ledger(path)

    assert replayed.seq == 4
    assert replayed.lookup(issuer.did).version == 2
    assert replayed.get_status("list-1", 3) is True
    assert [r.seq for r in replayed.records()] == [1, 2, 3, 4]
    replayed.close()
    assert path.read_bytes() == original


def test_log_records_chain_hashes(tmp_path):
    path = tmp_path / "ledger.ndjson"
    populated_ledger(path)
    ledger = Ledger(path)
    records = ledger.records()
    assert records[0].prev_hash == GENESIS_HASH
    for record in records:
        assert record.hash == record.compute_hash()
    ledger.close()


def test_any_flipped_byte_is_detected(tmp_path):
    path = tmp_path / "ledger.ndjson"
    populated_ledger(path)
    original = path.read_bytes()
    rng = random.Random(7)
    damaged = tmp_path / "damaged.ndjson"

    for _ in range(1_000):
        position = rng.randrange(len(original))
        data = bytearray(original)
        data[position] ^= 0x01
        damaged.write_bytes(bytes(data))
        with pytest.raises(CorruptLog):
            Ledger(damaged)


def test_truncated_log_is_detected(tmp_path):
    path = tmp_path / "ledger.ndjson"
    populated_ledger(path)
    original = path.read_bytes()
    path.write_bytes(original[:-10])
    with pytest.raises(CorruptLog):
        Ledger(path)


def test_dropped_record_breaks_the_chain(tmp_path):
    path = tmp_path / "ledger.ndjson"
    populated_ledger(path)
    lines = path.read_bytes().splitlines(keepends=True)
    path.write_bytes(lines[0] + b"".join(lines[2:]))
    with pytest.raises(CorruptLog):
        Ledger(path)


class FullDisk:
    """Log file stand-in whose writes fail like a full disk."""

    def __init__(self, inner):
        self.inner = inner

    def write(self, data):
        raise OSError(errno.ENOSPC, "No space left on device")

    def __getattr__(self, name):
        return getattr(self.inner, name)


def test_failed_log_write_leaves_state_untouched(tmp_path):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(path)
    first, second = create_identity("vdrsim"), create_identity("vdrsim")
    anchor(ledger, first)
    head, size = ledger.head_hash, path.stat().st_size

    ledger._log_file = FullDisk(ledger._log_file)
    with pytest.raises(IoFailure):
        anchor(ledger, second)
    payload = canonical_json(status_create_payload("list-1", first.did, 8))
    with pytest.raises(IoFailure):
        ledger.create_status_list("list-1", first.did, 8, first.key.sign(payload), first.key_id)

    assert ledger.seq == 1
    assert ledger.head_hash == head
    assert path.stat().st_size == size
    with pytest.raises(NotFound):
        ledger.lookup(second.did)
    with pytest.raises(NotFound):
        ledger.status_info("list-1")

    ledger._log_file = ledger._log_file.inner
    assert anchor(ledger, second) == 2
    ledger.close()
    assert Ledger(path).dids() == sorted([first.did.full, second.did.full])


# Server and client

def test_client_round_trip(vdr_client, anchored_identity):
    identity = anchored_identity()
    assert vdr_client.lookup(identity.did) == identity.document
    assert vdr_client.ping()["seq"] == 1


def test_client_maps_registry_errors(vdr_client, anchored_identity):
    identity = anchored_identity()
    with pytest.raises(AlreadyAnchored):
        vdr_client.publish(identity.document, identity.key)
    with pytest.raises(NotFound):
        vdr_client.lookup(create_identity("vdrsim").did)
    # Connection survives refused requests
    assert vdr_client.lookup(identity.did).version == 1


def test_rotation_through_client(vdr_client, anchored_identity):
    identity = anchored_identity()
    rotated = identity.rotated(generate_keypair())

    vdr_client.publish_update(rotated.document, identity.key, identity.key_id)

    assert vdr_client.lookup(identity.did).version == 2
    assert len(vdr_client.history(identity.did)) == 2
    with pytest.raises(UnauthorizedKey):
        again = rotated.rotated(generate_keypair())
        vdr_client.publish_update(again.document, identity.key, identity.key_id)


def test_status_list_through_client(vdr_client, anchored_identity):
    issuer = anchored_identity()
    vdr_client.create_status_list_signed("creds", issuer.did, 32, issuer.key, issuer.key_id)

    vdr_client.set_status_signed("creds", 5, True, issuer.key, issuer.key_id)
    assert vdr_client.get_status("creds", 5) is True
    vdr_client.set_status_signed("creds", 5, False, issuer.key, issuer.key_id)
    assert vdr_client.get_status("creds", 5) is False
    assert vdr_client.status_info("creds")["version"] == 3
    with pytest.raises(IndexOutOfRange):
        vdr_client.get_status("creds", 32)


def test_concurrent_writers_get_gapless_sequence(vdr):
    seqs = []
    errors = []
    lock = threading.Lock()

    def writer():
        identity = create_identity("vdrsim")
        try:
            with VdrClient(vdr.address_text) as client:
                seq = client.publish(identity.document, identity.key)
        except Exception as exc:
            errors.append(exc)
            return
        with lock:
            seqs.append(seq)

    threads = [threading.Thread(target=writer) for _ in range(16)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join(timeout=30)

    assert not errors
    assert sorted(seqs) == list(range(1, 17))
    assert vdr.ledger.seq == 16


def test_writer_survives_failed_writes(vdr, vdr_client, monkeypatch):
    identity = create_identity("vdrsim")
    original = vdr.ledger._log_file
    vdr.ledger._log_file = FullDisk(original)
    with pytest.raises(IoFailure):
        vdr_client.publish(identity.document, identity.key)
    vdr.ledger._log_file = original

    def crash(*args, **kwargs):
        raise RuntimeError("boom")

    monkeypatch.setattr(vdr.ledger, "anchor_did", crash)
    with VdrClient(vdr.address_text, timeout=2.0) as client:
        with pytest.raises(RegistryUnavailable):
            client.publish(identity.document, identity.key)
    monkeypatch.undo()

    with VdrClient(vdr.address_text, timeout=2.0) as client:
        assert client.publish(identity.document, identity.key) == 1
    assert vdr.ledger.lookup(identity.did) == identity.document


def test_registry_persists_across_restarts(tmp_path):
    data = tmp_path / "registry"
    identity = create_identity("vdrsim")
    with run_in_thread(data) as running:
        with VdrClient(running.address_text) as client:
            client.publish(identity.document, identity.key)
    with run_in_thread(data) as running:
        with VdrClient(running.address_text) as client:
            assert client.lookup(identity.did) == identity.document


def test_read_latency_is_applied(tmp_path):
    identity = create_identity("vdrsim")
    with run_in_thread(latency=LatencyProfile(read_delay=50.0)) as running:
        with VdrClient(running.address_text) as client:
            client.publish(identity.document, identity.key)
            started = time.perf_counter()
            client.lookup(identity.did)
            elapsed = time.perf_counter() - started
    assert elapsed >= 0.045


def test_unreachable_registry():
    with run_in_thread() as running:
        address = running.address_text
    with VdrClient(address, timeout=1.0) as client:
        with pytest.raises(RegistryUnavailable):
            client.ping()
