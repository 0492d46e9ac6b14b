"""
Test script for the didlink command line.

Commands run in-process through main(); JSON output is read back from stdout.
"""

import json

import pytest

from didlink.cli import build_parser, main
from didlink.identity import create_identity


@pytest.fixture
def run(capsys):
    def invoke(*argv):
        code = main([str(a) for a in argv])
        out = capsys.readouterr().out
        return code, json.loads(out) if out.strip().startswith("{") else out
    return invoke


@pytest.fixture
def registry(vdr):
    return ["--vdr", vdr.address_text]


def create(run, registry, tmp_path, name, method="vdrsim"):
    path = tmp_path / f"{name}.json"
    code, body = run("did", "create", "--method", method, "--out", path, "--json", *registry)
    assert code == 0
    return body["did"], path


# Test 1: DID lifecycle on the registry
def test_did_create_resolve_update(run, registry, tmp_path, vdr):
    did, path = create(run, registry, tmp_path, "alice")
    assert did.startswith("did:vdrsim:")
    assert vdr.ledger.seq == 1

    code, body = run("did", "resolve", did, "--json", *registry)
    assert code == 0
    assert body["source"] == "method_handler"
    assert body["document"]["id"] == did

    code, body = run("did", "update", "--identity", path, "--json", *registry)
    assert code == 0
    assert body["version"] == 2
    assert body["key_id"] == "key-2"

    code, body = run("did", "resolve", did, "--json", "--force", *registry)
    assert body["document"]["version"] == 2


# Test 2: did:key needs no registry
def test_key_did_is_not_anchored(run, registry, tmp_path, vdr):
    did, path = create(run, registry, tmp_path, "bob", method="key")
    assert did.startswith("did:key:z")
    assert path.exists()
    assert vdr.ledger.seq == 0


# Test 3: unknown DID maps to not_found with exit code 1
def test_unknown_did(run, registry):
    code, body = run("did", "resolve", create_identity("vdrsim").did.full, "--json", *registry)
    assert code == 1
    assert body["error"] in ("not_found", "resolution_failed")
    assert body["suggestion"]


# Test 4: certificates
def test_cert_make_and_inspect(run, registry, tmp_path):
    did, identity = create(run, registry, tmp_path, "server", method="key")
    bundle = tmp_path / "server-cert.json"

    code, body = run("cert", "make-did", "--identity", identity, "--out", bundle, "--pem-dir", tmp_path / "pem", "--json")
    assert code == 0
    assert body["did"] == did
    assert body["kind"] == "did_self_issued"

    code, body = run("cert", "inspect", tmp_path / "pem" / "cert.pem")
    assert code == 0
    assert body["did"] == did
    assert body["subject"] == body["issuer"]


def test_ca_chain(run, tmp_path):
    root = tmp_path / "root.json"
    leaf = tmp_path / "leaf.json"
    assert run("cert", "ca-root", "--name", "Test Root", "--out", root, "--json")[0] == 0

    code, body = run("cert", "ca-issue", "--ca", root, "--name", "localhost", "--out", leaf, "--json")
    assert code == 0
    assert body["kind"] == "ca_issued"
    assert body["san_dns"] == ["localhost"]
    assert body["did"] is None


# Test 5: credentials
def test_credential_issue_present_verify(run, registry, tmp_path):
    issuer_did, issuer = create(run, registry, tmp_path, "issuer", method="key")
    holder_did, holder = create(run, registry, tmp_path, "holder", method="key")
    credential = tmp_path / "vc.txt"
    presentation = tmp_path / "vp.txt"

    code, body = run(
        "vc", "issue", "--issuer", issuer, "--subject", holder_did,
        "--claim", "org=ExampleCo", "--claim", "level=3", "--out", credential, "--json",
    )
    assert code == 0
    assert body["claims"] == ["level", "org"]

    code, _ = run(
        "vc", "present", "--credential", credential, "--disclose", "org", "--holder", holder,
        "--nonce", "n-7", "--audience", "did:key:verifier", "--out", presentation, "--json",
    )
    assert code == 0

    code, body = run(
        "vc", "verify", "--presentation", presentation, "--accept-issuer", issuer_did,
        "--nonce", "n-7", "--audience", "did:key:verifier", "--require-claims", "org", "--json", *registry,
    )
    assert code == 0
    assert body["claims"] == {"org": "ExampleCo"}
    assert body["status"] == "valid"
    assert body["holder_binding_checked"] is True

    code, body = run(
        "vc", "verify", "--presentation", presentation, "--nonce", "n-8",
        "--audience", "did:key:verifier", "--json", *registry,
    )
    assert code == 1
    assert body["error"] == "holder_binding_invalid"


# Test 6: usage errors exit with 2
def test_bad_claim_syntax(run, registry, tmp_path):
    _, issuer = create(run, registry, tmp_path, "issuer", method="key")
    code, body = run("vc", "issue", "--issuer", issuer, "--subject", create_identity("key").did.full, "--claim", "org", "--json")
    assert code == 2
    assert body["error"] == "usage_error"


def test_holder_binding_needs_nonce(run, registry, tmp_path):
    _, issuer = create(run, registry, tmp_path, "issuer", method="key")
    holder_did, holder = create(run, registry, tmp_path, "holder", method="key")
    credential = tmp_path / "vc.txt"
    run("vc", "issue", "--issuer", issuer, "--subject", holder_did, "--claim", "org=ExampleCo", "--out", credential)

    code, _ = run("vc", "present", "--credential", credential, "--disclose", "org", "--holder", holder)
    assert code == 2


def test_transfer_packets_must_be_positive(run):
    assert run("bench", "transfer", "--packets", "0,2")[0] == 2
    assert run("bench", "transfer", "--packets", "one")[0] == 2


def test_invalid_registry_address(run):
    code, body = run("vdr", "status", "get", "--list-id", "x", "--index", "0", "--vdr", "nowhere", "--json")
    assert code == 1
    assert body["error"] == "config_error"


# Test 7: status lists
def test_status_list_commands(run, registry, tmp_path):
    _, owner = create(run, registry, tmp_path, "owner")

    assert run("vdr", "status", "create", "--identity", owner, "--list-id", "staff", "--size", 16, *registry)[0] == 0
    assert run("vdr", "status", "get", "--list-id", "staff", "--index", 3, *registry)[1].strip() == "valid"

    code, body = run("vdr", "status", "set", "--identity", owner, "--list-id", "staff", "--index", 3, "--json", *registry)
    assert code == 0
    assert body["status"] == "revoked"
    assert run("vdr", "status", "get", "--list-id", "staff", "--index", 3, *registry)[1].strip() == "revoked"

    run("vdr", "status", "set", "--identity", owner, "--list-id", "staff", "--index", 3, "--valid", *registry)
    assert run("vdr", "status", "get", "--list-id", "staff", "--index", 3, *registry)[1].strip() == "valid"


# Test 8: parser
def test_every_command_has_a_handler():
    parser = build_parser()
    args = parser.parse_args(["bench", "scenario", "--id", "VII", "--reps", "3"])
    assert args.func.__name__ == "cmd_bench_scenario"
    assert args.reps == 3
    with pytest.raises(SystemExit):
        parser.parse_args(["did"])
