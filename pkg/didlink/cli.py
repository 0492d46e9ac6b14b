"""
Command-line entry point: `didlink <command> ...`.

Exit codes: 0 success, 1 domain error (DidLinkError), 2 usage error.
"""

import argparse
import json
import sys
import threading
from datetime import timedelta
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .cert_kit import (
    CertBundle,
    CertKind,
    generate_keypair,
    inspect_certificate,
    issue_ca_certificate,
    make_ca_root,
    make_derived_id_certificate,
    make_did_certificate,
    pem_to_der,
    default_validity,
)
from .channel.session import ClientConfig, DidLinkServer, SecureSession, ServerConfig, connect, echo_handler
from .channel.verify import ResolutionMode
from .codec import utc_now
from .config import CliConfig, format_address, load_config, parse_address
from .did_core import CacheMode, KeyType, Resolver, default_resolver, document_from_file, parse_did
from .errors import DidLinkError, IoFailure, UsageError
from .identity import Identity, create_identity
from .identity_layer.engine import IdentificationConfig, IdentificationMode
from .identity_layer.presentation_exchange import RequestTemplate
from .monitoring import configure_logging, get_logger
from .negotiation import PROTOCOL_DIF_PE_2, ClientAuthMode, NegotiationOffer, ServerCapabilities
from .vc_sdjwt import (
    HolderBindingRequest,
    Presentation,
    SdJwtCredential,
    StatusRef,
    VerificationPolicy,
    derive_presentation,
    issue,
    verify_presentation,
)
from .vdr.client import VdrClient
from .vdr.ledger import LATENCY_PROFILES, LatencyProfile

logger = get_logger(__name__)

KEY_TYPES = {"ed25519": KeyType.ED25519, "p256": KeyType.ECDSA_P256}
DEFAULT_METHODS = "vdrsim,key,peer"


# Helpers

def _emit(args: argparse.Namespace, body: Dict[str, Any], text: Optional[str] = None) -> None:
    if args.json or text is None:
        print(json.dumps(body, indent=2, sort_keys=True, default=str))
    else:
        print(text)


def _csv(value: Optional[str]) -> List[str]:
    return [item.strip() for item in (value or "").split(",") if item.strip()]


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text().strip()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_certificate(path: str) -> bytes:
    """DER bytes from a bundle file, a PEM file or a DER file."""
    if path.endswith(".json"):
        return CertBundle.load(path).certificate_der
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return pem_to_der(data) if data.lstrip().startswith(b"-----BEGIN") else data


def _load_bundle(path: str) -> CertBundle:
    try:
        return CertBundle.load(path)
    except OSError as exc:
        raise IoFailure(f"cannot read bundle {path}: {exc}") from exc


def _parse_claims(pairs: Sequence[str]) -> Dict[str, Any]:
    claims: Dict[str, Any] = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise UsageError(f"claim {pair!r} is not name=value", suggestion="Use e.g. --claim org=ExampleCo.")
        try:
            claims[name] = json.loads(value)
        except json.JSONDecodeError:
            claims[name] = value
    return claims


def _vdr(args: argparse.Namespace) -> VdrClient:
    settings: CliConfig = args.settings
    return VdrClient(settings.vdr_address, timeout=settings.resolver_timeout)


def _resolver(args: argparse.Namespace, client: Optional[VdrClient] = None) -> Resolver:
    settings: CliConfig = args.settings
    resolver = default_resolver(
        client or _vdr(args), timeout=settings.resolver_timeout, default_policy=settings.cache_policy
    )
    fresh_until = utc_now() + timedelta(seconds=settings.cache_max_age)
    for path in getattr(args, "seed_doc", None) or []:
        resolver.seed_cache(document_from_file(path), fresh_until)
    return resolver


def _latency(args: argparse.Namespace) -> Optional[LatencyProfile]:
    base = LATENCY_PROFILES[args.profile] if getattr(args, "profile", None) else None
    if args.read_delay_ms is None and args.write_delay_ms is None and args.jitter_ms is None:
        return base
    base = base or LatencyProfile()
    return LatencyProfile(
        read_delay=base.read_delay if args.read_delay_ms is None else args.read_delay_ms,
        write_delay=base.write_delay if args.write_delay_ms is None else args.write_delay_ms,
        jitter=base.jitter if args.jitter_ms is None else args.jitter_ms,
    )


def _identification(args: argparse.Namespace, resolver: Resolver, client: VdrClient) -> Optional[IdentificationConfig]:
    credentials = [SdJwtCredential.parse(_read_text(p)) for p in args.credential or []]
    if not args.identify and not credentials:
        return None
    request = None
    if args.identify:
        request = RequestTemplate(
            required_claims=tuple(_csv(args.require_claims)),
            accepted_issuers=tuple(args.accept_issuer or ()),
        )
    return IdentificationConfig(
        credentials=credentials,
        holder=Identity.load(args.holder) if args.holder else None,
        request=request,
        mode=IdentificationMode(args.mode),
        resolver=resolver,
        status_checker=client if args.check_status else None,
        tolerate_refusal=args.tolerate_refusal,
    )


def _client_auth_mode(bundle: Optional[CertBundle], presents_vc: bool) -> ClientAuthMode:
    if bundle is None:
        return ClientAuthMode.NONE
    if bundle.kind is CertKind.DID_SELF_ISSUED:
        return ClientAuthMode.DID_VC if presents_vc else ClientAuthMode.DID
    if bundle.kind is CertKind.DERIVED_SELF_ISSUED:
        return ClientAuthMode.DERIVED
    return ClientAuthMode.CERT


# did

def cmd_did_create(args: argparse.Namespace) -> int:
    identity = create_identity(args.method, KEY_TYPES[args.key_type])
    out = Path(args.out) if args.out else args.settings.ensure_data_dir() / f"{identity.did.subject_id[-16:]}.json"
    body: Dict[str, Any] = {"did": identity.did.full, "identity_file": str(out), "anchored": False}
    if args.method == "vdrsim" and not args.no_anchor:
        with _vdr(args) as client:
            body["seq"] = client.publish(identity.document, identity.key, identity.key_id)
        body["anchored"] = True
    identity.save(out)
    _emit(args, body, identity.did.full)
    return 0


def cmd_did_resolve(args: argparse.Namespace) -> int:
    with _vdr(args) as client:
        resolver = _resolver(args, client)
        policy = args.settings.cache_policy
        if args.force:
            policy = policy.model_copy(update={"mode": CacheMode.FORCE_RESOLVE})
        result = resolver.resolve(parse_did(args.did), policy)
    document = result.document.to_json_dict()
    if args.json:
        _emit(args, {"document": document, "source": result.source.value, "resolved_in_ms": round(result.resolved_in, 3)})
    else:
        print(json.dumps(document, indent=2, sort_keys=True))
    return 0


def cmd_did_update(args: argparse.Namespace) -> int:
    current = Identity.load(args.identity)
    if current.did.method != "vdrsim":
        raise UsageError(f"did:{current.did.method} documents cannot be updated", suggestion="Only did:vdrsim identities live on the registry.")
    successor = current.rotated(generate_keypair(KEY_TYPES[args.key_type]), retain_old=args.retain_old)
    with _vdr(args) as client:
        seq = client.publish_update(successor.document, current.key, current.key_id)
    successor.save(args.out or args.identity)
    _emit(
        args,
        {"did": successor.did.full, "version": successor.document.version, "key_id": successor.key_id, "seq": seq},
        f"{successor.did.full} now at version {successor.document.version} ({successor.key_id})",
    )
    return 0


# vdr

def cmd_vdr_serve(args: argparse.Namespace) -> int:
    from .vdr.server import serve

    serve(args.bind, args.data, _latency(args), args.http_bind)
    return 0


def cmd_vdr_status_create(args: argparse.Namespace) -> int:
    owner = Identity.load(args.identity)
    with _vdr(args) as client:
        seq = client.create_status_list_signed(args.list_id, owner.did, args.size, owner.key, owner.key_id)
    _emit(args, {"list_id": args.list_id, "owner": owner.did.full, "size": args.size, "seq": seq}, args.list_id)
    return 0


def cmd_vdr_status_set(args: argparse.Namespace) -> int:
    owner = Identity.load(args.identity)
    with _vdr(args) as client:
        seq = client.set_status_signed(args.list_id, args.index, not args.valid, owner.key, owner.key_id)
    state = "valid" if args.valid else "revoked"
    _emit(args, {"list_id": args.list_id, "index": args.index, "status": state, "seq": seq}, state)
    return 0


def cmd_vdr_status_get(args: argparse.Namespace) -> int:
    with _vdr(args) as client:
        revoked = client.get_status(args.list_id, args.index)
    state = "revoked" if revoked else "valid"
    _emit(args, {"list_id": args.list_id, "index": args.index, "status": state}, state)
    return 0


# cert

def _save_bundle(args: argparse.Namespace, bundle: CertBundle) -> None:
    bundle.save(args.out, include_private=True)
    if args.pem_dir:
        bundle.export_pem(args.pem_dir)
    _emit(args, {"bundle": args.out, **inspect_certificate(bundle.certificate_der)}, args.out)


def cmd_cert_make_did(args: argparse.Namespace) -> int:
    identity = Identity.load(args.identity)
    _save_bundle(args, make_did_certificate(identity.did, identity.key, default_validity(args.days)))
    return 0


def cmd_cert_make_derived(args: argparse.Namespace) -> int:
    key = generate_keypair(KEY_TYPES[args.key_type])
    _save_bundle(args, make_derived_id_certificate(key, default_validity(args.days)))
    return 0


def cmd_cert_ca_root(args: argparse.Namespace) -> int:
    _save_bundle(args, make_ca_root(args.name, generate_keypair(KEY_TYPES[args.key_type])))
    return 0


def cmd_cert_ca_issue(args: argparse.Namespace) -> int:
    root = _load_bundle(args.ca)
    key = generate_keypair(KEY_TYPES[args.key_type])
    _save_bundle(args, issue_ca_certificate(root, args.name, key, default_validity(args.days)))
    return 0


def cmd_cert_inspect(args: argparse.Namespace) -> int:
    summary = inspect_certificate(_read_certificate(args.certificate))
    _emit(args, summary)
    return 0


# vc

def cmd_vc_issue(args: argparse.Namespace) -> int:
    issuer = Identity.load(args.issuer)
    status_ref = None
    if args.status_list is not None:
        if args.status_index is None:
            raise UsageError("--status-list needs --status-index")
        status_ref = StatusRef(list_id=args.status_list, index=args.status_index)
    now = utc_now()
    credential = issue(
        issuer.key,
        issuer.did,
        parse_did(args.subject),
        _parse_claims(args.claim),
        validity=(now, now + timedelta(days=args.days)),
        status_ref=status_ref,
        key_id=issuer.key_id,
    )
    compact = credential.serialize()
    if args.out:
        _write_text(args.out, compact)
    _emit(args, {"credential": compact, "issuer": issuer.did.full, "subject": args.subject, "claims": sorted(credential.claims)}, compact)
    return 0


def cmd_vc_present(args: argparse.Namespace) -> int:
    credential = SdJwtCredential.parse(_read_text(args.credential))
    binding = None
    if args.holder:
        if not args.nonce or not args.audience:
            raise UsageError("holder binding needs --nonce and --audience")
        holder = Identity.load(args.holder)
        binding = HolderBindingRequest(key=holder.key, key_id=holder.key_id, nonce=args.nonce, audience=args.audience)
    presentation = derive_presentation(credential, _csv(args.disclose), binding)
    compact = presentation.serialize()
    if args.out:
        _write_text(args.out, compact)
    _emit(args, {"presentation": compact, "disclosed": _csv(args.disclose), "holder_binding": binding is not None}, compact)
    return 0


def cmd_vc_verify(args: argparse.Namespace) -> int:
    presentation = Presentation.parse(_read_text(args.presentation))
    policy = VerificationPolicy(
        expected_subject=args.expect_subject,
        accepted_issuers=tuple(args.accept_issuer or ()),
        nonce=args.nonce,
        audience=args.audience,
        required_claims=tuple(_csv(args.require_claims)),
        reject_unusable=not args.report_status,
    )
    with _vdr(args) as client:
        verified = verify_presentation(
            presentation, policy, _resolver(args, client), client if args.check_status else None
        )
    body = verified.model_dump(mode="json")
    _emit(args, body, f"{verified.status.value}: {json.dumps(verified.claims, sort_keys=True)}")
    return 0


def cmd_vc_revoke(args: argparse.Namespace) -> int:
    issuer = Identity.load(args.issuer)
    credential = SdJwtCredential.parse(_read_text(args.credential))
    ref = credential.status_ref
    if ref is None:
        raise UsageError("credential carries no status reference", suggestion="Issue it with --status-list.")
    revoked = not args.restore
    with _vdr(args) as client:
        seq = client.set_status_signed(ref.list_id, ref.index, revoked, issuer.key, issuer.key_id)
    state = "revoked" if revoked else "valid"
    _emit(args, {"list_id": ref.list_id, "index": ref.index, "status": state, "seq": seq}, state)
    return 0


# channel

def cmd_serve(args: argparse.Namespace) -> int:
    bundles = [_load_bundle(p) for p in args.identity]
    client = _vdr(args)
    resolver = _resolver(args, client)
    identification = _identification(args, resolver, client)
    config = ServerConfig(
        capabilities=ServerCapabilities(
            supported_methods=tuple(_csv(args.methods)),
            supported_presentation_protocols=(PROTOCOL_DIF_PE_2,),
            available_identities=bundles,
            default_identity=bundles[0],
            presentable_credentials=bool(identification and identification.credentials),
        ),
        client_auth_required=args.require_client_auth,
        resolver=resolver,
        trust_roots=[_read_certificate(p) for p in args.trust_root or []],
        resolution_mode=ResolutionMode(args.resolution),
        identification=identification,
    )
    host, port = parse_address(args.bind)
    done = threading.Event()

    def handler(session: SecureSession) -> None:
        try:
            echo_handler(session)
        finally:
            done.set()

    def on_failure(exc: DidLinkError) -> None:
        _emit(args, {"failure": exc.to_dict()})
        done.set()

    server = DidLinkServer(config, host, port, handler=handler)
    server.on_session = lambda session: _emit(args, session.summary())
    server.on_failure = on_failure
    try:
        address = server.start()
        print(format_address(address), file=sys.stderr, flush=True)
        if args.once:
            done.wait()
        else:
            server.serve_forever()
    finally:
        server.stop()
        resolver.close()
        client.close()
    return 0


def cmd_connect(args: argparse.Namespace) -> int:
    bundle = _load_bundle(args.identity) if args.identity else None
    client = _vdr(args)
    resolver = _resolver(args, client)
    identification = _identification(args, resolver, client)
    presents_vc = bool(identification and identification.credentials)
    offer = NegotiationOffer(
        target_server_did=parse_did(args.expect_did) if args.expect_did else None,
        target_server_name=args.server_name,
        client_did=bundle.did if bundle is not None and bundle.did is not None else None,
        client_did_methods=tuple(_csv(args.methods)) if bundle is not None and bundle.did is not None else (),
        presentation_protocols=(PROTOCOL_DIF_PE_2,) if identification else (),
        client_auth_mode=_client_auth_mode(bundle, presents_vc),
    )
    config = ClientConfig(
        identity=bundle,
        offer=offer,
        resolver=resolver,
        trust_roots=[_read_certificate(p) for p in args.trust_root or []],
        resolution_mode=ResolutionMode(args.resolution),
        identification=identification,
    )
    try:
        with connect(parse_address(args.address), config) as session:
            body = session.summary()
            if args.message is not None:
                session.send_message(args.message.encode("utf-8"))
                body["reply"] = session.recv_message().decode("utf-8", errors="replace")
    finally:
        resolver.close()
        client.close()
    _emit(args, body)
    return 0


# bench

def cmd_bench_scenario(args: argparse.Namespace) -> int:
    from .bench.report import emit_report
    from .bench.scenarios import ScenarioId, run_scenario, scenario

    ids = [s.value for s in ScenarioId] if "all" in args.id else args.id
    overrides: Dict[str, Any] = {"resolution_mode": ResolutionMode(args.resolution)}
    if args.identify:
        overrides["identification_mode"] = IdentificationMode(args.mode)
    if args.force_resolve:
        overrides["force_resolve"] = True
    vdr_address = args.settings.vdr_address if args.external_vdr else None
    reports = []
    for sid in ids:
        s = scenario(sid, reps=args.reps, identification=args.identify, latency=_latency(args), **overrides)
        report = run_scenario(s, vdr_address)
        reports.append(report)
        if args.out:
            out = Path(args.out)
            if len(ids) > 1:
                out = out.with_name(f"{out.stem}-{sid}{out.suffix}")
            emit_report(report, out, args.format)
    if args.plot:
        from .bench.plots import plot_scenarios

        plot_scenarios(reports, args.plot)
    body = {r.scenario: {k: v.model_dump() for k, v in r.summary.items()} for r in reports}
    lines = [
        f"{r.scenario}: client {r.mean('client_setup_ms'):.2f} ms, server {r.mean('server_setup_ms'):.2f} ms"
        for r in reports
    ]
    _emit(args, body, "\n".join(lines))
    return 0


def cmd_bench_transfer(args: argparse.Namespace) -> int:
    from .bench.report import emit_report
    from .bench.transfer import crossover, linear_fit, run_transfer_comparison

    try:
        counts = [int(n) for n in _csv(args.packets)]
    except ValueError as exc:
        raise UsageError(f"--packets must list integers: {exc}") from exc
    if not counts or min(counts) < 1:
        raise UsageError("--packets needs positive packet counts")
    session, envelope = run_transfer_comparison(args.payload, counts, reps=args.reps)
    if args.out:
        out = Path(args.out)
        emit_report(session, out.with_name(f"{out.stem}-session{out.suffix}"), args.format)
        emit_report(envelope, out.with_name(f"{out.stem}-envelope{out.suffix}"), args.format)
    if args.plot:
        from .bench.plots import plot_transfer

        plot_transfer(session, envelope, args.plot)
    body: Dict[str, Any] = {"payload_size": args.payload, "packet_counts": counts, "crossover": crossover(session, envelope)}
    if len(counts) > 1:
        for name, report in (("session", session), ("envelope", envelope)):
            slope, intercept, r_squared = linear_fit(report, "bytes")
            body[f"{name}_bytes_fit"] = {"slope": slope, "intercept": intercept, "r_squared": r_squared}
    _emit(args, body, f"crossover at {body['crossover']} packets")
    return 0


# Parser

def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="Machine-readable JSON on stdout")
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--vdr", default=None, help="Registry address host:port (env DIDLINK_VDR)")
    common.add_argument("--data-dir", default=None)
    common.add_argument("--log-level", default=None)
    return common


def _add_latency_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=sorted(LATENCY_PROFILES), default=None, help="Named registry latency profile")
    p.add_argument("--read-delay-ms", type=float, default=None)
    p.add_argument("--write-delay-ms", type=float, default=None)
    p.add_argument("--jitter-ms", type=float, default=None)


def _add_identification_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--identify", action="store_true", help="Request a presentation from the peer")
    p.add_argument("--require-claims", default="", help="Comma-separated claim names")
    p.add_argument("--accept-issuer", action="append", help="Accepted issuer DID (repeatable)")
    p.add_argument("--mode", choices=[m.value for m in IdentificationMode], default=IdentificationMode.PARALLEL.value)
    p.add_argument("--credential", action="append", help="Credential file to present (repeatable)")
    p.add_argument("--holder", default=None, help="Identity file used for holder binding")
    p.add_argument("--check-status", action="store_true", help="Check revocation on the registry")
    p.add_argument("--tolerate-refusal", action="store_true")


def _add_channel_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--trust-root", action="append", help="CA certificate (bundle, PEM or DER)")
    p.add_argument("--methods", default=DEFAULT_METHODS, help="Supported DID methods")
    p.add_argument("--resolution", choices=[m.value for m in ResolutionMode], default=ResolutionMode.PARALLEL.value)
    p.add_argument("--seed-doc", action="append", help="DID document file to pre-cache (repeatable)")
    _add_identification_flags(p)


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="didlink", description="DID-authenticated TLS 1.3 channels")
    ap.add_argument("--version", action="version", version=f"didlink {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    did = sub.add_parser("did", help="Create, resolve and update DIDs")
    did_sub = did.add_subparsers(dest="did_cmd", required=True)
    p = did_sub.add_parser("create", parents=[common])
    p.add_argument("--method", choices=["vdrsim", "key", "peer"], default="vdrsim")
    p.add_argument("--key-type", choices=sorted(KEY_TYPES), default="ed25519")
    p.add_argument("--out", default=None, help="Identity file (default: data dir)")
    p.add_argument("--no-anchor", action="store_true", help="Do not anchor a did:vdrsim document")
    p.set_defaults(func=cmd_did_create)
    p = did_sub.add_parser("resolve", parents=[common])
    p.add_argument("did")
    p.add_argument("--force", action="store_true", help="Bypass the cache")
    p.set_defaults(func=cmd_did_resolve)
    p = did_sub.add_parser("update", parents=[common])
    p.add_argument("--identity", required=True)
    p.add_argument("--key-type", choices=sorted(KEY_TYPES), default="ed25519")
    p.add_argument("--retain-old", action="store_true", help="Add the new key instead of replacing the old one")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_did_update)

    vdr = sub.add_parser("vdr", help="Registry service and status lists")
    vdr_sub = vdr.add_subparsers(dest="vdr_cmd", required=True)
    p = vdr_sub.add_parser("serve", parents=[common])
    p.add_argument("--bind", default="127.0.0.1:7000")
    p.add_argument("--data", default=None, help="Append-only log file (default: in memory)")
    p.add_argument("--http-bind", default=None, help="Address for the HTTP inspection API")
    _add_latency_flags(p)
    p.set_defaults(func=cmd_vdr_serve)
    status = vdr_sub.add_parser("status", help="Revocation status lists")
    status_sub = status.add_subparsers(dest="status_cmd", required=True)
    p = status_sub.add_parser("create", parents=[common])
    p.add_argument("--identity", required=True)
    p.add_argument("--list-id", required=True)
    p.add_argument("--size", type=int, default=1024)
    p.set_defaults(func=cmd_vdr_status_create)
    p = status_sub.add_parser("set", parents=[common])
    p.add_argument("--identity", required=True)
    p.add_argument("--list-id", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--valid", action="store_true", help="Clear the bit instead of setting it")
    p.set_defaults(func=cmd_vdr_status_set)
    p = status_sub.add_parser("get", parents=[common])
    p.add_argument("--list-id", required=True)
    p.add_argument("--index", type=int, required=True)
    p.set_defaults(func=cmd_vdr_status_get)

    cert = sub.add_parser("cert", help="Certificates")
    cert_sub = cert.add_subparsers(dest="cert_cmd", required=True)
    p = cert_sub.add_parser("make-did", parents=[common])
    p.add_argument("--identity", required=True)
    p.set_defaults(func=cmd_cert_make_did)
    p = cert_sub.add_parser("make-derived", parents=[common])
    p.add_argument("--key-type", choices=sorted(KEY_TYPES), default="ed25519")
    p.set_defaults(func=cmd_cert_make_derived)
    p = cert_sub.add_parser("ca-root", parents=[common])
    p.add_argument("--name", required=True)
    p.add_argument("--key-type", choices=sorted(KEY_TYPES), default="ed25519")
    p.set_defaults(func=cmd_cert_ca_root)
    p = cert_sub.add_parser("ca-issue", parents=[common])
    p.add_argument("--ca", required=True, help="CA root bundle")
    p.add_argument("--name", required=True, help="Subject DNS name")
    p.add_argument("--key-type", choices=sorted(KEY_TYPES), default="ed25519")
    p.set_defaults(func=cmd_cert_ca_issue)
    for name in ("make-did", "make-derived", "ca-root", "ca-issue"):
        p = cert_sub.choices[name]
        p.add_argument("--out", required=True, help="Bundle file")
        p.add_argument("--pem-dir", default=None, help="Also write cert.pem, chain.pem and key.pem here")
        if name != "ca-root":
            p.add_argument("--days", type=int, default=365)
    p = cert_sub.add_parser("inspect", parents=[common])
    p.add_argument("certificate", help="Bundle, PEM or DER file")
    p.set_defaults(func=cmd_cert_inspect)

    vc = sub.add_parser("vc", help="SD-JWT credentials")
    vc_sub = vc.add_subparsers(dest="vc_cmd", required=True)
    p = vc_sub.add_parser("issue", parents=[common])
    p.add_argument("--issuer", required=True, help="Issuer identity file")
    p.add_argument("--subject", required=True)
    p.add_argument("--claim", action="append", required=True, help="name=value (repeatable)")
    p.add_argument("--days", type=int, default=365)
    p.add_argument("--status-list", default=None)
    p.add_argument("--status-index", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_vc_issue)
    p = vc_sub.add_parser("present", parents=[common])
    p.add_argument("--credential", required=True)
    p.add_argument("--disclose", required=True, help="Comma-separated claim names")
    p.add_argument("--holder", default=None)
    p.add_argument("--nonce", default=None)
    p.add_argument("--audience", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_vc_present)
    p = vc_sub.add_parser("verify", parents=[common])
    p.add_argument("--presentation", required=True)
    p.add_argument("--expect-subject", default=None)
    p.add_argument("--accept-issuer", action="append")
    p.add_argument("--nonce", default=None)
    p.add_argument("--audience", default=None)
    p.add_argument("--require-claims", default="")
    p.add_argument("--check-status", action="store_true")
    p.add_argument("--report-status", action="store_true", help="Report expired/revoked instead of failing")
    p.set_defaults(func=cmd_vc_verify)
    p = vc_sub.add_parser("revoke", parents=[common])
    p.add_argument("--issuer", required=True)
    p.add_argument("--credential", required=True)
    p.add_argument("--restore", action="store_true", help="Clear the revocation bit")
    p.set_defaults(func=cmd_vc_revoke)

    p = sub.add_parser("serve", parents=[common], help="Run a DID Link server")
    p.add_argument("--identity", action="append", required=True, help="Bundle file; the first is the default")
    p.add_argument("--bind", default="127.0.0.1:9443")
    p.add_argument("--require-client-auth", action="store_true")
    p.add_argument("--once", action="store_true", help="Exit after one connection")
    _add_channel_flags(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("connect", parents=[common], help="Open a DID Link session")
    p.add_argument("address")
    p.add_argument("--identity", default=None, help="Client bundle file")
    p.add_argument("--expect-did", default=None, help="Server DID to request via SNI")
    p.add_argument("--server-name", default=None, help="Server hostname to request via SNI")
    p.add_argument("--message", default=None, help="Send one message and print the echo")
    _add_channel_flags(p)
    p.set_defaults(func=cmd_connect)

    bench = sub.add_parser("bench", help="Benchmarks")
    bench_sub = bench.add_subparsers(dest="bench_cmd", required=True)
    p = bench_sub.add_parser("scenario", parents=[common])
    p.add_argument("--id", action="append", required=True, help="Scenario I..XII or 'all' (repeatable)")
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--identify", action="store_true")
    p.add_argument("--mode", choices=[m.value for m in IdentificationMode], default=IdentificationMode.PARALLEL.value)
    p.add_argument("--resolution", choices=[m.value for m in ResolutionMode], default=ResolutionMode.PARALLEL.value)
    p.add_argument("--force-resolve", action="store_true")
    p.add_argument("--external-vdr", action="store_true", help="Use the configured registry instead of an internal one")
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--plot", default=None, help="SVG chart path")
    _add_latency_flags(p)
    p.set_defaults(func=cmd_bench_scenario)
    p = bench_sub.add_parser("transfer", parents=[common])
    p.add_argument("--payload", type=int, default=1024)
    p.add_argument("--packets", default="1,2,3,4,5,6,7,8,9,10")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--plot", default=None, help="SVG chart path")
    p.set_defaults(func=cmd_bench_transfer)
    return ap


def _report_error(args: argparse.Namespace, exc: DidLinkError) -> None:
    if getattr(args, "json", False):
        print(json.dumps(exc.to_dict(), indent=2, sort_keys=True, default=str))
    else:
        print(f"error: {exc.code}: {exc.message}", file=sys.stderr)
        if exc.suggestion:
            print(f"hint: {exc.suggestion}", file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.settings = load_config(
            args.config,
            {"vdr_address": args.vdr, "data_dir": args.data_dir, "log_level": args.log_level},
        )
        configure_logging(args.settings.log_level, args.settings.log_format)
        return args.func(args)
    except UsageError as exc:
        _report_error(args, exc)
        return 2
    except DidLinkError as exc:
        logger.info("Command failed", command=args.cmd, error=exc.code)
        _report_error(args, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
