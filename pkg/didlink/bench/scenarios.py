"""
Handshake and identification scenarios I to XII.

    I            derived-identifier certificates on both sides
    II, III, IV  CA-issued certificates (local / remote_a / remote_b profile)
    V            DID certificates, both sides already cache the peer document
    VI           peer DIDs (document derived from the identifier)
    VII, IX, XI  the client resolves the server DID on the registry
    VIII, X, XII the server resolves the client DID on the registry

Every rep is a fresh connection with fresh resolver caches seeded as the
scenario prescribes. Client and server run on loopback in one process.
"""

import queue
from dataclasses import dataclass, field, replace
from datetime import timedelta
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from ..cert_kit import (
    CertBundle,
    generate_keypair,
    issue_ca_certificate,
    make_ca_root,
    make_derived_id_certificate,
    make_did_certificate,
)
from ..channel.session import ClientConfig, DidLinkServer, SecureSession, ServerConfig, connect, echo_handler
from ..channel.verify import ResolutionMode
from ..codec import utc_now
from ..config import format_address
from ..did_core import CacheMode, CachePolicy, KeyType, Resolver, default_resolver
from ..errors import DidLinkError, ScenarioInfeasible, ServiceUnavailable
from ..identity import Identity, create_identity
from ..identity_layer.engine import IdentificationConfig, IdentificationMode
from ..identity_layer.presentation_exchange import RequestTemplate
from ..monitoring import Stopwatch, get_logger
from ..negotiation import PROTOCOL_DIF_PE_2, ClientAuthMode, NegotiationOffer, ServerAuthMode, ServerCapabilities
from ..vc_sdjwt import SdJwtCredential, issue
from ..vdr.client import VdrClient
from ..vdr.ledger import LATENCY_PROFILES, LatencyProfile
from ..vdr.server import RunningVdr, run_in_thread
from .report import BenchReport

logger = get_logger(__name__)

SERVER_NAME = "localhost"
CACHE_LIFETIME = timedelta(hours=1)
SERVER_RESULT_TIMEOUT = 30.0


class ScenarioId(str, Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    VI = "VI"
    VII = "VII"
    VIII = "VIII"
    IX = "IX"
    X = "X"
    XI = "XI"
    XII = "XII"


class DidKind(str, Enum):
    VDR_ANCHORED = "vdr_anchored"
    PEER = "peer"


class CertFlavor(str, Enum):
    DERIVED = "derived"
    CA = "ca"
    DID = "did"


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: ScenarioId
    flavor: CertFlavor
    client_auth: ClientAuthMode
    server_auth: ServerAuthMode
    client_has_server_doc: bool = False
    server_has_client_doc: bool = False
    did_kind: DidKind = DidKind.VDR_ANCHORED
    latency_profile: str = "none"
    vdr_latency: LatencyProfile = Field(default_factory=LatencyProfile)
    identification: bool = False
    identification_mode: IdentificationMode = IdentificationMode.PARALLEL
    resolution_mode: ResolutionMode = ResolutionMode.PARALLEL
    force_resolve: bool = False
    reps: int = Field(default=100, ge=1)

    @property
    def needs_registry(self) -> bool:
        return self.flavor is CertFlavor.DID and self.did_kind is DidKind.VDR_ANCHORED


# id -> (flavor, latency profile, client has server doc, server has client doc, did kind)
_CATALOGUE: Dict[ScenarioId, Tuple[CertFlavor, str, bool, bool, DidKind]] = {
    ScenarioId.I: (CertFlavor.DERIVED, "none", False, False, DidKind.VDR_ANCHORED),
    ScenarioId.II: (CertFlavor.CA, "local", False, False, DidKind.VDR_ANCHORED),
    ScenarioId.III: (CertFlavor.CA, "remote_a", False, False, DidKind.VDR_ANCHORED),
    ScenarioId.IV: (CertFlavor.CA, "remote_b", False, False, DidKind.VDR_ANCHORED),
    ScenarioId.V: (CertFlavor.DID, "local", True, True, DidKind.VDR_ANCHORED),
    ScenarioId.VI: (CertFlavor.DID, "none", False, False, DidKind.PEER),
    ScenarioId.VII: (CertFlavor.DID, "local", False, True, DidKind.VDR_ANCHORED),
    ScenarioId.VIII: (CertFlavor.DID, "local", True, False, DidKind.VDR_ANCHORED),
    ScenarioId.IX: (CertFlavor.DID, "remote_a", False, True, DidKind.VDR_ANCHORED),
    ScenarioId.X: (CertFlavor.DID, "remote_a", True, False, DidKind.VDR_ANCHORED),
    ScenarioId.XI: (CertFlavor.DID, "remote_b", False, True, DidKind.VDR_ANCHORED),
    ScenarioId.XII: (CertFlavor.DID, "remote_b", True, False, DidKind.VDR_ANCHORED),
}


def scenario(
    scenario_id: str,
    reps: int = 100,
    identification: bool = False,
    latency: Optional[LatencyProfile] = None,
    **overrides: Any,
) -> Scenario:
    """Catalogue entry `scenario_id`, optionally with a custom registry latency."""
    try:
        sid = ScenarioId(scenario_id)
    except ValueError as exc:
        raise ScenarioInfeasible(
            f"unknown scenario {scenario_id!r}", suggestion=f"Use one of {', '.join(s.value for s in ScenarioId)}."
        ) from exc
    flavor, profile, client_cached, server_cached, did_kind = _CATALOGUE[sid]
    if flavor is CertFlavor.DERIVED:
        client_auth, server_auth = ClientAuthMode.DERIVED, ServerAuthMode.DERIVED_DEFAULT
    elif flavor is CertFlavor.CA:
        client_auth, server_auth = ClientAuthMode.CERT, ServerAuthMode.CERT_DEFAULT
    elif identification:
        client_auth, server_auth = ClientAuthMode.DID_VC, ServerAuthMode.DID_VC_DEFAULT
    else:
        client_auth, server_auth = ClientAuthMode.DID, ServerAuthMode.DID_DEFAULT
    return Scenario(
        id=sid,
        flavor=flavor,
        client_auth=client_auth,
        server_auth=server_auth,
        client_has_server_doc=client_cached,
        server_has_client_doc=server_cached,
        did_kind=did_kind,
        latency_profile="custom" if latency is not None else profile,
        vdr_latency=latency if latency is not None else LATENCY_PROFILES[profile],
        identification=identification,
        reps=reps,
        **overrides,
    )


def check_feasible(s: Scenario) -> None:
    if s.did_kind is DidKind.PEER and s.force_resolve:
        raise ScenarioInfeasible("peer DIDs have no registry to force-resolve against")
    if s.identification and s.flavor is not CertFlavor.DID:
        raise ScenarioInfeasible(f"scenario {s.id.value} authenticates without DIDs; identification needs them")
    if s.force_resolve and s.flavor is not CertFlavor.DID:
        raise ScenarioInfeasible(f"scenario {s.id.value} resolves no DIDs")
    if s.force_resolve and s.client_has_server_doc and s.server_has_client_doc:
        raise ScenarioInfeasible("forced resolution contradicts a scenario where both peers are pre-cached")


@dataclass
class Party:
    bundle: CertBundle
    identity: Optional[Identity] = None
    credentials: List[SdJwtCredential] = field(default_factory=list)


@dataclass
class Fixture:
    client: Party
    server: Party
    trust_roots: Tuple[bytes, ...] = ()
    issuer: Optional[Identity] = None


def _did_party(kind: DidKind, vdr: Optional[VdrClient], issuer: Identity, role: str) -> Party:
    identity = create_identity("peer" if kind is DidKind.PEER else "vdrsim")
    if kind is DidKind.VDR_ANCHORED:
        vdr.publish(identity.document, identity.key)
    credential = issue(
        issuer.key,
        issuer.did,
        identity.did,
        {"org": "ExampleCo", "role": role},
        key_id=issuer.key_id,
        issuer_document=issuer.document,
    )
    return Party(bundle=make_did_certificate(identity.did, identity.key), identity=identity, credentials=[credential])


def build_fixture(s: Scenario, vdr: Optional[VdrClient]) -> Fixture:
    if s.flavor is CertFlavor.DERIVED:
        return Fixture(
            client=Party(make_derived_id_certificate(generate_keypair(KeyType.ED25519))),
            server=Party(make_derived_id_certificate(generate_keypair(KeyType.ED25519))),
        )
    if s.flavor is CertFlavor.CA:
        root = make_ca_root("DID Link Bench CA")
        return Fixture(
            client=Party(issue_ca_certificate(root, "client.localhost", generate_keypair(KeyType.ED25519))),
            server=Party(issue_ca_certificate(root, SERVER_NAME, generate_keypair(KeyType.ED25519))),
            trust_roots=(root.certificate_der,),
        )
    issuer = create_identity("key")
    return Fixture(
        client=_did_party(s.did_kind, vdr, issuer, "client"),
        server=_did_party(s.did_kind, vdr, issuer, "server"),
        issuer=issuer,
    )


def _resolver(vdr: Optional[VdrClient], seed: Optional[Party]) -> Resolver:
    resolver = default_resolver(vdr)
    if seed is not None and seed.identity is not None:
        resolver.seed_cache(seed.identity.document, utc_now() + CACHE_LIFETIME)
    return resolver


def _identification(s: Scenario, own: Party, fixture: Fixture) -> Optional[IdentificationConfig]:
    if not s.identification:
        return None
    return IdentificationConfig(
        credentials=own.credentials,
        holder=own.identity,
        request=RequestTemplate(required_claims=("org",), accepted_issuers=(fixture.issuer.did.full,)),
        mode=s.identification_mode,
    )


def _offer(s: Scenario, fixture: Fixture) -> NegotiationOffer:
    if s.flavor is not CertFlavor.DID:
        return NegotiationOffer(client_auth_mode=s.client_auth)
    identity = fixture.client.identity
    return NegotiationOffer(
        client_did=identity.did,
        client_did_methods=(identity.did.method,),
        presentation_protocols=(PROTOCOL_DIF_PE_2,) if s.identification else (),
        client_auth_mode=s.client_auth,
    )


def _server_row(session: SecureSession) -> Dict[str, Any]:
    peer = session.peer
    identification = session.identification
    return {
        "server_setup_ms": session.setup_duration,
        "server_handshake_ms": peer.handshake_duration,
        "server_resolve_ms": peer.resolve_duration,
        "server_resolution_source": peer.resolution_source.value if peer.resolution_source else None,
        "server_identification_ms": identification.duration if identification else None,
        "server_bytes_sent": session.bytes_sent,
        "session_tickets_bytes": session.session_tickets_bytes,
    }


def _client_row(session: SecureSession, total_ms: float) -> Dict[str, Any]:
    peer = session.peer
    identification = session.identification
    return {
        "client_total_ms": total_ms,
        "client_setup_ms": session.setup_duration,
        "client_handshake_ms": peer.handshake_duration,
        "client_resolve_ms": peer.resolve_duration,
        "client_resolution_source": peer.resolution_source.value if peer.resolution_source else None,
        "client_identification_ms": identification.duration if identification else None,
        "client_bytes_sent": session.bytes_sent,
        "client_bytes_received": session.bytes_received,
    }


def _registry(s: Scenario, vdr_address: Optional[str]) -> Tuple[Optional[RunningVdr], Optional[VdrClient]]:
    if not s.needs_registry:
        return None, None
    running = None
    if vdr_address is None:
        running = run_in_thread(latency=s.vdr_latency)
        vdr_address = running.address_text
    client = VdrClient(vdr_address)
    try:
        client.ping()
    except DidLinkError as exc:
        client.close()
        if running is not None:
            running.stop()
        raise ServiceUnavailable(f"registry at {vdr_address} is not answering: {exc.message}") from exc
    return running, client


def run_scenario(s: Scenario, vdr_address: Optional[str] = None) -> BenchReport:
    """Run `s.reps` connection establishments and collect per-side timings."""
    check_feasible(s)
    running, vdr = _registry(s, vdr_address)
    server: Optional[DidLinkServer] = None
    try:
        fixture = build_fixture(s, vdr)
        policy = CachePolicy(mode=CacheMode.FORCE_RESOLVE) if s.force_resolve else None
        server_identity = fixture.server.bundle
        server_config = ServerConfig(
            capabilities=ServerCapabilities(
                supported_methods=("vdrsim", "peer", "key"),
                supported_presentation_protocols=(PROTOCOL_DIF_PE_2,),
                available_identities=[server_identity],
                default_identity=server_identity,
                presentable_credentials=s.identification,
            ),
            client_auth_required=True,
            cache_policy=policy,
            trust_roots=fixture.trust_roots,
            resolution_mode=s.resolution_mode,
            identification=_identification(s, fixture.server, fixture),
        )
        server_results: "queue.Queue[Any]" = queue.Queue()
        server = DidLinkServer(server_config, handler=echo_handler)
        server.on_session = lambda session: server_results.put(_server_row(session))
        server.on_failure = server_results.put
        address = format_address(server.start())

        client_base = ClientConfig(
            identity=fixture.client.bundle,
            offer=_offer(s, fixture),
            cache_policy=policy,
            trust_roots=fixture.trust_roots,
            resolution_mode=s.resolution_mode,
            identification=_identification(s, fixture.client, fixture),
        )
        report = BenchReport(
            scenario=s.id.value,
            kind="scenario",
            parameters={
                "flavor": s.flavor.value,
                "client_auth": s.client_auth.value,
                "server_auth": s.server_auth.value,
                "did_kind": s.did_kind.value,
                "latency_profile": s.latency_profile,
                "read_delay_ms": s.vdr_latency.read_delay,
                "identification": s.identification,
                "identification_mode": s.identification_mode.value,
                "resolution_mode": s.resolution_mode.value,
                "reps": s.reps,
            },
        )
        for rep in range(s.reps):
            server_config.resolver = _resolver(vdr, fixture.client if s.server_has_client_doc else None)
            config = replace(
                client_base, resolver=_resolver(vdr, fixture.server if s.client_has_server_doc else None)
            )
            watch = Stopwatch()
            session = connect(address, config)
            total_ms = watch.stop()
            try:
                server_row = server_results.get(timeout=SERVER_RESULT_TIMEOUT)
            finally:
                session.close()
            if isinstance(server_row, DidLinkError):
                raise server_row
            report.reps.append({"rep": rep, **_client_row(session, total_ms), **server_row})
        report.summarize()
        logger.info(
            "Scenario finished",
            scenario=s.id.value,
            reps=s.reps,
            client_setup_ms=round(report.mean("client_setup_ms"), 3),
        )
        return report
    finally:
        if server is not None:
            server.stop()
        if vdr is not None:
            vdr.close()
        if running is not None:
            running.stop()
