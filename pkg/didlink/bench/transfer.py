"""
Bytes and wall-clock for sending n packets: one DID Link session versus n
independently enveloped messages over a plain TCP stream.

Both arms end with an empty end-of-batch message answered by a one-byte
acknowledgement, so wall-clock covers delivery of the whole batch.
"""

import os
import socket
import threading
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..cert_kit import make_did_certificate
from ..channel.session import ClientConfig, DidLinkServer, SecureSession, ServerConfig, connect
from ..did_core import default_resolver
from ..errors import BindFailure, DidLinkError, TransportError
from ..identity import Identity, create_identity
from ..monitoring import Stopwatch, get_logger
from ..negotiation import ClientAuthMode, NegotiationOffer, ServerCapabilities
from ..vdr.wire import HEADER
from .envelope import Envelope, unwrap_envelope, wrap_envelope
from .report import BenchReport

logger = get_logger(__name__)

ACK = b"\x06"
PAYLOAD_SIZES = (1, 10, 100, 1024, 10240)


def _ack_handler(session: SecureSession) -> None:
    while True:
        try:
            message = session.recv_message()
        except TransportError:
            return
        if not message:
            session.send_message(ACK)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise TransportError("peer closed the stream")
        buf.extend(chunk)
    return bytes(buf)


class EnvelopeSink:
    """Plain TCP receiver that unwraps every envelope it is sent."""

    def __init__(self, recipient: Identity, sender: Identity, host: str = "127.0.0.1"):
        self.recipient = recipient
        self.sender = sender
        self.received = 0
        try:
            self._listener = socket.create_server((host, 0))
        except OSError as exc:
            raise BindFailure(f"cannot bind envelope sink: {exc}") from exc
        self._listener.settimeout(0.2)
        self._stopping = threading.Event()
        self._thread = threading.Thread(target=self._serve, name="envelope-sink", daemon=True)
        self._thread.start()

    @property
    def address(self) -> Tuple[str, int]:
        return self._listener.getsockname()[:2]

    def _serve(self) -> None:
        while not self._stopping.is_set():
            try:
                sock, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            threading.Thread(target=self._connection, args=(sock,), daemon=True).start()

    def _connection(self, sock: socket.socket) -> None:
        with sock:
            try:
                while True:
                    (length,) = HEADER.unpack(_recv_exact(sock, HEADER.size))
                    if length == 0:
                        sock.sendall(ACK)
                        continue
                    envelope = Envelope.from_bytes(_recv_exact(sock, length))
                    unwrap_envelope(envelope, self.recipient.agreement_key, self.sender.document)
                    self.received += 1
            except (TransportError, OSError):
                return
            except DidLinkError as exc:
                logger.info("Envelope rejected", error=exc.code)

    def stop(self) -> None:
        self._stopping.set()
        self._listener.close()
        self._thread.join(timeout=2)


@dataclass
class TransferPeers:
    client: Identity
    server: Identity

    @classmethod
    def create(cls) -> "TransferPeers":
        return cls(client=create_identity("peer"), server=create_identity("peer"))


@dataclass
class EnvelopeKeys:
    sender: Identity
    recipient: Identity

    @classmethod
    def create(cls) -> "EnvelopeKeys":
        return cls(sender=create_identity("vdrsim"), recipient=create_identity("vdrsim"))


def session_transfer(address: Tuple[str, int], config: ClientConfig, payload: bytes, n: int) -> Tuple[int, float]:
    """Total wire bytes (both directions) and ms for one session carrying `n` packets."""
    watch = Stopwatch()
    session = connect(address, config)
    try:
        for _ in range(n):
            session.send_message(payload)
        session.send_message(b"")
        if session.recv_message() != ACK:
            raise TransportError("missing end-of-batch acknowledgement")
        elapsed = watch.stop()
        return session.bytes_sent + session.bytes_received, elapsed
    finally:
        session.close()


def envelope_transfer(address: Tuple[str, int], keys: EnvelopeKeys, payload: bytes, n: int) -> Tuple[int, float]:
    """Total stream bytes and ms for `n` enveloped messages."""
    sender = keys.sender
    kid = sender.document.method_ref(sender.agreement_key_id)
    watch = Stopwatch()
    total = 0
    with socket.create_connection(address) as sock:
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        for _ in range(n):
            body = wrap_envelope(payload, sender.agreement_key, keys.recipient.document, kid).to_bytes()
            frame = HEADER.pack(len(body)) + body
            sock.sendall(frame)
            total += len(frame)
        sock.sendall(HEADER.pack(0))
        total += HEADER.size
        if _recv_exact(sock, len(ACK)) != ACK:
            raise TransportError("missing end-of-batch acknowledgement")
        total += len(ACK)
    return total, watch.stop()


def run_transfer_comparison(
    payload_size: int,
    n_packets: Union[int, Sequence[int]],
    reps: int = 10,
) -> Tuple[BenchReport, BenchReport]:
    """Session channel versus envelope baseline for each packet count."""
    counts = [n_packets] if isinstance(n_packets, int) else list(n_packets)
    payload = os.urandom(payload_size)
    peers = TransferPeers.create()
    keys = EnvelopeKeys.create()
    server_bundle = make_did_certificate(peers.server.did, peers.server.key)
    resolver = default_resolver()
    server = DidLinkServer(
        ServerConfig(
            capabilities=ServerCapabilities(
                supported_methods=("peer",),
                supported_presentation_protocols=(),
                available_identities=[server_bundle],
                default_identity=server_bundle,
            ),
            client_auth_required=True,
            resolver=resolver,
        ),
        handler=_ack_handler,
    )
    sink = EnvelopeSink(keys.recipient, keys.sender)
    client_config = ClientConfig(
        identity=make_did_certificate(peers.client.did, peers.client.key),
        offer=NegotiationOffer(
            client_did=peers.client.did,
            client_did_methods=("peer",),
            client_auth_mode=ClientAuthMode.DID,
        ),
        resolver=resolver,
    )
    parameters = {"payload_size": payload_size, "packet_counts": counts, "reps": reps}
    session_report = BenchReport(scenario="transfer-session", kind="transfer", parameters=dict(parameters))
    envelope_report = BenchReport(
        scenario="transfer-envelope", kind="transfer", extension_transport="none", parameters=dict(parameters)
    )
    try:
        address = server.start()
        for n in counts:
            for rep in range(reps):
                wire, ms = session_transfer(address, client_config, payload, n)
                session_report.reps.append({"rep": rep, "packets": n, "payload_size": payload_size, "bytes": wire, "wall_ms": ms})
                wire, ms = envelope_transfer(sink.address, keys, payload, n)
                envelope_report.reps.append({"rep": rep, "packets": n, "payload_size": payload_size, "bytes": wire, "wall_ms": ms})
    finally:
        server.stop()
        sink.stop()
    logger.info(
        "Transfer comparison finished",
        payload_size=payload_size,
        packet_counts=counts,
    )
    return session_report.summarize(["bytes", "wall_ms"]), envelope_report.summarize(["bytes", "wall_ms"])


def mean_by_packets(report: BenchReport, column: str = "bytes") -> Dict[int, float]:
    grouped: Dict[int, List[float]] = {}
    for row in report.reps:
        grouped.setdefault(row["packets"], []).append(row[column])
    return {n: float(np.mean(values)) for n, values in sorted(grouped.items())}


def crossover(session: BenchReport, envelope: BenchReport) -> Optional[int]:
    """Smallest packet count at which the session moves fewer bytes than the envelopes."""
    ours, theirs = mean_by_packets(session), mean_by_packets(envelope)
    for n in sorted(ours):
        if n in theirs and ours[n] < theirs[n]:
            return n
    return None


def linear_fit(report: BenchReport, column: str = "bytes") -> Tuple[float, float, float]:
    """(slope, intercept, r_squared) of mean `column` against packet count."""
    means = mean_by_packets(report, column)
    x = np.array(list(means), dtype=float)
    y = np.array(list(means.values()), dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    total = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - float(np.sum((y - predicted) ** 2)) / total if total else 1.0
    return float(slope), float(intercept), r_squared
