"""Blocking client for the registry stream protocol."""

import socket
import threading
from typing import Any, Dict, List, Optional, Tuple, Union

from ..cert_kit import KeyPair
from ..codec import b64url_encode, canonical_json
from ..config import format_address, parse_address
from ..did_core import Did, DidDocument, parse_did
from ..errors import RegistryUnavailable, TransportError, error_from_dict
from ..monitoring import get_logger
from .ledger import status_create_payload, status_set_payload
from .wire import encode_message, recv_message

logger = get_logger(__name__)


class VdrClient:
    """One persistent connection, shared by threads under a lock."""

    def __init__(self, address: Union[str, Tuple[str, int]], timeout: float = 5.0):
        self.address = parse_address(address)
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None
        self._lock = threading.Lock()
        self.requests = 0

    def __enter__(self) -> "VdrClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        with self._lock:
            self._drop()

    def _drop(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def _connect(self) -> socket.socket:
        if self._sock is None:
            sock = socket.create_connection(self.address, timeout=self.timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock = sock
        return self._sock

    def call(self, op: str, **fields: Any) -> Any:
        request = {"op": op, **fields}
        with self._lock:
            self.requests += 1
            try:
                sock = self._connect()
                sock.sendall(encode_message(request))
                response = recv_message(sock)
            except (OSError, TransportError) as exc:
                self._drop()
                raise RegistryUnavailable(
                    f"registry {format_address(self.address)} unreachable: {exc}",
                    details={"address": format_address(self.address), "op": op},
                ) from exc
        if not response.get("ok"):
            raise error_from_dict(response)
        return response.get("result")

    # Registry operations

    def anchor_did(self, document: DidDocument, signature: bytes, signer_key_id: Optional[str] = None) -> int:
        fields: Dict[str, Any] = {"document": document.to_json_dict(), "signature": b64url_encode(signature)}
        if signer_key_id is not None:
            fields["signer_key_id"] = signer_key_id
        return self.call("anchor", **fields)["seq"]

    def update_did(
        self, did: Union[Did, str], new_document: DidDocument, signature: bytes, signer_key_id: str
    ) -> int:
        return self.call(
            "update",
            did=parse_did(did).full,
            document=new_document.to_json_dict(),
            signature=b64url_encode(signature),
            signer_key_id=signer_key_id,
        )["seq"]

    def lookup(self, did: Union[Did, str]) -> DidDocument:
        result = self.call("lookup", did=parse_did(did).full)
        return DidDocument.from_json_dict(result["document"])

    def history(self, did: Union[Did, str]) -> List[DidDocument]:
        result = self.call("history", did=parse_did(did).full)
        return [DidDocument.from_json_dict(d) for d in result["documents"]]

    def create_status_list(
        self, list_id: str, owner: Union[Did, str], size: int, signature: bytes, signer_key_id: str
    ) -> int:
        return self.call(
            "status_create",
            list_id=list_id,
            owner=parse_did(owner).full,
            size=size,
            signature=b64url_encode(signature),
            signer_key_id=signer_key_id,
        )["seq"]

    def set_status(
        self,
        list_id: str,
        index: int,
        revoked: bool,
        signature: bytes,
        signer_key_id: str,
        version: int,
    ) -> int:
        return self.call(
            "status_set",
            list_id=list_id,
            index=index,
            revoked=revoked,
            version=version,
            signature=b64url_encode(signature),
            signer_key_id=signer_key_id,
        )["seq"]

    def get_status(self, list_id: str, index: int) -> bool:
        return bool(self.call("status_get", list_id=list_id, index=index)["revoked"])

    def status_info(self, list_id: str) -> Dict[str, Any]:
        return self.call("status_info", list_id=list_id)

    def ping(self) -> Dict[str, Any]:
        return self.call("ping")

    # Signing helpers

    def publish(self, document: DidDocument, key: KeyPair, signer_key_id: Optional[str] = None) -> int:
        """Anchor a genesis document self-signed with `key`."""
        return self.anchor_did(document, key.sign(document.canonical_bytes()), signer_key_id)

    def publish_update(self, new_document: DidDocument, key: KeyPair, signer_key_id: str) -> int:
        return self.update_did(
            new_document.id, new_document, key.sign(new_document.canonical_bytes()), signer_key_id
        )

    def create_status_list_signed(
        self, list_id: str, owner: Union[Did, str], size: int, key: KeyPair, signer_key_id: str
    ) -> int:
        payload = canonical_json(status_create_payload(list_id, parse_did(owner), size))
        return self.create_status_list(list_id, owner, size, key.sign(payload), signer_key_id)

    def set_status_signed(
        self, list_id: str, index: int, revoked: bool, key: KeyPair, signer_key_id: str
    ) -> int:
        """Sign and submit a status change against the list's next version."""
        version = self.status_info(list_id)["version"] + 1
        payload = canonical_json(status_set_payload(list_id, index, revoked, version))
        return self.set_status(list_id, index, revoked, key.sign(payload), signer_key_id, version)


class VdrMethodHandler:
    """did:vdrsim method handler backed by a registry client."""

    local = False

    def __init__(self, client: VdrClient):
        self.client = client

    def resolve(self, did: Did) -> DidDocument:
        return self.client.lookup(did)
