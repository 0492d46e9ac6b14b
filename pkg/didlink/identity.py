"""
Identity files: a DID, its current document and the private keys that control it.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

from pydantic import BaseModel, ConfigDict

from .cert_kit import KeyPair, generate_keypair
from .did_core import (
    DidDocument,
    DidField,
    KeyType,
    Purpose,
    VerificationMethod,
    make_key_did,
    make_peer_did,
    new_vdrsim_document,
)
from .errors import IoFailure, MalformedDocument, UnsupportedMethod

SIGNING_KEY_ID = "key-1"
AGREEMENT_KEY_ID = "x25519-1"


class Identity(BaseModel):
    model_config = ConfigDict(frozen=True)

    did: DidField
    key_id: str
    key: KeyPair
    document: DidDocument
    agreement_key_id: Optional[str] = None
    agreement_key: Optional[KeyPair] = None

    @property
    def key_ref(self) -> str:
        return self.document.method_ref(self.key_id)

    def to_json_dict(self, include_private: bool = True) -> Dict[str, Any]:
        body: Dict[str, Any] = {
            "did": self.did.full,
            "key_id": self.key_id,
            "key": self.key.to_json_dict(include_private),
            "document": self.document.to_json_dict(),
        }
        if self.agreement_key is not None:
            body["agreement_key_id"] = self.agreement_key_id
            body["agreement_key"] = self.agreement_key.to_json_dict(include_private)
        return body

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "Identity":
        try:
            return cls.model_validate(
                {**data, "document": DidDocument.from_json_dict(data["document"])}
            )
        except (KeyError, ValueError) as exc:
            raise MalformedDocument(f"invalid identity file: {exc}") from exc

    def save(self, path: Union[str, Path]) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
            with os.fdopen(fd, "w") as handle:
                json.dump(self.to_json_dict(), handle, indent=2, sort_keys=True)
        except OSError as exc:
            raise IoFailure(f"cannot write identity {path}: {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Identity":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IoFailure(f"cannot read identity {path}: {exc}") from exc
        return cls.from_json_dict(data)

    def rotated(self, new_key: KeyPair, retain_old: bool = False) -> "Identity":
        """Successor identity whose next document version lists `new_key`."""
        number = 1 + max(
            (int(vm.id.split("-")[-1]) for vm in self.document.verification_methods
             if vm.id.startswith("key-") and vm.id.split("-")[-1].isdigit()),
            default=0,
        )
        new_id = f"key-{number}"
        methods = [
            vm for vm in self.document.verification_methods
            if retain_old or vm.id != self.key_id
        ]
        methods.append(
            VerificationMethod(
                id=new_id,
                key_type=new_key.key_type,
                public_key=new_key.public_key,
                purpose=frozenset({Purpose.AUTHENTICATION, Purpose.ASSERTION}),
            )
        )
        return self.model_copy(
            update={"key_id": new_id, "key": new_key, "document": self.document.next_version(methods)}
        )


def create_identity(
    method: str = "vdrsim",
    key_type: KeyType = KeyType.ED25519,
    with_agreement_key: bool = True,
    key: Optional[KeyPair] = None,
) -> Identity:
    """Fresh keys and a genesis document for `method` (vdrsim, key or peer)."""
    key = key or generate_keypair(key_type)
    if method in ("key", "peer"):
        if key.key_type is not KeyType.ED25519:
            raise UnsupportedMethod(f"did:{method} identifiers derive from Ed25519 keys only")
        did, document = (make_key_did if method == "key" else make_peer_did)(key.public_key)
        return Identity(did=did, key_id=document.verification_methods[0].id, key=key, document=document)
    if method != "vdrsim":
        raise UnsupportedMethod(f"cannot create did:{method} identities", details={"method": method})

    methods = [
        VerificationMethod(
            id=SIGNING_KEY_ID,
            key_type=key.key_type,
            public_key=key.public_key,
            purpose=frozenset({Purpose.AUTHENTICATION, Purpose.ASSERTION}),
        )
    ]
    agreement = None
    if with_agreement_key:
        agreement = generate_keypair(KeyType.X25519)
        methods.append(
            VerificationMethod(
                id=AGREEMENT_KEY_ID,
                key_type=KeyType.X25519,
                public_key=agreement.public_key,
                purpose=frozenset({Purpose.KEY_AGREEMENT}),
            )
        )
    document = new_vdrsim_document(methods)
    return Identity(
        did=document.id,
        key_id=SIGNING_KEY_ID,
        key=key,
        document=document,
        agreement_key_id=AGREEMENT_KEY_ID if agreement else None,
        agreement_key=agreement,
    )
