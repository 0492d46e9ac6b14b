"""
Per-message authenticated envelope, the baseline the session channel is
compared against.

Each message gets a fresh content key (A256GCM) wrapped under a key-encryption
key derived from two X25519 agreements: ephemeral-static (sender ephemeral,
recipient static) and static-static (sender static, recipient static), in the
style of ECDH-1PU+A256KW. The serialized form is a JWE-like JSON object.
"""

import json
import secrets
from typing import Any, Dict, List, Optional, Tuple

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.keywrap import InvalidUnwrap, aes_key_unwrap, aes_key_wrap
from pydantic import BaseModel, ConfigDict, ValidationError

from ..cert_kit import KeyPair
from ..codec import b64url_decode_strict, b64url_encode, canonical_json
from ..did_core import DidDocument, KeyType, Purpose, VerificationMethod
from ..errors import DecryptFailed, InvalidKey, UnknownKey

ALG = "ECDH-1PU+A256KW"
ENC = "A256GCM"
CEK_BYTES = 32
IV_BYTES = 12
TAG_BYTES = 16


class Recipient(BaseModel):
    model_config = ConfigDict(frozen=True)

    kid: str
    encrypted_key: str


class Envelope(BaseModel):
    model_config = ConfigDict(frozen=True)

    protected: str
    recipients: Tuple[Recipient, ...]
    iv: str
    ciphertext: str
    tag: str

    def header(self) -> Dict[str, Any]:
        try:
            header = json.loads(b64url_decode_strict(self.protected))
        except ValueError as exc:
            raise DecryptFailed(f"protected header unreadable: {exc}") from exc
        if not isinstance(header, dict):
            raise DecryptFailed("protected header must be a JSON object")
        return header

    def to_bytes(self) -> bytes:
        return canonical_json(self.model_dump(mode="json"))

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        try:
            return cls.model_validate_json(data)
        except ValidationError as exc:
            raise DecryptFailed(f"not an envelope: {exc.error_count()} schema errors") from exc


def agreement_method(document: DidDocument, kid: Optional[str] = None) -> VerificationMethod:
    """The X25519 key-agreement method of `document` (the one named `kid` when given)."""
    candidates = [vm for vm in document.methods_for(Purpose.KEY_AGREEMENT) if vm.key_type is KeyType.X25519]
    if kid is not None:
        candidates = [vm for vm in candidates if vm.id == kid.split("#")[-1]]
    if not candidates:
        raise UnknownKey(
            f"{document.id.full} lists no X25519 key agreement key" + (f" named {kid}" if kid else ""),
            details={"did": document.id.full},
        )
    return candidates[0]


def _agree(private: KeyPair, public: bytes) -> bytes:
    if private.key_type is not KeyType.X25519:
        raise InvalidKey("envelopes need X25519 key agreement keys")
    try:
        return private.private_key_object().exchange(x25519.X25519PublicKey.from_public_bytes(public))
    except ValueError as exc:
        raise DecryptFailed(f"key agreement failed: {exc}") from exc


def _kek(ze: bytes, zs: bytes, header: bytes, tag: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=CEK_BYTES,
        salt=None,
        info=ALG.encode("ascii") + header + tag,
    ).derive(ze + zs)


def wrap_envelope(
    plaintext: bytes,
    sender: KeyPair,
    recipient_doc: DidDocument,
    sender_kid: str,
) -> Envelope:
    """Encrypt `plaintext` for the key-agreement key of `recipient_doc`."""
    recipient_vm = agreement_method(recipient_doc)
    ephemeral = x25519.X25519PrivateKey.generate()
    epk = ephemeral.public_key().public_bytes_raw()
    protected = b64url_encode(
        canonical_json(
            {
                "alg": ALG,
                "enc": ENC,
                "skid": sender_kid,
                "epk": {"kty": "OKP", "crv": "X25519", "x": b64url_encode(epk)},
            }
        )
    )
    cek = AESGCM.generate_key(bit_length=CEK_BYTES * 8)
    iv = secrets.token_bytes(IV_BYTES)
    sealed = AESGCM(cek).encrypt(iv, plaintext, protected.encode("ascii"))
    ciphertext, tag = sealed[:-TAG_BYTES], sealed[-TAG_BYTES:]

    ze = ephemeral.exchange(x25519.X25519PublicKey.from_public_bytes(recipient_vm.public_key))
    zs = _agree(sender, recipient_vm.public_key)
    kek = _kek(ze, zs, protected.encode("ascii"), tag)
    return Envelope(
        protected=protected,
        recipients=(
            Recipient(
                kid=recipient_doc.method_ref(recipient_vm.id),
                encrypted_key=b64url_encode(aes_key_wrap(kek, cek)),
            ),
        ),
        iv=b64url_encode(iv),
        ciphertext=b64url_encode(ciphertext),
        tag=b64url_encode(tag),
    )


def unwrap_envelope(envelope: Envelope, recipient: KeyPair, sender_doc: DidDocument) -> bytes:
    """Decrypt an envelope with the recipient's private key and the sender's document."""
    header = envelope.header()
    if header.get("alg") != ALG or header.get("enc") != ENC:
        raise DecryptFailed(f"unsupported envelope algorithms {header.get('alg')}/{header.get('enc')}")
    skid = header.get("skid")
    if not isinstance(skid, str) or skid.split("#")[0] != sender_doc.id.full:
        raise UnknownKey(f"envelope sender {skid!r} is not {sender_doc.id.full}")
    sender_vm = agreement_method(sender_doc, skid)
    try:
        epk = b64url_decode_strict(header["epk"]["x"])
        iv = b64url_decode_strict(envelope.iv)
        ciphertext = b64url_decode_strict(envelope.ciphertext)
        tag = b64url_decode_strict(envelope.tag)
    except (KeyError, TypeError, ValueError) as exc:
        raise DecryptFailed(f"malformed envelope field: {exc}") from exc

    ze = _agree(recipient, epk)
    zs = _agree(recipient, sender_vm.public_key)
    kek = _kek(ze, zs, envelope.protected.encode("ascii"), tag)
    errors: List[str] = []
    for entry in envelope.recipients:
        try:
            cek = aes_key_unwrap(kek, b64url_decode_strict(entry.encrypted_key))
            return AESGCM(cek).decrypt(iv, ciphertext + tag, envelope.protected.encode("ascii"))
        except (InvalidUnwrap, InvalidTag, ValueError) as exc:
            errors.append(type(exc).__name__)
    raise DecryptFailed("no recipient entry decrypts with this key", details={"attempts": errors})
