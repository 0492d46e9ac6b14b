"""
Keys and X.509 certificates for DID Link.

Certificate flavors:
    did_self_issued      self-signed, DID as the single SAN URI, CN "did-link"
    derived_self_issued  self-signed, CN = base58(sha256(public key)[:20])
    ca_issued            leaf signed by a mini-CA root
    ca_root              the mini-CA itself
"""

import hashlib
import json
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Sequence, Tuple, Union

import base58
from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, ed25519, x25519
from cryptography.x509.oid import NameOID
from OpenSSL import crypto
from pydantic import BaseModel, BeforeValidator, ConfigDict, SecretBytes, model_validator

from .codec import B64Bytes, b64url_decode, b64url_encode, utc_now
from .did_core import Did, DidDocument, DidField, KeyType, Purpose, normalize_public_key, parse_did
from .errors import (
    AmbiguousDid,
    InvalidKey,
    InvalidValidity,
    MalformedCertificate,
    MalformedDid,
    NoDidPresent,
    NotACa,
    OversizeDid,
)

DID_CERT_COMMON_NAME = "did-link"
CLOCK_SKEW = timedelta(seconds=60)
DEFAULT_VALIDITY_DAYS = 365

Validity = Tuple[datetime, datetime]


def _secret_in(value: Any) -> Any:
    if isinstance(value, str):
        return b64url_decode(value)
    return value


class KeyPair(BaseModel):
    """A signing or key-agreement key pair; the private half never dumps by default."""

    model_config = ConfigDict(frozen=True)

    key_type: KeyType
    public_key: B64Bytes
    private_key: Annotated[SecretBytes, BeforeValidator(_secret_in)]

    @model_validator(mode="after")
    def _check_pair(self) -> "KeyPair":
        derived = _public_bytes(self.key_type, _load_private(self.key_type, self._secret()))
        if derived != self.public_key:
            raise ValueError("public key does not match private key")
        return self

    def _secret(self) -> bytes:
        return self.private_key.get_secret_value()

    def private_key_object(self):
        return _load_private(self.key_type, self._secret())

    def public_key_object(self):
        return self.private_key_object().public_key()

    def sign(self, data: bytes) -> bytes:
        key = self.private_key_object()
        if self.key_type is KeyType.ED25519:
            return key.sign(data)
        if self.key_type is KeyType.ECDSA_P256:
            return key.sign(data, ec.ECDSA(hashes.SHA256()))
        raise InvalidKey("X25519 keys cannot sign")

    def verify(self, signature: bytes, data: bytes) -> bool:
        return verify_signature(self.key_type, self.public_key, signature, data)

    def to_json_dict(self, include_private: bool = False) -> Dict[str, Any]:
        body = {"key_type": self.key_type.value, "public_key": b64url_encode(self.public_key)}
        if include_private:
            body["private_key"] = b64url_encode(self._secret())
        return body

    def private_key_pem(self) -> bytes:
        return self.private_key_object().private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )


def _load_private(key_type: KeyType, raw: bytes):
    try:
        if key_type is KeyType.ED25519:
            return ed25519.Ed25519PrivateKey.from_private_bytes(raw)
        if key_type is KeyType.X25519:
            return x25519.X25519PrivateKey.from_private_bytes(raw)
        return ec.derive_private_key(int.from_bytes(raw, "big"), ec.SECP256R1())
    except ValueError as exc:
        raise InvalidKey(f"invalid {key_type.value} private key: {exc}") from exc


def _private_bytes(key_type: KeyType, key) -> bytes:
    if key_type is KeyType.ECDSA_P256:
        return key.private_numbers().private_value.to_bytes(32, "big")
    return key.private_bytes(
        serialization.Encoding.Raw, serialization.PrivateFormat.Raw, serialization.NoEncryption()
    )


def _public_bytes(key_type: KeyType, private_key) -> bytes:
    public = private_key.public_key()
    if key_type is KeyType.ECDSA_P256:
        return public.public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
        )
    return public.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)


def generate_keypair(key_type: KeyType = KeyType.ED25519) -> KeyPair:
    key_type = KeyType(key_type)
    if key_type is KeyType.ED25519:
        private = ed25519.Ed25519PrivateKey.generate()
    elif key_type is KeyType.X25519:
        private = x25519.X25519PrivateKey.generate()
    else:
        private = ec.generate_private_key(ec.SECP256R1())
    return KeyPair(
        key_type=key_type,
        public_key=_public_bytes(key_type, private),
        private_key=_private_bytes(key_type, private),
    )


def keypair_from_private_key(private_key) -> KeyPair:
    """Wrap a cryptography private key object."""
    if isinstance(private_key, ed25519.Ed25519PrivateKey):
        key_type = KeyType.ED25519
    elif isinstance(private_key, x25519.X25519PrivateKey):
        key_type = KeyType.X25519
    elif isinstance(private_key, ec.EllipticCurvePrivateKey) and isinstance(
        private_key.curve, ec.SECP256R1
    ):
        key_type = KeyType.ECDSA_P256
    else:
        raise InvalidKey(f"unsupported private key type {type(private_key).__name__}")
    return KeyPair(
        key_type=key_type,
        public_key=_public_bytes(key_type, private_key),
        private_key=_private_bytes(key_type, private_key),
    )


def load_private_key_pem(data: bytes) -> KeyPair:
    try:
        key = serialization.load_pem_private_key(data, password=None)
    except (ValueError, TypeError) as exc:
        raise InvalidKey(f"unreadable private key PEM: {exc}") from exc
    return keypair_from_private_key(key)


def verify_signature(key_type: KeyType, public_key: bytes, signature: bytes, data: bytes) -> bool:
    """Check a signature; malformed keys or signatures count as invalid."""
    try:
        if key_type is KeyType.ED25519:
            ed25519.Ed25519PublicKey.from_public_bytes(public_key).verify(signature, data)
        elif key_type is KeyType.ECDSA_P256:
            ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256R1(), public_key).verify(
                signature, data, ec.ECDSA(hashes.SHA256())
            )
        else:
            return False
    except (InvalidSignature, ValueError):
        return False
    return True


class CertKind(str, Enum):
    DID_SELF_ISSUED = "did_self_issued"
    DERIVED_SELF_ISSUED = "derived_self_issued"
    CA_ISSUED = "ca_issued"
    CA_ROOT = "ca_root"


class CertBundle(BaseModel):
    """A key pair plus its certificate (and chain for CA-issued leaves)."""

    model_config = ConfigDict(frozen=True)

    kind: CertKind
    certificate_der: B64Bytes
    chain_der: List[B64Bytes] = []
    key: KeyPair
    did: Optional[DidField] = None

    @model_validator(mode="after")
    def _check(self) -> "CertBundle":
        cert = load_certificate(self.certificate_der)
        if cert.version is not x509.Version.v3:
            raise ValueError("certificate is not X.509 v3")
        if (self.did is not None) != (self.kind is CertKind.DID_SELF_ISSUED):
            raise ValueError("did is present iff kind is did_self_issued")
        if self.chain_der and self.kind is not CertKind.CA_ISSUED:
            raise ValueError("only CA-issued bundles carry a chain")
        if self.kind is CertKind.DID_SELF_ISSUED and extract_did(self.certificate_der) != self.did:
            raise ValueError("certificate SAN does not carry the bundle DID")
        return self

    @property
    def certificate(self) -> x509.Certificate:
        return load_certificate(self.certificate_der)

    @property
    def subject_name(self) -> str:
        return _common_name(self.certificate) or ""

    @property
    def dns_names(self) -> List[str]:
        return certificate_dns_names(self.certificate)

    def certificate_pem(self) -> bytes:
        return self.certificate.public_bytes(serialization.Encoding.PEM)

    def chain_pem(self) -> bytes:
        return b"".join(
            load_certificate(der).public_bytes(serialization.Encoding.PEM) for der in self.chain_der
        )

    def export_pem(self, directory: Union[str, Path], include_private: bool = True) -> Dict[str, Path]:
        """Write cert.pem, chain.pem and key.pem into `directory`."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = {"certificate": directory / "cert.pem"}
        written["certificate"].write_bytes(self.certificate_pem())
        if self.chain_der:
            written["chain"] = directory / "chain.pem"
            written["chain"].write_bytes(self.chain_pem())
        if include_private:
            written["key"] = directory / "key.pem"
            written["key"].write_bytes(self.key.private_key_pem())
            written["key"].chmod(0o600)
        return written

    def to_json_dict(self, include_private: bool = False) -> Dict[str, Any]:
        body: Dict[str, Any] = {
            "kind": self.kind.value,
            "did": self.did.full if self.did else None,
            "certificate_pem": self.certificate_pem().decode("ascii"),
            "chain_pem": [
                load_certificate(der).public_bytes(serialization.Encoding.PEM).decode("ascii")
                for der in self.chain_der
            ],
            "key_type": self.key.key_type.value,
        }
        if include_private:
            body["private_key_pem"] = self.key.private_key_pem().decode("ascii")
        return body

    def save(self, path: Union[str, Path], include_private: bool = True) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_json_dict(include_private), indent=2, sort_keys=True))
        if include_private:
            path.chmod(0o600)

    @classmethod
    def from_json_dict(cls, data: Dict[str, Any]) -> "CertBundle":
        if "private_key_pem" not in data:
            raise InvalidKey("bundle file holds no private key")
        return cls(
            kind=CertKind(data["kind"]),
            certificate_der=pem_to_der(data["certificate_pem"].encode("ascii")),
            chain_der=[pem_to_der(pem.encode("ascii")) for pem in data.get("chain_pem", [])],
            key=load_private_key_pem(data["private_key_pem"].encode("ascii")),
            did=data.get("did"),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CertBundle":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def load_certificate(data: bytes) -> x509.Certificate:
    """Parse DER (or PEM) into a certificate."""
    try:
        if data.lstrip().startswith(b"-----BEGIN"):
            return x509.load_pem_x509_certificate(data)
        return x509.load_der_x509_certificate(data)
    except (ValueError, TypeError) as exc:
        raise MalformedCertificate(f"undecodable certificate: {exc}") from exc


def pem_to_der(data: bytes) -> bytes:
    return load_certificate(data).public_bytes(serialization.Encoding.DER)


def default_validity(days: int = DEFAULT_VALIDITY_DAYS) -> Validity:
    now = utc_now()
    return now - timedelta(minutes=5), now + timedelta(days=days)


def _check_validity(validity: Optional[Validity]) -> Validity:
    not_before, not_after = validity or default_validity()
    if not_after <= not_before:
        raise InvalidValidity(
            "not_after must be later than not_before",
            details={"not_before": not_before.isoformat(), "not_after": not_after.isoformat()},
        )
    return not_before, not_after


def _signature_hash(key: KeyPair):
    if key.key_type is KeyType.ED25519:
        return None
    if key.key_type is KeyType.ECDSA_P256:
        return hashes.SHA256()
    raise InvalidKey("X25519 keys cannot sign certificates")


def _name(common_name: str) -> x509.Name:
    return x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])


def _builder(subject: x509.Name, issuer: x509.Name, key: KeyPair, validity: Validity):
    not_before, not_after = validity
    return (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer)
        .public_key(key.public_key_object())
        .serial_number(x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
    )


def _der(cert: x509.Certificate) -> bytes:
    return cert.public_bytes(serialization.Encoding.DER)


def make_did_certificate(did: Union[Did, str], key: KeyPair, validity: Optional[Validity] = None) -> CertBundle:
    """Self-signed certificate carrying `did` as its only SAN URI."""
    did = parse_did(did)
    validity = _check_validity(validity)
    name = _name(DID_CERT_COMMON_NAME)
    try:
        san = x509.SubjectAlternativeName([x509.UniformResourceIdentifier(did.full)])
        cert = (
            _builder(name, name, key, validity)
            .add_extension(san, critical=False)
            .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
            .sign(key.private_key_object(), _signature_hash(key))
        )
    except (ValueError, UnicodeError) as exc:
        raise OversizeDid(f"cannot encode {did.full[:80]} as SAN URI: {exc}") from exc
    return CertBundle(kind=CertKind.DID_SELF_ISSUED, certificate_der=_der(cert), key=key, did=did)


def derived_identifier(public_key: bytes) -> str:
    """Identifier derived from the key itself: base58(sha256(key)[:20])."""
    return base58.b58encode(hashlib.sha256(public_key).digest()[:20]).decode("ascii")


def make_derived_id_certificate(key: KeyPair, validity: Optional[Validity] = None) -> CertBundle:
    validity = _check_validity(validity)
    name = _name(derived_identifier(key.public_key))
    cert = (
        _builder(name, name, key, validity)
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .sign(key.private_key_object(), _signature_hash(key))
    )
    return CertBundle(kind=CertKind.DERIVED_SELF_ISSUED, certificate_der=_der(cert), key=key)


def make_ca_root(
    name: str, key: Optional[KeyPair] = None, validity: Optional[Validity] = None
) -> CertBundle:
    key = key or generate_keypair(KeyType.ED25519)
    validity = _check_validity(validity or default_validity(days=3650))
    subject = _name(name)
    public = key.public_key_object()
    cert = (
        _builder(subject, subject, key, validity)
        .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
        .add_extension(
            x509.KeyUsage(
                digital_signature=False,
                content_commitment=False,
                key_encipherment=False,
                data_encipherment=False,
                key_agreement=False,
                key_cert_sign=True,
                crl_sign=True,
                encipher_only=False,
                decipher_only=False,
            ),
            critical=True,
        )
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(public), critical=False)
        .sign(key.private_key_object(), _signature_hash(key))
    )
    return CertBundle(kind=CertKind.CA_ROOT, certificate_der=_der(cert), key=key)


def issue_ca_certificate(
    root: CertBundle, subject_name: str, key: KeyPair, validity: Optional[Validity] = None
) -> CertBundle:
    """Leaf for `subject_name` (CN and DNS SAN) signed by `root`."""
    if root.kind is not CertKind.CA_ROOT:
        raise NotACa(f"bundle of kind {root.kind.value} cannot issue certificates")
    validity = _check_validity(validity)
    root_cert = root.certificate
    cert = (
        _builder(_name(subject_name), root_cert.subject, key, validity)
        .add_extension(x509.SubjectAlternativeName([x509.DNSName(subject_name)]), critical=False)
        .add_extension(x509.BasicConstraints(ca=False, path_length=None), critical=True)
        .add_extension(
            x509.AuthorityKeyIdentifier.from_issuer_public_key(root.key.public_key_object()),
            critical=False,
        )
        .sign(root.key.private_key_object(), _signature_hash(root.key))
    )
    return CertBundle(
        kind=CertKind.CA_ISSUED,
        certificate_der=_der(cert),
        chain_der=[root.certificate_der],
        key=key,
    )


def _san_values(cert: x509.Certificate, general_name_type) -> List[str]:
    try:
        san = cert.extensions.get_extension_for_class(x509.SubjectAlternativeName).value
    except x509.ExtensionNotFound:
        return []
    return san.get_values_for_type(general_name_type)


def _common_name(cert: x509.Certificate) -> Optional[str]:
    attrs = cert.subject.get_attributes_for_oid(NameOID.COMMON_NAME)
    return str(attrs[0].value) if attrs else None


def certificate_dns_names(cert: x509.Certificate) -> List[str]:
    return _san_values(cert, x509.DNSName)


def _as_certificate(certificate: Union[bytes, x509.Certificate]) -> x509.Certificate:
    if isinstance(certificate, x509.Certificate):
        return certificate
    return load_certificate(certificate)


def extract_did(certificate: Union[bytes, x509.Certificate]) -> Did:
    """The DID carried as the sole DID-valued SAN URI."""
    cert = _as_certificate(certificate)
    dids = [uri for uri in _san_values(cert, x509.UniformResourceIdentifier) if uri.startswith("did:")]
    if not dids:
        raise NoDidPresent("certificate carries no DID SAN URI")
    if len(dids) > 1:
        raise AmbiguousDid(f"certificate carries {len(dids)} DID SAN URIs", details={"dids": dids})
    return parse_did(dids[0])


def has_did(certificate: Union[bytes, x509.Certificate]) -> bool:
    try:
        extract_did(certificate)
    except (NoDidPresent, AmbiguousDid, MalformedDid):
        return False
    return True


def certificate_public_key(certificate: Union[bytes, x509.Certificate]) -> Tuple[KeyType, bytes]:
    """Key type and canonical raw public key from the SubjectPublicKeyInfo."""
    public = _as_certificate(certificate).public_key()
    if isinstance(public, ed25519.Ed25519PublicKey):
        raw = public.public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        return KeyType.ED25519, raw
    if isinstance(public, ec.EllipticCurvePublicKey) and isinstance(public.curve, ec.SECP256R1):
        raw = public.public_bytes(
            serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint
        )
        return KeyType.ECDSA_P256, normalize_public_key(KeyType.ECDSA_P256, raw)
    raise InvalidKey(f"unsupported certificate key {type(public).__name__}")


def is_self_issued(cert: x509.Certificate) -> bool:
    return cert.subject == cert.issuer


def verifies_self_signature(cert: x509.Certificate) -> bool:
    try:
        cert.verify_directly_issued_by(cert)
    except (ValueError, TypeError, InvalidSignature):
        return False
    return True


def is_derived_id_certificate(certificate: Union[bytes, x509.Certificate]) -> bool:
    """Self-issued, no DID, CN equal to the key's derived identifier."""
    cert = _as_certificate(certificate)
    if not is_self_issued(cert) or has_did(cert):
        return False
    try:
        _, raw = certificate_public_key(cert)
    except InvalidKey:
        return False
    return _common_name(cert) == derived_identifier(raw)


def within_validity(cert: x509.Certificate, now: Optional[datetime] = None) -> bool:
    now = now or utc_now()
    return cert.not_valid_before_utc - CLOCK_SKEW <= now <= cert.not_valid_after_utc + CLOCK_SKEW


class BindingReason(str, Enum):
    OK = "ok"
    DID_MISMATCH = "did_mismatch"
    KEY_NOT_IN_DOCUMENT = "key_not_in_document"
    EXPIRED_CERTIFICATE = "expired_certificate"
    MALFORMED = "malformed"
    BAD_SELF_SIGNATURE = "bad_self_signature"


class BindingVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    valid: bool
    matched_method_id: Optional[str] = None
    reason: BindingReason

    @model_validator(mode="after")
    def _check(self) -> "BindingVerdict":
        if self.valid != (self.reason is BindingReason.OK):
            raise ValueError("valid iff reason is ok")
        return self

    @classmethod
    def reject(cls, reason: BindingReason) -> "BindingVerdict":
        return cls(valid=False, reason=reason)


def validate_did_binding(
    certificate_der: bytes,
    document: DidDocument,
    now: Optional[datetime] = None,
    strict: bool = False,
) -> BindingVerdict:
    """Check that the certificate's DID and public key match `document`."""
    cert = load_certificate(certificate_der)
    try:
        did = extract_did(cert)
        key_type, raw = certificate_public_key(cert)
    except (NoDidPresent, AmbiguousDid, MalformedDid, InvalidKey):
        return BindingVerdict.reject(BindingReason.MALFORMED)
    if did != document.id:
        return BindingVerdict.reject(BindingReason.DID_MISMATCH)
    if not within_validity(cert, now):
        return BindingVerdict.reject(BindingReason.EXPIRED_CERTIFICATE)
    if strict and not verifies_self_signature(cert):
        return BindingVerdict.reject(BindingReason.BAD_SELF_SIGNATURE)
    for vm in document.methods_for(Purpose.AUTHENTICATION):
        if vm.key_type is key_type and vm.public_key == raw:
            return BindingVerdict(valid=True, matched_method_id=vm.id, reason=BindingReason.OK)
    return BindingVerdict.reject(BindingReason.KEY_NOT_IN_DOCUMENT)


# OpenSSL X509_V_ERR_* codes mapped to chain verdict reasons.
_OPENSSL_REASONS = {
    2: "untrusted_root",
    9: "not_yet_valid",
    10: "expired_certificate",
    18: "untrusted_root",
    19: "untrusted_root",
    20: "untrusted_root",
    21: "untrusted_root",
    24: "not_a_ca",
    25: "chain_too_long",
    32: "not_a_ca",
}


def chain_failure_reason(errno: int) -> str:
    return _OPENSSL_REASONS.get(errno, f"x509_error_{errno}")


def _openssl_errno(exc: crypto.X509StoreContextError) -> int:
    errors = getattr(exc, "errors", None) or exc.args[0]
    return int(errors[0])


def matches_dns_name(certificate: Union[bytes, x509.Certificate], name: str) -> bool:
    """DNS SAN match (RFC 6125); the subject CN is never consulted."""
    wanted = name.rstrip(".").lower()
    for pattern in certificate_dns_names(_as_certificate(certificate)):
        pattern = pattern.rstrip(".").lower()
        if pattern == wanted:
            return True
        if pattern.startswith("*.") and "." in wanted:
            if wanted.split(".", 1)[1] == pattern[2:]:
                return True
    return False


def validate_chain(
    leaf: Union[bytes, x509.Certificate],
    intermediates: Sequence[Union[bytes, x509.Certificate]],
    trust_roots: Sequence[Union[bytes, x509.Certificate]],
    now: Optional[datetime] = None,
    expected_name: Optional[str] = None,
) -> Optional[str]:
    """Verify `leaf` up to one of `trust_roots` with OpenSSL's path validation.

    Covers signatures, validity, BasicConstraints, keyCertSign and path length.
    Returns None when valid, else a reason such as "untrusted_root".
    """
    now = now or utc_now()
    if now.tzinfo is not None:
        now = now.astimezone(timezone.utc)
    store = crypto.X509Store()
    for root in trust_roots:
        store.add_cert(crypto.X509.from_cryptography(_as_certificate(root)))
    store.set_time(now)
    untrusted = [crypto.X509.from_cryptography(_as_certificate(c)) for c in intermediates]
    context = crypto.X509StoreContext(
        store, crypto.X509.from_cryptography(_as_certificate(leaf)), chain=untrusted
    )
    try:
        context.verify_certificate()
    except crypto.X509StoreContextError as exc:
        return chain_failure_reason(_openssl_errno(exc))
    if expected_name is not None and not matches_dns_name(leaf, expected_name):
        return "name_mismatch"
    return None


def inspect_certificate(certificate: Union[bytes, x509.Certificate]) -> Dict[str, Any]:
    """Human-oriented summary for `didlink cert inspect`."""
    cert = _as_certificate(certificate)
    try:
        key_type, raw = certificate_public_key(cert)
        key_info = {"key_type": key_type.value, "public_key": b64url_encode(raw)}
    except InvalidKey:
        key_info = {"key_type": "unsupported"}
    did = None
    if has_did(cert):
        did = extract_did(cert).full
    if did is not None:
        kind = CertKind.DID_SELF_ISSUED.value
    elif is_derived_id_certificate(cert):
        kind = CertKind.DERIVED_SELF_ISSUED.value
    elif is_self_issued(cert):
        kind = CertKind.CA_ROOT.value
    else:
        kind = CertKind.CA_ISSUED.value
    return {
        "kind": kind,
        "subject": cert.subject.rfc4514_string(),
        "issuer": cert.issuer.rfc4514_string(),
        "serial_number": format(cert.serial_number, "x"),
        "not_before": cert.not_valid_before_utc.isoformat(),
        "not_after": cert.not_valid_after_utc.isoformat(),
        "did": did,
        "san_uris": _san_values(cert, x509.UniformResourceIdentifier),
        "san_dns": certificate_dns_names(cert),
        **key_info,
    }
