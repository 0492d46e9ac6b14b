"""
Append-only registry state with a hash-chained NDJSON log.

Each log line is the canonical JSON of one LedgerTransaction. `prev_hash` is
the sha256 (hex) of the previous line, `hash` the sha256 of the record's own
canonical form without `hash`. Replay re-validates every transaction with the
same rules that admitted it.
"""

import hashlib
import json
import random
from dataclasses import dataclass, replace
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from ..cert_kit import verify_signature
from ..codec import B64Bytes, UtcDatetime, canonical_json, utc_now
from ..did_core import Did, DidDocument, DidField, Purpose, VerificationMethod, parse_did
from ..errors import (
    AlreadyAnchored,
    BadSignature,
    CorruptLog,
    DidLinkError,
    DuplicateList,
    IndexOutOfRange,
    IoFailure,
    MalformedDocument,
    UnauthorizedKey,
    VersionConflict,
    did_not_found_error,
    status_list_not_found_error,
)
from ..monitoring import get_logger

logger = get_logger(__name__)

GENESIS_HASH = "0" * 64


class TransactionKind(str, Enum):
    ANCHOR = "anchor"
    UPDATE = "update"
    STATUS_CREATE = "status_create"
    STATUS_SET = "status_set"


class LedgerTransaction(BaseModel):
    model_config = ConfigDict(frozen=True)

    seq: int = Field(ge=1)
    kind: TransactionKind
    did: Optional[DidField] = None
    payload: Dict[str, Any]
    signature: B64Bytes
    signer_key_id: str
    timestamp: UtcDatetime
    prev_hash: str
    hash: str = ""

    def body(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json")
        data.pop("hash")
        return data

    def compute_hash(self) -> str:
        return hashlib.sha256(canonical_json(self.body())).hexdigest()

    def line(self) -> bytes:
        return canonical_json(self.model_dump(mode="json"))


class LatencyProfile(BaseModel):
    """Artificial server-side delays in milliseconds."""

    model_config = ConfigDict(frozen=True)

    read_delay: float = Field(default=0.0, ge=0)
    write_delay: float = Field(default=0.0, ge=0)
    jitter: float = Field(default=0.0, ge=0)

    def _sample(self, base: float, rng: random.Random) -> float:
        if self.jitter:
            base += rng.uniform(-self.jitter, self.jitter)
        return max(0.0, base) / 1000.0

    def read_seconds(self, rng: random.Random) -> float:
        return self._sample(self.read_delay, rng)

    def write_seconds(self, rng: random.Random) -> float:
        return self._sample(self.write_delay, rng)


# Named profiles used by the benchmark scenarios.
LATENCY_PROFILES = {
    "none": LatencyProfile(),
    "local": LatencyProfile(read_delay=2.0, write_delay=5.0, jitter=0.5),
    "remote_a": LatencyProfile(read_delay=60.0, write_delay=120.0, jitter=10.0),
    "remote_b": LatencyProfile(read_delay=25.0, write_delay=60.0, jitter=5.0),
}


@dataclass(frozen=True)
class StatusList:
    list_id: str
    owner: Did
    size: int
    bits: bytes
    version: int = 1

    @classmethod
    def empty(cls, list_id: str, owner: Did, size: int) -> "StatusList":
        return cls(list_id=list_id, owner=owner, size=size, bits=bytes((size + 7) // 8))

    def get(self, index: int) -> bool:
        self._check(index)
        return bool(self.bits[index // 8] & (0x80 >> (index % 8)))

    def with_bit(self, index: int, revoked: bool) -> "StatusList":
        self._check(index)
        bits = bytearray(self.bits)
        mask = 0x80 >> (index % 8)
        if revoked:
            bits[index // 8] |= mask
        else:
            bits[index // 8] &= ~mask & 0xFF
        return replace(self, bits=bytes(bits), version=self.version + 1)

    def _check(self, index: int) -> None:
        if not 0 <= index < self.size:
            raise IndexOutOfRange(
                f"index {index} outside list {self.list_id} of size {self.size}",
                details={"list_id": self.list_id, "index": index, "size": self.size},
            )

    def info(self) -> Dict[str, Any]:
        return {
            "list_id": self.list_id,
            "owner": self.owner.full,
            "size": self.size,
            "version": self.version,
            "revoked_count": sum(bin(b).count("1") for b in self.bits),
        }


def status_create_payload(list_id: str, owner: Union[Did, str], size: int) -> Dict[str, Any]:
    return {"op": "status_create", "list_id": list_id, "owner": str(owner), "size": size}


def status_set_payload(list_id: str, index: int, revoked: bool, version: int) -> Dict[str, Any]:
    return {
        "op": "status_set",
        "list_id": list_id,
        "index": index,
        "revoked": revoked,
        "version": version,
    }


def _verify_with(vm: VerificationMethod, signature: bytes, payload: bytes) -> bool:
    return verify_signature(vm.key_type, vm.public_key, signature, payload)


class Ledger:
    """Registry state plus its persisted log.

    Writers must be serialized by the caller (the server funnels writes
    through one task). Readers see the maps that were current when they
    looked; every commit swaps in new immutable entries.
    """

    def __init__(self, path: Optional[Union[str, Path]] = None):
        self.path = Path(path) if path else None
        self._documents: Dict[str, Tuple[DidDocument, ...]] = {}
        self._status: Dict[str, StatusList] = {}
        self._records: List[LedgerTransaction] = []
        self._head_line_hash = GENESIS_HASH
        self._log_file = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self._replay()
            self._log_file = open(self.path, "ab", buffering=0)

    @classmethod
    def open(cls, path: Union[str, Path]) -> "Ledger":
        return cls(path)

    @property
    def seq(self) -> int:
        return len(self._records)

    @property
    def head_hash(self) -> str:
        return self._head_line_hash

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    # Reads

    def lookup(self, did: Union[Did, str]) -> DidDocument:
        did = parse_did(did)
        versions = self._documents.get(did.full)
        if not versions:
            raise did_not_found_error(did.full)
        return versions[-1]

    def history(self, did: Union[Did, str]) -> List[DidDocument]:
        did = parse_did(did)
        versions = self._documents.get(did.full)
        if not versions:
            raise did_not_found_error(did.full)
        return list(versions)

    def get_status(self, list_id: str, index: int) -> bool:
        return self._status_list(list_id).get(index)

    def status_info(self, list_id: str) -> Dict[str, Any]:
        return self._status_list(list_id).info()

    def records(self, offset: int = 0, limit: Optional[int] = None) -> List[LedgerTransaction]:
        end = None if limit is None else offset + limit
        return self._records[offset:end]

    def dids(self) -> List[str]:
        return sorted(self._documents)

    def _status_list(self, list_id: str) -> StatusList:
        status = self._status.get(list_id)
        if status is None:
            raise status_list_not_found_error(list_id)
        return status

    # Writes

    def anchor_did(
        self,
        document: Union[DidDocument, Dict[str, Any]],
        signature: bytes,
        signer_key_id: Optional[str] = None,
        timestamp: Optional[datetime] = None,
    ) -> int:
        document = self._as_document(document)
        if document.version != 1:
            raise MalformedDocument(
                f"genesis documents have version 1, got {document.version}",
                details={"did": document.id.full, "version": document.version},
            )
        if document.id.full in self._documents:
            raise AlreadyAnchored(
                f"{document.id.full} is already anchored", details={"did": document.id.full}
            )
        payload = document.canonical_bytes()
        candidates = document.methods_for(Purpose.AUTHENTICATION)
        if signer_key_id is not None:
            candidates = [vm for vm in candidates if vm.id == signer_key_id.split("#")[-1]]
        signer = next((vm for vm in candidates if _verify_with(vm, signature, payload)), None)
        if signer is None:
            raise BadSignature(
                "genesis signature does not verify with an authentication key of the document",
                details={"did": document.id.full},
            )
        return self._append(
            TransactionKind.ANCHOR, document.id, document.to_json_dict(), signature, signer.id, timestamp,
            documents={**self._documents, document.id.full: (document,)},
        )

    def update_did(
        self,
        did: Union[Did, str],
        new_document: Union[DidDocument, Dict[str, Any]],
        signature: bytes,
        signer_key_id: str,
        timestamp: Optional[datetime] = None,
    ) -> int:
        did = parse_did(did)
        new_document = self._as_document(new_document)
        current = self.lookup(did)
        if new_document.id != did:
            raise MalformedDocument(f"document id {new_document.id.full} does not match {did.full}")
        if new_document.version != current.version + 1:
            raise VersionConflict(
                f"expected version {current.version + 1}, got {new_document.version}",
                details={"did": did.full, "current_version": current.version},
            )
        signer = current.method(signer_key_id)
        if signer is None or Purpose.AUTHENTICATION not in signer.purpose:
            raise UnauthorizedKey(
                f"{signer_key_id} is not an authentication key of {did.full} v{current.version}",
                details={"did": did.full, "signer_key_id": signer_key_id},
            )
        if not _verify_with(signer, signature, new_document.canonical_bytes()):
            raise BadSignature("update signature does not verify", details={"did": did.full})
        return self._append(
            TransactionKind.UPDATE, did, new_document.to_json_dict(), signature, signer.id, timestamp,
            documents={**self._documents, did.full: self._documents[did.full] + (new_document,)},
        )

    def create_status_list(
        self,
        list_id: str,
        owner: Union[Did, str],
        size: int,
        signature: bytes,
        signer_key_id: str,
        timestamp: Optional[datetime] = None,
    ) -> int:
        owner = parse_did(owner)
        if list_id in self._status:
            raise DuplicateList(f"status list {list_id} exists", details={"list_id": list_id})
        payload = status_create_payload(list_id, owner, size)
        signer = self._owner_assertion_key(owner, signer_key_id)
        if not _verify_with(signer, signature, canonical_json(payload)):
            raise BadSignature("status list signature does not verify", details={"list_id": list_id})
        return self._append(
            TransactionKind.STATUS_CREATE, None, payload, signature, signer.id, timestamp,
            status={**self._status, list_id: StatusList.empty(list_id, owner, size)},
        )

    def set_status(
        self,
        list_id: str,
        index: int,
        revoked: bool,
        signature: bytes,
        signer_key_id: str,
        version: int,
        timestamp: Optional[datetime] = None,
    ) -> int:
        status = self._status_list(list_id)
        status.get(index)
        if version != status.version + 1:
            raise VersionConflict(
                f"status list {list_id} is at version {status.version}",
                details={"list_id": list_id, "current_version": status.version},
            )
        payload = status_set_payload(list_id, index, revoked, version)
        signer = self._owner_assertion_key(status.owner, signer_key_id)
        if not _verify_with(signer, signature, canonical_json(payload)):
            raise BadSignature("status update signature does not verify", details={"list_id": list_id})
        return self._append(
            TransactionKind.STATUS_SET, None, payload, signature, signer.id, timestamp,
            status={**self._status, list_id: status.with_bit(index, revoked)},
        )

    def _owner_assertion_key(self, owner: Did, signer_key_id: str) -> VerificationMethod:
        document = self.lookup(owner)
        fragment = signer_key_id.split("#")[-1]
        if "#" in signer_key_id and signer_key_id.split("#")[0] != owner.full:
            vm = None
        else:
            vm = document.method(fragment)
        if vm is None or Purpose.ASSERTION not in vm.purpose:
            raise UnauthorizedKey(
                f"{signer_key_id} is not an assertion key of {owner.full}",
                details={"owner": owner.full, "signer_key_id": signer_key_id},
            )
        return vm

    def _as_document(self, document: Union[DidDocument, Dict[str, Any]]) -> DidDocument:
        if isinstance(document, DidDocument):
            return document
        return DidDocument.from_json_dict(document)

    # Log

    def _append(
        self,
        kind: TransactionKind,
        did: Optional[Did],
        payload: Dict[str, Any],
        signature: bytes,
        signer_key_id: str,
        timestamp: Optional[datetime],
        documents: Optional[Dict[str, Tuple[DidDocument, ...]]] = None,
        status: Optional[Dict[str, StatusList]] = None,
    ) -> int:
        """Persist one transaction, then publish the new state.

        A failed log write leaves both the file and the in-memory maps as they were.
        """
        record = LedgerTransaction(
            seq=self.seq + 1,
            kind=kind,
            did=did,
            payload=payload,
            signature=signature,
            signer_key_id=signer_key_id,
            timestamp=timestamp or utc_now(),
            prev_hash=self._head_line_hash,
        )
        record = record.model_copy(update={"hash": record.compute_hash()})
        line = record.line()
        if self._log_file is not None:
            self._write_line(line)
        if documents is not None:
            self._documents = documents
        if status is not None:
            self._status = status
        self._records.append(record)
        self._head_line_hash = hashlib.sha256(line).hexdigest()
        logger.info("Ledger append", seq=record.seq, kind=kind.value, did=did.full if did else None)
        return record.seq

    def _write_line(self, line: bytes) -> None:
        start = self._log_file.tell()
        try:
            self._log_file.write(line + b"\n")
            self._log_file.flush()
        except OSError as exc:
            logger.error("Ledger write failed", path=str(self.path), error=str(exc))
            try:
                self._log_file.truncate(start)
            except OSError:
                pass
            raise IoFailure(
                f"cannot append to registry log {self.path}: {exc}",
                suggestion="Check free space and permissions of the registry data directory",
                details={"path": str(self.path)},
            ) from exc

    def _replay(self) -> None:
        data = self.path.read_bytes()
        if data and not data.endswith(b"\n"):
            raise CorruptLog("log ends with a partial record", details={"path": str(self.path)})
        for number, line in enumerate(data.splitlines(), start=1):
            try:
                record = LedgerTransaction.model_validate(json.loads(line))
            except ValueError as exc:
                raise CorruptLog(f"record {number} does not parse: {exc}", details={"line": number}) from exc
            if record.line() != line:
                raise CorruptLog(f"record {number} is not in canonical form", details={"line": number})
            if record.seq != number:
                raise CorruptLog(f"record {number} carries seq {record.seq}", details={"line": number})
            if record.prev_hash != self._head_line_hash:
                raise CorruptLog(f"hash chain broken at record {number}", details={"line": number})
            if record.hash != record.compute_hash():
                raise CorruptLog(f"record {number} hash mismatch", details={"line": number})
            try:
                self._apply(record)
            except DidLinkError as exc:
                raise CorruptLog(
                    f"record {number} fails validation: {exc.code}", details={"line": number}
                ) from exc
            # _apply appended a rebuilt record; keep the original one.
            self._records[-1] = record
            self._head_line_hash = hashlib.sha256(line).hexdigest()
        logger.info("Ledger replayed", path=str(self.path), records=self.seq)

    def _apply(self, record: LedgerTransaction) -> int:
        p = record.payload
        if record.kind is TransactionKind.ANCHOR:
            return self.anchor_did(p, record.signature, record.signer_key_id, record.timestamp)
        if record.kind is TransactionKind.UPDATE:
            return self.update_did(record.did, p, record.signature, record.signer_key_id, record.timestamp)
        if record.kind is TransactionKind.STATUS_CREATE:
            return self.create_status_list(
                p["list_id"], p["owner"], p["size"], record.signature, record.signer_key_id, record.timestamp
            )
        return self.set_status(
            p["list_id"],
            p["index"],
            p["revoked"],
            record.signature,
            record.signer_key_id,
            p["version"],
            record.timestamp,
        )
