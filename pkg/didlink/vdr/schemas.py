"""Request and response models of the registry wire protocol."""

from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, TypeAdapter

from ..codec import B64Bytes
from ..did_core import DidField

MAX_STATUS_LIST_SIZE = 1 << 20


class _Request(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AnchorRequest(_Request):
    op: Literal["anchor"] = "anchor"
    document: Dict[str, Any]
    signature: B64Bytes
    signer_key_id: Optional[str] = None


class UpdateRequest(_Request):
    op: Literal["update"] = "update"
    did: DidField
    document: Dict[str, Any]
    signature: B64Bytes
    signer_key_id: str


class LookupRequest(_Request):
    op: Literal["lookup"] = "lookup"
    did: DidField


class HistoryRequest(_Request):
    op: Literal["history"] = "history"
    did: DidField


class StatusCreateRequest(_Request):
    op: Literal["status_create"] = "status_create"
    list_id: str = Field(min_length=1, max_length=128)
    owner: DidField
    size: int = Field(ge=1, le=MAX_STATUS_LIST_SIZE)
    signature: B64Bytes
    signer_key_id: str


class StatusSetRequest(_Request):
    op: Literal["status_set"] = "status_set"
    list_id: str
    index: int = Field(ge=0)
    revoked: bool
    version: int = Field(ge=1)
    signature: B64Bytes
    signer_key_id: str


class StatusGetRequest(_Request):
    op: Literal["status_get"] = "status_get"
    list_id: str
    index: int = Field(ge=0)


class StatusInfoRequest(_Request):
    op: Literal["status_info"] = "status_info"
    list_id: str


class PingRequest(_Request):
    op: Literal["ping"] = "ping"


VdrRequest = Annotated[
    Union[
        AnchorRequest,
        UpdateRequest,
        LookupRequest,
        HistoryRequest,
        StatusCreateRequest,
        StatusSetRequest,
        StatusGetRequest,
        StatusInfoRequest,
        PingRequest,
    ],
    Field(discriminator="op"),
]
request_adapter: TypeAdapter = TypeAdapter(VdrRequest)

WRITE_OPS = frozenset({"anchor", "update", "status_create", "status_set"})


class VdrResponse(BaseModel):
    ok: bool
    result: Any = None
    error: Optional[str] = None
    message: Optional[str] = None
    suggestion: Optional[str] = None


# HTTP inspection API responses


class HealthResponse(BaseModel):
    status: str
    records: int
    head: str
    dids: int


class DocumentResponse(BaseModel):
    did: str
    version: int
    document: Dict[str, Any]


class HistoryResponse(BaseModel):
    did: str
    versions: List[Dict[str, Any]]


class LogPage(BaseModel):
    offset: int
    limit: int
    total: int
    records: List[Dict[str, Any]]


class StatusResponse(BaseModel):
    list_id: str
    index: int
    revoked: bool
    version: int
