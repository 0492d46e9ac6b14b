"""
Read-only HTTP inspection API for the simulated registry.
"""

from fastapi import FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from .. import __version__
from ..errors import DidLinkError
from ..monitoring import get_logger
from .ledger import Ledger
from .schemas import DocumentResponse, HealthResponse, HistoryResponse, LogPage, StatusResponse

logger = get_logger(__name__)

MAX_PAGE = 1000


async def didlink_error_handler(request: Request, exc: DidLinkError):
    """Render library errors with their code, suggestion and status."""
    return JSONResponse(
        status_code=exc.status_code,
        content={**exc.to_dict(), "status_code": exc.status_code, "path": request.url.path},
    )


async def not_found_handler(request: Request, exc: StarletteHTTPException):
    return JSONResponse(
        status_code=exc.status_code,
        content={
            "error": "not_found" if exc.status_code == 404 else "http_error",
            "message": str(exc.detail),
            "status_code": exc.status_code,
            "path": request.url.path,
            "suggestion": "Available routes: /health, /dids/{did}, /dids/{did}/history, /log, /status/{list_id}/{index}.",
        },
    )


async def validation_handler(request: Request, exc: RequestValidationError):
    return JSONResponse(
        status_code=422,
        content={
            "error": "malformed_request",
            "message": "The request parameters are invalid.",
            "status_code": 422,
            "suggestion": "Review the error details below and correct the invalid parameters.",
            "details": [{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()],
        },
    )


def create_app(ledger: Ledger) -> FastAPI:
    app = FastAPI(
        title="DID Link registry",
        description="Read-only view of the simulated verifiable data registry",
        version=__version__,
    )
    app.state.ledger = ledger
    app.add_exception_handler(DidLinkError, didlink_error_handler)
    app.add_exception_handler(StarletteHTTPException, not_found_handler)
    app.add_exception_handler(RequestValidationError, validation_handler)

    @app.get("/health", response_model=HealthResponse)
    async def health():
        return HealthResponse(
            status="healthy", records=ledger.seq, head=ledger.head_hash, dids=len(ledger.dids())
        )

    @app.get("/dids/{did:path}/history", response_model=HistoryResponse)
    async def did_history(did: str):
        documents = ledger.history(did)
        return HistoryResponse(did=did, versions=[d.to_json_dict() for d in documents])

    @app.get("/dids/{did:path}", response_model=DocumentResponse)
    async def get_did(did: str):
        document = ledger.lookup(did)
        return DocumentResponse(did=document.id.full, version=document.version, document=document.to_json_dict())

    @app.get("/log", response_model=LogPage)
    async def get_log(offset: int = Query(0, ge=0), limit: int = Query(100, ge=1, le=MAX_PAGE)):
        records = ledger.records(offset, limit)
        return LogPage(
            offset=offset,
            limit=limit,
            total=ledger.seq,
            records=[r.model_dump(mode="json") for r in records],
        )

    @app.get("/status/{list_id}/{index}", response_model=StatusResponse)
    async def get_status(list_id: str, index: int):
        revoked = ledger.get_status(list_id, index)
        info = ledger.status_info(list_id)
        return StatusResponse(list_id=list_id, index=index, revoked=revoked, version=info["version"])

    logger.debug("Registry HTTP app created", records=ledger.seq)
    return app
