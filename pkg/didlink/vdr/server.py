"""
Registry stream server.

All mutations go through a single writer task that owns the ledger's write
path, so their order equals the seq order. Reads run in the connection tasks
against the ledger's current immutable state.
"""

import asyncio
import random
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Awaitable, Callable, Dict, Optional, Tuple, Union

from pydantic import ValidationError

from ..config import parse_address
from ..errors import BindFailure, DidLinkError, MalformedRequest, TransportError
from ..monitoring import Stopwatch, get_logger
from .ledger import LatencyProfile, Ledger
from .schemas import (
    AnchorRequest,
    HistoryRequest,
    LookupRequest,
    PingRequest,
    StatusCreateRequest,
    StatusGetRequest,
    StatusInfoRequest,
    StatusSetRequest,
    UpdateRequest,
    VdrResponse,
    WRITE_OPS,
    request_adapter,
)
from .wire import encode_message, read_message

logger = get_logger(__name__)

LOG_FILE_NAME = "ledger.ndjson"


def open_ledger(data: Optional[Union[str, Path]]) -> Ledger:
    """Open the ledger at a log file path, or inside a data directory."""
    if data is None:
        return Ledger()
    path = Path(data).expanduser()
    if path.is_dir() or (not path.suffix and not path.exists()):
        path = path / LOG_FILE_NAME
    return Ledger(path)


class VdrServer:
    def __init__(
        self,
        ledger: Ledger,
        latency: Optional[LatencyProfile] = None,
        host: str = "127.0.0.1",
        port: int = 0,
        http_bind: Optional[Tuple[str, int]] = None,
        seed: Optional[int] = None,
    ):
        self.ledger = ledger
        self.latency = latency or LatencyProfile()
        self.host = host
        self.port = port
        self.http_bind = http_bind
        self._rng = random.Random(seed)
        self._queue: Optional[asyncio.Queue] = None
        self._server: Optional[asyncio.AbstractServer] = None
        self._writer_task: Optional[asyncio.Task] = None
        self._http_server = None
        self._http_task: Optional[asyncio.Task] = None
        self._connections: set = set()
        self.address: Optional[Tuple[str, int]] = None

    async def start(self) -> Tuple[str, int]:
        self._queue = asyncio.Queue()
        try:
            self._server = await asyncio.start_server(self._handle_client, self.host, self.port)
        except OSError as exc:
            raise BindFailure(
                f"cannot bind {self.host}:{self.port}: {exc}",
                details={"bind": f"{self.host}:{self.port}"},
            ) from exc
        self.address = self._server.sockets[0].getsockname()[:2]
        self._writer_task = asyncio.create_task(self._writer())
        if self.http_bind is not None:
            await self._start_http()
        logger.info(
            "Registry listening",
            address=f"{self.address[0]}:{self.address[1]}",
            records=self.ledger.seq,
            read_delay_ms=self.latency.read_delay,
            write_delay_ms=self.latency.write_delay,
            jitter_ms=self.latency.jitter,
        )
        return self.address

    async def _start_http(self) -> None:
        import uvicorn

        from .http_api import create_app

        host, port = self.http_bind
        config = uvicorn.Config(create_app(self.ledger), host=host, port=port, log_level="warning")
        self._http_server = uvicorn.Server(config)
        self._http_task = asyncio.create_task(self._http_server.serve())
        logger.info("Registry HTTP API listening", address=f"{host}:{port}")

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def stop(self) -> None:
        if self._http_server is not None:
            self._http_server.should_exit = True
            await self._http_task
        if self._server is not None:
            self._server.close()
            for writer in list(self._connections):
                writer.close()
            try:
                await asyncio.wait_for(self._server.wait_closed(), timeout=5)
            except asyncio.TimeoutError:
                pass
        if self._writer_task is not None:
            self._writer_task.cancel()
            try:
                await self._writer_task
            except asyncio.CancelledError:
                pass
        self.ledger.close()
        logger.info("Registry stopped", records=self.ledger.seq)

    async def _writer(self) -> None:
        while True:
            fn, future = await self._queue.get()
            try:
                result = fn()
            except Exception as exc:
                if not isinstance(exc, DidLinkError):
                    logger.exception("Registry write crashed")
                if not future.cancelled():
                    future.set_exception(exc)
            else:
                if not future.cancelled():
                    future.set_result(result)

    async def _submit_write(self, fn: Callable[[], Any]) -> Any:
        delay = self.latency.write_seconds(self._rng)
        if delay:
            await asyncio.sleep(delay)
        future = asyncio.get_running_loop().create_future()
        await self._queue.put((fn, future))
        return await future

    async def _read(self, fn: Callable[[], Any]) -> Any:
        delay = self.latency.read_seconds(self._rng)
        if delay:
            await asyncio.sleep(delay)
        return fn()

    async def _handle_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        self._connections.add(writer)
        try:
            while True:
                try:
                    message = await read_message(reader)
                except asyncio.IncompleteReadError:
                    break
                except TransportError as exc:
                    writer.write(encode_message(self._error_response(exc)))
                    await writer.drain()
                    break
                response = await self.dispatch(message)
                writer.write(encode_message(response))
                await writer.drain()
        except (ConnectionError, asyncio.CancelledError):
            pass
        finally:
            writer.close()
            self._connections.discard(writer)
            logger.debug("Registry client disconnected", peer=str(peer))

    @staticmethod
    def _error_response(exc: DidLinkError) -> Dict[str, Any]:
        body = exc.to_dict()
        code = body.pop("error")
        message = body.pop("message")
        suggestion = body.pop("suggestion")
        response = VdrResponse(ok=False, error=code, message=message, suggestion=suggestion)
        return {**response.model_dump(exclude_none=True), **body}

    async def dispatch(self, message: Dict[str, Any]) -> Dict[str, Any]:
        watch = Stopwatch()
        op = message.get("op")
        try:
            request = request_adapter.validate_python(message)
        except ValidationError as exc:
            return self._error_response(
                MalformedRequest(f"invalid {op!r} request: {exc.error_count()} error(s)", details={"op": op})
            )
        try:
            handler = self._handlers[request.op]
            result = await handler(self, request)
        except DidLinkError as exc:
            logger.info("Registry request refused", op=request.op, error=exc.code)
            return self._error_response(exc)
        if request.op in WRITE_OPS:
            logger.info("Registry write", op=request.op, duration_ms=round(watch.stop(), 3), **result)
        return VdrResponse(ok=True, result=result).model_dump(exclude_none=True)

    # Operation handlers

    async def _anchor(self, req: AnchorRequest) -> Dict[str, Any]:
        seq = await self._submit_write(
            lambda: self.ledger.anchor_did(req.document, req.signature, req.signer_key_id)
        )
        return {"seq": seq}

    async def _update(self, req: UpdateRequest) -> Dict[str, Any]:
        seq = await self._submit_write(
            lambda: self.ledger.update_did(req.did, req.document, req.signature, req.signer_key_id)
        )
        return {"seq": seq}

    async def _status_create(self, req: StatusCreateRequest) -> Dict[str, Any]:
        seq = await self._submit_write(
            lambda: self.ledger.create_status_list(
                req.list_id, req.owner, req.size, req.signature, req.signer_key_id
            )
        )
        return {"seq": seq}

    async def _status_set(self, req: StatusSetRequest) -> Dict[str, Any]:
        seq = await self._submit_write(
            lambda: self.ledger.set_status(
                req.list_id, req.index, req.revoked, req.signature, req.signer_key_id, req.version
            )
        )
        return {"seq": seq}

    async def _lookup(self, req: LookupRequest) -> Dict[str, Any]:
        document = await self._read(lambda: self.ledger.lookup(req.did))
        return {"document": document.to_json_dict()}

    async def _history(self, req: HistoryRequest) -> Dict[str, Any]:
        documents = await self._read(lambda: self.ledger.history(req.did))
        return {"documents": [d.to_json_dict() for d in documents]}

    async def _status_get(self, req: StatusGetRequest) -> Dict[str, Any]:
        revoked = await self._read(lambda: self.ledger.get_status(req.list_id, req.index))
        return {"list_id": req.list_id, "index": req.index, "revoked": revoked}

    async def _status_info(self, req: StatusInfoRequest) -> Dict[str, Any]:
        return await self._read(lambda: self.ledger.status_info(req.list_id))

    async def _ping(self, req: PingRequest) -> Dict[str, Any]:
        return {"seq": self.ledger.seq, "head": self.ledger.head_hash}

    _handlers: Dict[str, Callable[["VdrServer", Any], Awaitable[Dict[str, Any]]]] = {
        "anchor": _anchor,
        "update": _update,
        "status_create": _status_create,
        "status_set": _status_set,
        "lookup": _lookup,
        "history": _history,
        "status_get": _status_get,
        "status_info": _status_info,
        "ping": _ping,
    }


def serve(
    bind: Union[str, Tuple[str, int]],
    data: Optional[Union[str, Path]],
    latency: Optional[LatencyProfile] = None,
    http_bind: Optional[Union[str, Tuple[str, int]]] = None,
) -> None:
    """Run the registry until interrupted."""
    host, port = parse_address(bind)
    server = VdrServer(
        open_ledger(data),
        latency,
        host,
        port,
        http_bind=parse_address(http_bind) if http_bind else None,
    )

    async def main() -> None:
        await server.start()
        try:
            await server.serve_forever()
        finally:
            await server.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        logger.info("Registry interrupted")


@dataclass
class RunningVdr:
    """A registry served from a background thread."""

    server: VdrServer
    loop: asyncio.AbstractEventLoop
    thread: threading.Thread

    @property
    def address(self) -> Tuple[str, int]:
        return self.server.address

    @property
    def address_text(self) -> str:
        return f"{self.address[0]}:{self.address[1]}"

    @property
    def ledger(self) -> Ledger:
        return self.server.ledger

    def stop(self) -> None:
        if not self.loop.is_running():
            return
        future = asyncio.run_coroutine_threadsafe(self.server.stop(), self.loop)
        future.result(timeout=10)
        self.loop.call_soon_threadsafe(self.loop.stop)
        self.thread.join(timeout=10)

    def __enter__(self) -> "RunningVdr":
        return self

    def __exit__(self, *exc) -> None:
        self.stop()


def run_in_thread(
    ledger: Optional[Union[Ledger, str, Path]] = None,
    latency: Optional[LatencyProfile] = None,
    host: str = "127.0.0.1",
    port: int = 0,
    http_bind: Optional[Tuple[str, int]] = None,
    seed: Optional[int] = None,
) -> RunningVdr:
    """Start a registry on its own event loop thread and wait until it listens."""
    if not isinstance(ledger, Ledger):
        ledger = open_ledger(ledger)
    server = VdrServer(ledger, latency, host, port, http_bind=http_bind, seed=seed)
    loop = asyncio.new_event_loop()
    ready = threading.Event()
    failure: Dict[str, BaseException] = {}

    def run() -> None:
        asyncio.set_event_loop(loop)
        try:
            loop.run_until_complete(server.start())
        except BaseException as exc:
            failure["error"] = exc
            ready.set()
            loop.close()
            return
        ready.set()
        loop.run_forever()
        loop.close()

    thread = threading.Thread(target=run, name="vdr-server", daemon=True)
    thread.start()
    ready.wait()
    if "error" in failure:
        raise failure["error"]
    return RunningVdr(server=server, loop=loop, thread=thread)
