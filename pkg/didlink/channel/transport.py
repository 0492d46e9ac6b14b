"""
Memory-BIO pump between a pyOpenSSL connection and a TCP socket.

Records are fed to OpenSSL one at a time so that every wire byte is counted
and post-handshake records that carry no application data (session tickets)
can be attributed.
"""

import socket
import struct
import threading
from typing import Optional

from OpenSSL import SSL

from ..errors import Timeout, TransportError

RECORD_HEADER = struct.Struct(">BHH")
MAX_RECORD = (1 << 14) + 256
READ_CHUNK = 1 << 16


class TlsPump:
    def __init__(self, sock: socket.socket, conn: SSL.Connection):
        self.sock = sock
        self.conn = conn
        self.bytes_sent = 0
        self.bytes_received = 0
        self.ticket_bytes = 0
        self.handshake_done = False
        self._seen_app_data = False
        self._conn_lock = threading.RLock()
        self._read_lock = threading.Lock()
        self.closed = False

    def _recv_exact(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout as exc:
                raise Timeout("peer did not answer in time") from exc
            except OSError as exc:
                raise TransportError(f"socket read failed: {exc}") from exc
            if not chunk:
                if not buf:
                    return b""
                raise TransportError("connection closed inside a TLS record")
            buf.extend(chunk)
        return bytes(buf)

    def _read_record(self) -> bytes:
        header = self._recv_exact(RECORD_HEADER.size)
        if not header:
            return b""
        _, _, length = RECORD_HEADER.unpack(header)
        if length > MAX_RECORD:
            raise TransportError(f"TLS record of {length} bytes exceeds the protocol limit")
        body = self._recv_exact(length)
        if len(body) != length:
            raise TransportError("connection closed inside a TLS record")
        self.bytes_received += len(header) + length
        return header + body

    def flush(self) -> int:
        """Send everything OpenSSL queued for the wire; return the byte count."""
        with self._conn_lock:
            out = bytearray()
            while True:
                try:
                    out += self.conn.bio_read(READ_CHUNK)
                except SSL.WantReadError:
                    break
            if out:
                try:
                    self.sock.sendall(out)
                except OSError as exc:
                    raise TransportError(f"socket write failed: {exc}") from exc
                self.bytes_sent += len(out)
            return len(out)

    def feed_record(self) -> int:
        record = self._read_record()
        if not record:
            with self._conn_lock:
                self.conn.bio_shutdown()
            return 0
        with self._conn_lock:
            self.conn.bio_write(record)
        return len(record)

    def handshake(self) -> int:
        """Drive the handshake; return bytes OpenSSL queued after it completed."""
        while True:
            try:
                with self._conn_lock:
                    self.conn.do_handshake()
            except SSL.WantReadError:
                self.flush()
                if self.feed_record() == 0:
                    raise TransportError("peer closed the connection during the handshake")
                continue
            except SSL.Error:
                # deliver our alert before the caller closes the socket
                try:
                    self.flush()
                except TransportError:
                    pass
                raise
            self.handshake_done = True
            return self.flush()

    def send(self, data: bytes) -> None:
        with self._conn_lock:
            view = memoryview(data)
            while view:
                written = self.conn.send(view[:MAX_RECORD - 256])
                view = view[written:]
            self.flush()

    def recv_some(self) -> bytes:
        """Next chunk of application data; b"" once the peer closed."""
        with self._read_lock:
            last_fed = 0
            while True:
                try:
                    with self._conn_lock:
                        data = self.conn.recv(READ_CHUNK)
                except SSL.WantReadError:
                    if last_fed and not self._seen_app_data:
                        self.ticket_bytes += last_fed
                    self.flush()
                    last_fed = self.feed_record()
                    if last_fed == 0:
                        return b""
                    continue
                except SSL.ZeroReturnError:
                    return b""
                except SSL.SysCallError as exc:
                    if exc.args and exc.args[0] == -1:
                        return b""
                    raise TransportError(f"TLS read failed: {exc}") from exc
                self._seen_app_data = True
                return data

    def shutdown(self) -> None:
        if self.closed:
            return
        self.closed = True
        try:
            with self._conn_lock:
                self.conn.shutdown()
            self.flush()
        except (SSL.Error, TransportError):
            pass
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()
