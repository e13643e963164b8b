"""Service hosting: frame dispatch loop, TCP server, client transports."""

from __future__ import annotations

import socket
import socketserver
import threading

from ..errors import StoreBadRequestError, StoreError, StoreIOError, StoreUnavailableError
from . import protocol
from .protocol import (
    FRAME_HEADER,
    OK,
    PING,
    SHUTDOWN,
    decode_frame,
    decode_header,
    encode_frame,
    error_payload,
    pack_json,
    raise_for_status,
)


class ServiceCore:
    """Opcode dispatch shared by all services.

    Subclasses register ops in `self.dispatch`; handlers take the payload
    bytes and return response payload bytes, raising StoreError on failure.
    """

    service = "service"

    def __init__(self, service_id: str):
        self.service_id = service_id
        self.dispatch = {PING: self._op_ping}

    def _op_ping(self, payload: bytes) -> bytes:
        return pack_json({"service": self.service, "service_id": self.service_id})

    def handle(self, opcode: int, payload: bytes) -> tuple[int, bytes]:
        fn = self.dispatch.get(opcode)
        if fn is None:
            exc = StoreBadRequestError(
                f"{self.service} {self.service_id!r} does not support opcode 0x{opcode:02x}"
            )
            return exc.code, error_payload(exc)
        try:
            return OK, fn(payload)
        except StoreError as exc:
            return exc.code, error_payload(exc)
        except OSError as exc:
            wrapped = StoreIOError(f"{self.service_id}: {exc}")
            return wrapped.code, error_payload(wrapped)


class _FrameHandler(socketserver.StreamRequestHandler):
    def _read_exact(self, count: int) -> bytes | None:
        data = self.rfile.read(count)
        if len(data) != count:
            return None
        return data

    def handle(self):
        while True:
            header = self._read_exact(FRAME_HEADER.size)
            if header is None:
                return
            try:
                opcode, length = decode_header(header)
            except protocol.ProtocolError:
                return
            payload = b""
            if length:
                body = self._read_exact(length)
                if body is None:
                    return
                payload = body
            if opcode == SHUTDOWN:
                self.wfile.write(encode_frame(OK, pack_json({"stopping": True})))
                self.wfile.flush()
                threading.Thread(target=self.server.shutdown, daemon=True).start()
                return
            status, response = self.server.core.handle(opcode, payload)
            self.wfile.write(encode_frame(status, response))
            self.wfile.flush()


class EphemServer(socketserver.ThreadingTCPServer):
    # SO_REUSEADDR skips TIME_WAIT holds but still refuses an actively
    # bound port, which the port-collision contract relies on.
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: str, port: int, core: ServiceCore):
        self.core = core
        super().__init__((address, port), _FrameHandler)


def serve_in_thread(core: ServiceCore, address: str = "127.0.0.1", port: int = 0):
    """Bind and serve a core on a background thread; returns (server, port)."""
    server = EphemServer(address, port, core)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]


class SocketTransport:
    """One lockstep request/response connection to a service."""

    def __init__(self, address: str, port: int, label: str | None = None, timeout: float = 30.0):
        self.address = address
        self.port = port
        self.label = label or f"{address}:{port}"
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._lock = threading.Lock()

    def _connect(self) -> socket.socket:
        if self._sock is None:
            try:
                sock = socket.create_connection((self.address, self.port), timeout=self.timeout)
            except OSError as exc:
                raise StoreUnavailableError(f"{self.label} unreachable: {exc}")
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._sock = sock
        return self._sock

    def request(self, opcode: int, payload: bytes = b"") -> tuple[int, bytes]:
        with self._lock:
            sock = self._connect()
            try:
                sock.sendall(encode_frame(opcode, payload))
                return protocol.recv_frame(sock)
            except (OSError, ConnectionError) as exc:
                self.close_locked()
                raise StoreUnavailableError(f"{self.label} connection failed: {exc}")

    def close_locked(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self):
        with self._lock:
            self.close_locked()


class LocalTransport:
    """In-process transport that still round-trips every frame encoding."""

    def __init__(self, core: ServiceCore, label: str | None = None):
        self.core = core
        self.label = label or core.service_id

    def request(self, opcode: int, payload: bytes = b"") -> tuple[int, bytes]:
        code, body = decode_frame(encode_frame(opcode, payload))
        status, response = self.core.handle(code, body)
        return decode_frame(encode_frame(status, response))

    def close(self):
        pass


def call(transport, opcode: int, payload: bytes = b"") -> bytes:
    """Issue a request and raise the mapped StoreError on non-OK status."""
    status, response = transport.request(opcode, payload)
    raise_for_status(status, response)
    return response
