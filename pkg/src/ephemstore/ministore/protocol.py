"""Wire protocol: versioned binary frames over stream transports.

Frame layout (both directions):

    offset 0  4 bytes   magic b"EPS1" (name + protocol version)
    offset 4  1 byte    request: opcode / response: status
    offset 5  4 bytes   payload length, big-endian unsigned
    offset 9  N bytes   payload

Control payloads are compact JSON documents; chunk data ops use packed
binary headers (see CHUNK_WRITE_HEADER / CHUNK_READ_HEADER) so bulk bytes
are never re-encoded.
"""

from __future__ import annotations

import json
import socket
import struct

from ..errors import (
    StoreBadRequestError,
    StoreDuplicateError,
    StoreError,
    StoreExistsError,
    StoreIOError,
    StoreIsDirError,
    StoreMissingError,
    StoreNotDirError,
    StoreNotEmptyError,
    StoreUnavailableError,
)

MAGIC = b"EPS1"
FRAME_HEADER = struct.Struct(">4sBI")
MAX_PAYLOAD = 64 * 1024 * 1024

# opcodes
PING = 0x01
HEALTH = 0x02
REGISTER = 0x03
SNAPSHOT = 0x04
SHUTDOWN = 0x05
NS_CREATE = 0x10
NS_MKDIR = 0x11
NS_STAT = 0x12
NS_UNLINK = 0x13
NS_RMDIR = 0x14
NS_SET_SIZE = 0x15
NS_LIST = 0x16
REC_PUT = 0x17
REC_DEL = 0x18
CHUNK_WRITE = 0x20
CHUNK_READ = 0x21
CHUNK_DROP = 0x22
CHUNK_SYNC = 0x23

OPCODE_NAMES = {
    PING: "ping",
    HEALTH: "health",
    REGISTER: "register",
    SNAPSHOT: "snapshot",
    SHUTDOWN: "shutdown",
    NS_CREATE: "ns_create",
    NS_MKDIR: "ns_mkdir",
    NS_STAT: "ns_stat",
    NS_UNLINK: "ns_unlink",
    NS_RMDIR: "ns_rmdir",
    NS_SET_SIZE: "ns_set_size",
    NS_LIST: "ns_list",
    REC_PUT: "rec_put",
    REC_DEL: "rec_del",
    CHUNK_WRITE: "chunk_write",
    CHUNK_READ: "chunk_read",
    CHUNK_DROP: "chunk_drop",
    CHUNK_SYNC: "chunk_sync",
}

# statuses
OK = 0x00

_STATUS_ERRORS = {
    1: StoreBadRequestError,
    2: StoreExistsError,
    3: StoreMissingError,
    4: StoreNotEmptyError,
    5: StoreNotDirError,
    6: StoreIsDirError,
    7: StoreDuplicateError,
    8: StoreUnavailableError,
    9: StoreError,
    10: StoreIOError,
}

# file_id, chunk_index, offset_in_chunk (+ raw data)
CHUNK_WRITE_HEADER = struct.Struct("<QQI")
# file_id, chunk_index, offset_in_chunk, length
CHUNK_READ_HEADER = struct.Struct("<QQII")
# file_id
FILE_ID_HEADER = struct.Struct("<Q")
# bytes written
COUNT_HEADER = struct.Struct("<I")


class ProtocolError(StoreError):
    """Malformed frame or payload."""


def pack_json(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True).encode()


def unpack_json(payload: bytes):
    try:
        return json.loads(payload.decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"bad JSON payload: {exc}")


def encode_frame(code: int, payload: bytes = b"") -> bytes:
    if len(payload) > MAX_PAYLOAD:
        raise ProtocolError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return FRAME_HEADER.pack(MAGIC, code, len(payload)) + payload


def decode_header(header: bytes) -> tuple[int, int]:
    magic, code, length = FRAME_HEADER.unpack(header)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    return code, length


def decode_frame(buf: bytes) -> tuple[int, bytes]:
    if len(buf) < FRAME_HEADER.size:
        raise ProtocolError("truncated frame")
    code, length = decode_header(buf[: FRAME_HEADER.size])
    payload = buf[FRAME_HEADER.size :]
    if len(payload) != length:
        raise ProtocolError(f"payload length {len(payload)} != declared {length}")
    return code, payload


def recv_exact(sock: socket.socket, count: int) -> bytes:
    parts = []
    remaining = count
    while remaining:
        part = sock.recv(min(remaining, 1 << 20))
        if not part:
            raise ConnectionError("peer closed mid-frame")
        parts.append(part)
        remaining -= len(part)
    return b"".join(parts)


def recv_frame(sock: socket.socket) -> tuple[int, bytes]:
    header = recv_exact(sock, FRAME_HEADER.size)
    code, length = decode_header(header)
    payload = recv_exact(sock, length) if length else b""
    return code, payload


def error_payload(exc: Exception) -> bytes:
    return pack_json({"error": str(exc)})


def status_of(exc: Exception) -> int:
    if isinstance(exc, StoreError):
        return exc.code
    return StoreError.code


def raise_for_status(status: int, payload: bytes):
    """Map a non-OK response back onto the StoreError family."""
    if status == OK:
        return
    try:
        message = unpack_json(payload).get("error", "unknown error")
    except ProtocolError:
        message = payload.decode(errors="replace") or "unknown error"
    cls = _STATUS_ERRORS.get(status, StoreError)
    raise cls(message)
