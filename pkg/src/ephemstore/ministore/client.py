"""Client session: namespace ops plus stripe-aware read/write reassembly."""

from __future__ import annotations

import threading
from dataclasses import dataclass

from ..errors import StoreIOError, StoreIsDirError, StoreMissingError, StoreUnavailableError
from .metadata import FileMeta
from .protocol import (
    CHUNK_READ_HEADER,
    CHUNK_SYNC,
    CHUNK_WRITE,
    CHUNK_WRITE_HEADER,
    CHUNK_READ,
    FILE_ID_HEADER,
    NS_CREATE,
    NS_LIST,
    NS_MKDIR,
    NS_RMDIR,
    NS_SET_SIZE,
    NS_STAT,
    NS_UNLINK,
    SNAPSHOT,
    pack_json,
    unpack_json,
)
from .server import SocketTransport, call


@dataclass(frozen=True)
class DirMeta:
    path: str
    entries: int = 0

    kind = "directory"


def _default_resolver(entry: dict):
    return SocketTransport(entry["address"], entry["port"], label=entry["service_id"])


class Session:
    """One logical client connection set: management, namespace owner, targets."""

    def __init__(
        self,
        mgmt_address: str | None = None,
        mgmt_port: int | None = None,
        *,
        mgmt_transport=None,
        resolver=None,
    ):
        if mgmt_transport is None:
            if mgmt_address is None or mgmt_port is None:
                raise StoreUnavailableError("management endpoint not given")
            mgmt_transport = SocketTransport(mgmt_address, int(mgmt_port), label="management")
        self._mgmt = mgmt_transport
        self._resolver = resolver or _default_resolver
        self._entries: dict[str, dict] = {}
        self._transports: dict[str, object] = {}
        self._owner_id: str | None = None
        self._stripe_cache: dict[str, FileMeta] = {}
        self._lock = threading.Lock()
        self.attached = False

    # -- lifecycle -----------------------------------------------------------

    def attach(self) -> "Session":
        snap = unpack_json(call(self._mgmt, SNAPSHOT))
        metas = sorted(
            (e for e in snap["services"] if e["service"] == "metadata"),
            key=lambda e: e["service_id"],
        )
        if not metas:
            raise StoreUnavailableError("no metadata service registered")
        self._entries = {e["service_id"]: e for e in snap["services"]}
        self._owner_id = metas[0]["service_id"]
        self.attached = True
        return self

    def close(self):
        with self._lock:
            transports = list(self._transports.values())
            self._transports.clear()
        for transport in transports:
            transport.close()
        self._mgmt.close()
        self.attached = False

    def __enter__(self) -> "Session":
        if not self.attached:
            self.attach()
        return self

    def __exit__(self, *exc):
        self.close()

    @classmethod
    def from_config(cls, values: dict) -> "Session":
        return cls(values["mgmt_address"], int(values["mgmt_port"]))

    def _transport(self, service_id: str):
        with self._lock:
            found = self._transports.get(service_id)
            if found is None:
                entry = self._entries.get(service_id)
                if entry is None:
                    raise StoreMissingError(f"unknown service {service_id!r}")
                found = self._resolver(entry)
                self._transports[service_id] = found
            return found

    def _owner(self):
        if not self.attached:
            raise StoreUnavailableError("session not attached")
        return self._transport(self._owner_id)

    # -- namespace ops ---------------------------------------------------------

    def create(self, path: str, stripe_size: int | None = None) -> FileMeta:
        doc = {"path": path}
        if stripe_size is not None:
            doc["stripe_size"] = stripe_size
        meta = FileMeta.from_doc(unpack_json(call(self._owner(), NS_CREATE, pack_json(doc))))
        self._stripe_cache[path] = meta
        return meta

    def mkdir(self, path: str):
        call(self._owner(), NS_MKDIR, pack_json({"path": path}))

    def rmdir(self, path: str):
        call(self._owner(), NS_RMDIR, pack_json({"path": path}))

    def unlink(self, path: str) -> dict:
        result = unpack_json(call(self._owner(), NS_UNLINK, pack_json({"path": path})))
        self._stripe_cache.pop(path, None)
        return result

    def stat(self, path: str):
        doc = unpack_json(call(self._owner(), NS_STAT, pack_json({"path": path})))
        if doc["kind"] == "file":
            meta = FileMeta.from_doc(doc)
            self._stripe_cache[path] = meta
            return meta
        return DirMeta(path=doc["path"], entries=doc.get("entries", 0))

    def exists(self, path: str) -> bool:
        try:
            self.stat(path)
            return True
        except StoreMissingError:
            return False

    def listdir(self, path: str) -> tuple[list[str], list[str]]:
        doc = unpack_json(call(self._owner(), NS_LIST, pack_json({"path": path})))
        return doc["dirs"], doc["files"]

    # -- data ops ----------------------------------------------------------------

    def _file_meta(self, path: str) -> FileMeta:
        meta = self._stripe_cache.get(path)
        if meta is None:
            meta = self.stat(path)
            if meta.kind != "file":
                raise StoreIsDirError(f"not a file: {path}")
        return meta

    def _target_call(self, target_id: str, opcode: int, payload: bytes, op: str) -> bytes:
        try:
            return call(self._transport(target_id), opcode, payload)
        except StoreUnavailableError as exc:
            raise StoreIOError(f"target {target_id} down during {op}: {exc}")

    def write(self, path: str, offset: int, data: bytes) -> int:
        from .striping import chunk_spans

        meta = self._file_meta(path)
        stripe = meta.stripe
        view = memoryview(data)
        for index, in_chunk, span, consumed in chunk_spans(
            offset, len(data), stripe.stripe_size_bytes
        ):
            header = CHUNK_WRITE_HEADER.pack(meta.file_id, index, in_chunk)
            self._target_call(
                stripe.target_of_chunk(index),
                CHUNK_WRITE,
                header + bytes(view[consumed : consumed + span]),
                "write",
            )
        if data:
            call(
                self._owner(),
                NS_SET_SIZE,
                pack_json({"path": path, "size": offset + len(data)}),
            )
        return len(data)

    def read(self, path: str, offset: int, length: int) -> bytes:
        from .striping import chunk_spans

        meta = self.stat(path)
        if meta.kind != "file":
            raise StoreIsDirError(f"not a file: {path}")
        end = min(offset + length, meta.size_bytes)
        if offset >= end:
            return b""
        stripe = meta.stripe
        parts = []
        for index, in_chunk, span, _ in chunk_spans(
            offset, end - offset, stripe.stripe_size_bytes
        ):
            header = CHUNK_READ_HEADER.pack(meta.file_id, index, in_chunk, span)
            piece = self._target_call(
                stripe.target_of_chunk(index), CHUNK_READ, header, "read"
            )
            if len(piece) < span:
                # unwritten hole inside the file extent
                piece = piece + b"\x00" * (span - len(piece))
            parts.append(piece)
        return b"".join(parts)

    def read_full(self, path: str) -> bytes:
        meta = self.stat(path)
        if meta.kind != "file":
            raise StoreIsDirError(f"not a file: {path}")
        return self.read(path, 0, meta.size_bytes) if meta.size_bytes else b""

    def sync(self, path: str):
        meta = self._file_meta(path)
        for target_id in meta.stripe.targets:
            self._target_call(
                target_id, CHUNK_SYNC, FILE_ID_HEADER.pack(meta.file_id), "sync"
            )
