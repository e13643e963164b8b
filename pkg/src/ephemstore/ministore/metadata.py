"""Metadata service: namespace tree, stripe maps, sharded record files.

One metadata service (the lowest service id) owns the whole namespace and
is the one clients talk to; every metadata service additionally persists
per-file record documents, sharded by a hash of the parent directory, so
all metadata disks see traffic.
"""

from __future__ import annotations

import hashlib
import os
import threading
from dataclasses import dataclass, field

from ..errors import (
    StoreBadRequestError,
    StoreExistsError,
    StoreIsDirError,
    StoreMissingError,
    StoreNotDirError,
    StoreNotEmptyError,
    StoreUnavailableError,
)
from .protocol import (
    CHUNK_DROP,
    FILE_ID_HEADER,
    NS_CREATE,
    NS_LIST,
    NS_MKDIR,
    NS_RMDIR,
    NS_SET_SIZE,
    NS_STAT,
    NS_UNLINK,
    REC_DEL,
    REC_PUT,
    SNAPSHOT,
    pack_json,
    unpack_json,
)
from .server import ServiceCore, SocketTransport, call
from .striping import StripeMap, start_index_for


@dataclass
class FileMeta:
    path: str
    file_id: int
    size_bytes: int
    stripe: StripeMap
    attrs: dict = field(default_factory=dict)

    kind = "file"

    def to_doc(self) -> dict:
        return {
            "kind": "file",
            "path": self.path,
            "file_id": self.file_id,
            "size_bytes": self.size_bytes,
            "stripe": self.stripe.to_doc(),
            "attrs": dict(self.attrs),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "FileMeta":
        return cls(
            path=doc["path"],
            file_id=doc["file_id"],
            size_bytes=doc["size_bytes"],
            stripe=StripeMap.from_doc(doc["stripe"]),
            attrs=dict(doc.get("attrs", {})),
        )


def normalize_path(path) -> str:
    if not isinstance(path, str) or not path.startswith("/"):
        raise StoreBadRequestError(f"path must be absolute, got {path!r}")
    if path == "/":
        return path
    segments = path.strip("/").split("/")
    if any(seg in ("", ".", "..") for seg in segments):
        raise StoreBadRequestError(f"bad path {path!r}")
    return "/" + "/".join(segments)


def split_parent(path: str) -> tuple[str, str]:
    if path == "/":
        raise StoreBadRequestError("root has no parent")
    parent, _, name = path.rpartition("/")
    return parent or "/", name


def record_shard(parent: str, shard_count: int) -> int:
    digest = hashlib.blake2b(parent.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % shard_count


class MetadataCore(ServiceCore):
    service = "metadata"

    def __init__(
        self,
        service_id: str,
        data_dir: str,
        stripe_size: int = 1 << 20,
        use_xattr: bool = False,
    ):
        super().__init__(service_id)
        self.data_dir = data_dir
        self.records_dir = os.path.join(data_dir, "records")
        os.makedirs(self.records_dir, exist_ok=True)
        self.stripe_size = stripe_size
        self.use_xattr = use_xattr
        self._lock = threading.RLock()
        self._dirs: dict[str, set[str]] = {"/": set()}
        self._files: dict[str, FileMeta] = {}
        self._next_id = 1
        self._meta_ids: tuple[str, ...] | None = None
        self._storage_ids: tuple[str, ...] = ()
        self._transport_for = None
        self._mgmt = None
        self._resolver = None
        self.dispatch.update(
            {
                NS_CREATE: self._op_create,
                NS_MKDIR: self._op_mkdir,
                NS_STAT: self._op_stat,
                NS_UNLINK: self._op_unlink,
                NS_RMDIR: self._op_rmdir,
                NS_SET_SIZE: self._op_set_size,
                NS_LIST: self._op_list,
                REC_PUT: self._op_rec_put,
                REC_DEL: self._op_rec_del,
            }
        )

    # -- topology ----------------------------------------------------------

    def configure_topology(self, metadata_ids, storage_ids, transport_for):
        """Wire the service mesh explicitly (tests and single-process use)."""
        self._meta_ids = tuple(sorted(metadata_ids))
        self._storage_ids = tuple(sorted(storage_ids))
        self._transport_for = transport_for

    def connect_management(self, transport, resolver=None):
        """Let the core discover peers lazily from the management registry."""
        self._mgmt = transport
        self._resolver = resolver or (
            lambda entry: SocketTransport(
                entry["address"], entry["port"], label=entry["service_id"]
            )
        )

    def _topology(self):
        with self._lock:
            if self._meta_ids is not None:
                return
            if self._mgmt is None:
                raise StoreUnavailableError(
                    f"{self.service_id}: management registry not configured"
                )
            snap = unpack_json(call(self._mgmt, SNAPSHOT))
            entries = {e["service_id"]: e for e in snap["services"]}
            transports: dict[str, object] = {}

            def transport_for(service_id: str):
                if service_id == self.service_id:
                    return None
                found = transports.get(service_id)
                if found is None:
                    found = self._resolver(entries[service_id])
                    transports[service_id] = found
                return found

            self.configure_topology(
                [e["service_id"] for e in snap["services"] if e["service"] == "metadata"],
                [e["service_id"] for e in snap["services"] if e["service"] == "storage"],
                transport_for,
            )

    # -- record persistence --------------------------------------------------

    def _record_path(self, file_id: int) -> str:
        return os.path.join(self.records_dir, f"{file_id}.rec")

    def _rec_put_local(self, file_id: int, doc: dict):
        path = self._record_path(file_id)
        with open(path, "wb") as fh:
            fh.write(pack_json(doc))
        if self.use_xattr:
            try:
                os.setxattr(path, "user.ephemstore.path", doc["path"].encode())
            except OSError:
                pass

    def _rec_del_local(self, file_id: int) -> bool:
        try:
            os.unlink(self._record_path(file_id))
            return True
        except FileNotFoundError:
            return False

    def _record_peer(self, parent: str):
        shard = record_shard(parent, len(self._meta_ids))
        return self._meta_ids[shard]

    def _put_record(self, parent: str, meta: FileMeta):
        peer = self._record_peer(parent)
        transport = self._transport_for(peer)
        if transport is None:
            self._rec_put_local(meta.file_id, meta.to_doc())
        else:
            call(transport, REC_PUT, pack_json({"file_id": meta.file_id, "doc": meta.to_doc()}))

    def _del_record(self, parent: str, file_id: int):
        peer = self._record_peer(parent)
        transport = self._transport_for(peer)
        if transport is None:
            self._rec_del_local(file_id)
        else:
            call(transport, REC_DEL, pack_json({"file_id": file_id}))

    # -- namespace ops -------------------------------------------------------

    def _require_parent(self, path: str) -> tuple[str, str]:
        parent, name = split_parent(path)
        if parent in self._files:
            raise StoreNotDirError(f"parent of {path} is a file")
        if parent not in self._dirs:
            raise StoreMissingError(f"parent directory missing for {path}")
        return parent, name

    def _op_create(self, payload: bytes) -> bytes:
        doc = unpack_json(payload)
        path = normalize_path(doc.get("path"))
        stripe_size = int(doc.get("stripe_size") or self.stripe_size)
        if stripe_size <= 0:
            raise StoreBadRequestError("stripe_size must be > 0")
        self._topology()
        with self._lock:
            parent, name = self._require_parent(path)
            if path in self._files or path in self._dirs:
                raise StoreExistsError(f"path exists: {path}")
            if not self._storage_ids:
                raise StoreUnavailableError("no storage targets registered")
            meta = FileMeta(
                path=path,
                file_id=self._next_id,
                size_bytes=0,
                stripe=StripeMap(
                    file_id=self._next_id,
                    stripe_size_bytes=stripe_size,
                    targets=self._storage_ids,
                    start_target_index=start_index_for(path, len(self._storage_ids)),
                ),
            )
            self._put_record(parent, meta)
            self._next_id += 1
            self._files[path] = meta
            self._dirs[parent].add(name)
            return pack_json(meta.to_doc())

    def _op_mkdir(self, payload: bytes) -> bytes:
        path = normalize_path(unpack_json(payload).get("path"))
        with self._lock:
            parent, name = self._require_parent(path)
            if path in self._files or path in self._dirs:
                raise StoreExistsError(f"path exists: {path}")
            self._dirs[path] = set()
            self._dirs[parent].add(name)
            return pack_json({"kind": "directory", "path": path})

    def _op_stat(self, payload: bytes) -> bytes:
        path = normalize_path(unpack_json(payload).get("path"))
        with self._lock:
            meta = self._files.get(path)
            if meta is not None:
                return pack_json(meta.to_doc())
            if path in self._dirs:
                entries = len(self._dirs[path])
                return pack_json({"kind": "directory", "path": path, "entries": entries})
            raise StoreMissingError(f"no such path: {path}")

    def _op_set_size(self, payload: bytes) -> bytes:
        doc = unpack_json(payload)
        path = normalize_path(doc.get("path"))
        size = int(doc.get("size", -1))
        if size < 0:
            raise StoreBadRequestError("size must be >= 0")
        with self._lock:
            meta = self._files.get(path)
            if meta is None:
                raise StoreMissingError(f"no such file: {path}")
            meta.size_bytes = max(meta.size_bytes, size)
            return pack_json({"path": path, "size_bytes": meta.size_bytes})

    def _op_unlink(self, payload: bytes) -> bytes:
        path = normalize_path(unpack_json(payload).get("path"))
        self._topology()
        with self._lock:
            if path in self._dirs:
                raise StoreIsDirError(f"cannot unlink directory: {path}")
            meta = self._files.get(path)
            if meta is None:
                raise StoreMissingError(f"no such file: {path}")
            dropped = {"chunks": 0, "bytes": 0}
            for target_id in meta.stripe.targets:
                transport = self._transport_for(target_id)
                result = unpack_json(
                    call(transport, CHUNK_DROP, FILE_ID_HEADER.pack(meta.file_id))
                )
                dropped["chunks"] += result["chunks"]
                dropped["bytes"] += result["bytes"]
            parent, name = split_parent(path)
            self._del_record(parent, meta.file_id)
            del self._files[path]
            if parent in self._dirs:
                self._dirs[parent].discard(name)
            return pack_json(
                {"path": path, "dropped_chunks": dropped["chunks"], "dropped_bytes": dropped["bytes"]}
            )

    def _op_rmdir(self, payload: bytes) -> bytes:
        path = normalize_path(unpack_json(payload).get("path"))
        if path == "/":
            raise StoreBadRequestError("cannot remove the root directory")
        with self._lock:
            if path in self._files:
                raise StoreNotDirError(f"not a directory: {path}")
            children = self._dirs.get(path)
            if children is None:
                raise StoreMissingError(f"no such directory: {path}")
            if children:
                raise StoreNotEmptyError(
                    f"directory not empty: {path} ({len(children)} entries)"
                )
            del self._dirs[path]
            parent, name = split_parent(path)
            self._dirs[parent].discard(name)
            return pack_json({"path": path, "removed": True})

    def _op_list(self, payload: bytes) -> bytes:
        path = normalize_path(unpack_json(payload).get("path"))
        with self._lock:
            if path in self._files:
                raise StoreNotDirError(f"not a directory: {path}")
            children = self._dirs.get(path)
            if children is None:
                raise StoreMissingError(f"no such directory: {path}")
            base = "" if path == "/" else path
            dirs = sorted(n for n in children if f"{base}/{n}" in self._dirs)
            files = sorted(n for n in children if f"{base}/{n}" in self._files)
            return pack_json({"path": path, "dirs": dirs, "files": files})

    # -- record shard ops (issued by the namespace owner) ---------------------

    def _op_rec_put(self, payload: bytes) -> bytes:
        doc = unpack_json(payload)
        self._rec_put_local(int(doc["file_id"]), doc["doc"])
        return pack_json({"stored": doc["file_id"]})

    def _op_rec_del(self, payload: bytes) -> bytes:
        doc = unpack_json(payload)
        return pack_json({"removed": self._rec_del_local(int(doc["file_id"]))})
