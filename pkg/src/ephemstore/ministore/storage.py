"""Storage target: fixed-size chunk files under <data_dir>/chunks/."""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field

from ..errors import StoreBadRequestError
from .protocol import (
    CHUNK_DROP,
    CHUNK_READ,
    CHUNK_READ_HEADER,
    CHUNK_SYNC,
    CHUNK_WRITE,
    CHUNK_WRITE_HEADER,
    COUNT_HEADER,
    FILE_ID_HEADER,
    pack_json,
)
from .server import ServiceCore


@dataclass
class TargetState:
    target_id: str
    data_dir: str
    chunks: dict = field(default_factory=dict)  # (file_id, chunk_index) -> byte length


class StorageCore(ServiceCore):
    service = "storage"

    def __init__(self, service_id: str, data_dir: str):
        super().__init__(service_id)
        self.data_dir = data_dir
        self.chunks_dir = os.path.join(data_dir, "chunks")
        os.makedirs(self.chunks_dir, exist_ok=True)
        self._lengths: dict[tuple[int, int], int] = {}
        self._lock = threading.Lock()
        self.dispatch.update(
            {
                CHUNK_WRITE: self._op_write,
                CHUNK_READ: self._op_read,
                CHUNK_DROP: self._op_drop,
                CHUNK_SYNC: self._op_sync,
            }
        )

    def state(self) -> TargetState:
        with self._lock:
            return TargetState(self.service_id, self.data_dir, dict(self._lengths))

    def _chunk_path(self, file_id: int, chunk_index: int) -> str:
        return os.path.join(self.chunks_dir, f"{file_id}.{chunk_index}")

    def _op_write(self, payload: bytes) -> bytes:
        if len(payload) < CHUNK_WRITE_HEADER.size:
            raise StoreBadRequestError("short chunk-write header")
        file_id, chunk_index, offset = CHUNK_WRITE_HEADER.unpack_from(payload)
        data = payload[CHUNK_WRITE_HEADER.size :]
        fd = os.open(self._chunk_path(file_id, chunk_index), os.O_RDWR | os.O_CREAT, 0o644)
        try:
            written = os.pwrite(fd, data, offset)
        finally:
            os.close(fd)
        key = (file_id, chunk_index)
        with self._lock:
            self._lengths[key] = max(self._lengths.get(key, 0), offset + written)
        return COUNT_HEADER.pack(written)

    def _op_read(self, payload: bytes) -> bytes:
        if len(payload) != CHUNK_READ_HEADER.size:
            raise StoreBadRequestError("bad chunk-read header")
        file_id, chunk_index, offset, length = CHUNK_READ_HEADER.unpack(payload)
        path = self._chunk_path(file_id, chunk_index)
        try:
            fd = os.open(path, os.O_RDONLY)
        except FileNotFoundError:
            # never-written chunk: the client zero-fills
            return b""
        try:
            return os.pread(fd, length, offset)
        finally:
            os.close(fd)

    def _files_of(self, file_id: int) -> list[tuple[int, int]]:
        with self._lock:
            return [key for key in self._lengths if key[0] == file_id]

    def _op_drop(self, payload: bytes) -> bytes:
        (file_id,) = FILE_ID_HEADER.unpack(payload)
        dropped = 0
        freed = 0
        for key in self._files_of(file_id):
            path = self._chunk_path(*key)
            try:
                freed += os.path.getsize(path)
                os.unlink(path)
            except FileNotFoundError:
                pass
            with self._lock:
                self._lengths.pop(key, None)
            dropped += 1
        return pack_json({"chunks": dropped, "bytes": freed})

    def _op_sync(self, payload: bytes) -> bytes:
        (file_id,) = FILE_ID_HEADER.unpack(payload)
        synced = 0
        for key in self._files_of(file_id):
            try:
                fd = os.open(self._chunk_path(*key), os.O_RDONLY)
            except FileNotFoundError:
                continue
            try:
                os.fsync(fd)
            finally:
                os.close(fd)
            synced += 1
        return pack_json({"synced": synced})
