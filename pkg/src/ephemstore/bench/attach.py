"""Benchmark attach points: the deployed store or a plain directory baseline.

Both expose the same per-worker handle surface, so every workload runs
unchanged against either.
"""

from __future__ import annotations

import errno
import os
import shutil

from ..errors import (
    StoreExistsError,
    StoreIsDirError,
    StoreMissingError,
    StoreNotDirError,
    StoreNotEmptyError,
    StoreIOError,
)
from ..ministore.client import Session


class StoreWorkerIO:
    """One worker's private session against the deployed data manager."""

    def __init__(self, session: Session):
        self.session = session

    def mkdir(self, path: str):
        self.session.mkdir(path)

    def rmdir(self, path: str):
        self.session.rmdir(path)

    def create(self, path: str, stripe_size: int | None = None):
        self.session.create(path, stripe_size=stripe_size)

    def unlink(self, path: str):
        self.session.unlink(path)

    def write(self, path: str, offset: int, data: bytes) -> int:
        return self.session.write(path, offset, data)

    def read(self, path: str, offset: int, length: int) -> bytes:
        return self.session.read(path, offset, length)

    def read_full(self, path: str) -> bytes:
        return self.session.read_full(path)

    def stat_size(self, path: str) -> int:
        meta = self.session.stat(path)
        if meta.kind != "file":
            raise StoreIsDirError(f"not a file: {path}")
        return meta.size_bytes

    def stat_kind(self, path: str) -> str:
        return self.session.stat(path).kind

    def exists(self, path: str) -> bool:
        return self.session.exists(path)

    def sync(self, path: str):
        self.session.sync(path)

    def ensure_dirs(self, path: str):
        parts = [p for p in path.strip("/").split("/") if p]
        current = ""
        for part in parts:
            current += "/" + part
            try:
                self.session.mkdir(current)
            except StoreExistsError:
                pass

    def remove_tree(self, path: str):
        try:
            kind = self.session.stat(path).kind
        except StoreMissingError:
            return
        if kind == "file":
            self.session.unlink(path)
            return
        dirs, files = self.session.listdir(path)
        base = path.rstrip("/")
        for name in files:
            self.session.unlink(f"{base}/{name}")
        for name in dirs:
            self.remove_tree(f"{base}/{name}")
        self.session.rmdir(path)

    def close(self):
        self.session.close()


class StoreBenchTarget:
    kind = "store"

    def __init__(self, session_factory):
        self._factory = session_factory

    def open_worker(self) -> StoreWorkerIO:
        return StoreWorkerIO(self._factory())


def _map_os_error(exc: OSError):
    if isinstance(exc, FileExistsError):
        return StoreExistsError(str(exc))
    if isinstance(exc, FileNotFoundError):
        return StoreMissingError(str(exc))
    if isinstance(exc, IsADirectoryError):
        return StoreIsDirError(str(exc))
    if isinstance(exc, NotADirectoryError):
        return StoreNotDirError(str(exc))
    if exc.errno in (errno.ENOTEMPTY, errno.EEXIST):
        return StoreNotEmptyError(str(exc))
    return StoreIOError(str(exc))


class DirWorkerIO:
    """The same op surface over a plain directory tree."""

    def __init__(self, root: str):
        self.root = root

    def _full(self, path: str) -> str:
        return os.path.join(self.root, path.lstrip("/"))

    def _wrap(self, fn, *args):
        try:
            return fn(*args)
        except OSError as exc:
            raise _map_os_error(exc)

    def mkdir(self, path: str):
        self._wrap(os.mkdir, self._full(path))

    def rmdir(self, path: str):
        self._wrap(os.rmdir, self._full(path))

    def create(self, path: str, stripe_size: int | None = None):
        def _create(full):
            os.close(os.open(full, os.O_CREAT | os.O_EXCL | os.O_WRONLY, 0o644))

        self._wrap(_create, self._full(path))

    def unlink(self, path: str):
        self._wrap(os.unlink, self._full(path))

    def write(self, path: str, offset: int, data: bytes) -> int:
        def _write(full):
            fd = os.open(full, os.O_WRONLY)
            try:
                return os.pwrite(fd, data, offset)
            finally:
                os.close(fd)

        return self._wrap(_write, self._full(path))

    def read(self, path: str, offset: int, length: int) -> bytes:
        def _read(full):
            fd = os.open(full, os.O_RDONLY)
            try:
                return os.pread(fd, length, offset)
            finally:
                os.close(fd)

        return self._wrap(_read, self._full(path))

    def read_full(self, path: str) -> bytes:
        return self.read(path, 0, self.stat_size(path))

    def stat_size(self, path: str) -> int:
        return self._wrap(os.path.getsize, self._full(path))

    def stat_kind(self, path: str) -> str:
        full = self._full(path)
        if os.path.isdir(full):
            return "directory"
        if os.path.isfile(full):
            return "file"
        raise StoreMissingError(f"no such path: {path}")

    def exists(self, path: str) -> bool:
        return os.path.exists(self._full(path))

    def sync(self, path: str):
        def _sync(full):
            fd = os.open(full, os.O_RDONLY)
            try:
                os.fsync(fd)
            finally:
                os.close(fd)

        self._wrap(_sync, self._full(path))

    def ensure_dirs(self, path: str):
        os.makedirs(self._full(path), exist_ok=True)

    def remove_tree(self, path: str):
        full = self._full(path)
        if os.path.isfile(full):
            os.unlink(full)
        else:
            shutil.rmtree(full, ignore_errors=True)

    def close(self):
        pass


class DirBenchTarget:
    kind = "dir"

    def __init__(self, root: str):
        self.root = os.path.abspath(root)
        os.makedirs(self.root, exist_ok=True)

    def open_worker(self) -> DirWorkerIO:
        return DirWorkerIO(self.root)
