"""Exception hierarchy shared across the package."""

from __future__ import annotations


class EphemstoreError(Exception):
    """Base class for all package errors."""


class InventoryError(EphemstoreError):
    """Inventory document is malformed or violates an invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AllocationError(EphemstoreError):
    """Allocation request cannot be satisfied or is misused."""


class PlanError(EphemstoreError):
    """Deployment policy cannot be applied to the allocation."""


class DeployError(EphemstoreError):
    """Deployment lifecycle failure."""


class PortCollisionError(DeployError):
    """A service port is already bound, typically by a previous deployment."""


class AttachError(DeployError):
    """Client attach failed or was attempted out of order."""


class StageError(EphemstoreError):
    """Stage-in/stage-out failure."""


class BenchError(EphemstoreError):
    """Benchmark misconfiguration or runtime failure."""


class VerificationError(BenchError):
    """Read-back data does not match the deterministic generator."""

    def __init__(self, path: str, offset: int, detail: str = ""):
        self.path = path
        self.offset = offset
        msg = f"verification mismatch in {path} at byte offset {offset}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class StoreError(EphemstoreError):
    """Data-manager operation failed; `code` mirrors the wire status byte."""

    code = 9  # ST_INTERNAL


class StoreBadRequestError(StoreError):
    code = 1


class StoreExistsError(StoreError):
    code = 2


class StoreMissingError(StoreError):
    code = 3


class StoreNotEmptyError(StoreError):
    code = 4


class StoreNotDirError(StoreError):
    code = 5


class StoreIsDirError(StoreError):
    code = 6


class StoreDuplicateError(StoreError):
    code = 7


class StoreUnavailableError(StoreError):
    code = 8


class StoreIOError(StoreError):
    """A service is unreachable or an I/O path failed; names the service."""

    code = 10
