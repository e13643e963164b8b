"""Stripe math: mapping byte ranges onto fixed-size chunks and targets."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from ..errors import StoreBadRequestError


@dataclass(frozen=True)
class StripeMap:
    file_id: int
    stripe_size_bytes: int
    targets: tuple[str, ...]
    start_target_index: int

    def __post_init__(self):
        if self.stripe_size_bytes <= 0:
            raise StoreBadRequestError("stripe_size_bytes must be > 0")
        if not self.targets:
            raise StoreBadRequestError("stripe map needs at least one target")
        if len(set(self.targets)) != len(self.targets):
            raise StoreBadRequestError("stripe map targets must be unique")
        if not 0 <= self.start_target_index < len(self.targets):
            raise StoreBadRequestError(
                f"start_target_index {self.start_target_index} out of range"
            )

    def target_of_chunk(self, chunk_index: int) -> str:
        return self.targets[(self.start_target_index + chunk_index) % len(self.targets)]

    def to_doc(self) -> dict:
        return {
            "file_id": self.file_id,
            "stripe_size_bytes": self.stripe_size_bytes,
            "targets": list(self.targets),
            "start_target_index": self.start_target_index,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "StripeMap":
        return cls(
            file_id=doc["file_id"],
            stripe_size_bytes=doc["stripe_size_bytes"],
            targets=tuple(doc["targets"]),
            start_target_index=doc["start_target_index"],
        )


def start_index_for(path: str, target_count: int) -> int:
    """Deterministic start target for a path, stable across processes."""
    digest = hashlib.blake2b(path.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % target_count


def chunk_spans(offset: int, length: int, stripe_size: int):
    """Split [offset, offset+length) at stripe boundaries.

    Yields (chunk_index, offset_in_chunk, span_length, offset_in_buffer).
    """
    if offset < 0 or length < 0:
        raise StoreBadRequestError("offset and length must be >= 0")
    consumed = 0
    while consumed < length:
        absolute = offset + consumed
        chunk_index = absolute // stripe_size
        offset_in_chunk = absolute % stripe_size
        span = min(stripe_size - offset_in_chunk, length - consumed)
        yield chunk_index, offset_in_chunk, span, consumed
        consumed += span
